import io
import math

import numpy as np
import pytest

from vmfbal import (
    EmbeddingDataset,
    LinearClassifier,
    RngHandle,
    TrainConfig,
    TrainingError,
    VmfParams,
    evaluate,
    group_map_from_counts,
    loss_and_grad,
    predict,
    predict_many,
    sample_vmf,
    train_logreg,
)


def e(i, d):
    v = np.zeros(d)
    v[i] = 1.0
    return v


def random_instance(seed, n=20, d=5, c=3):
    gen = RngHandle(seed).gen
    x = gen.standard_normal((n, d))
    y = gen.integers(0, c, size=n)
    params = gen.standard_normal(c * d + c)
    return params, x, y, c


def fd_gradient(params, x, y, c, lam, h=1e-5):
    grad = np.empty_like(params)
    for i in range(params.size):
        up, down = params.copy(), params.copy()
        up[i] += h
        down[i] -= h
        grad[i] = (loss_and_grad(up, x, y, c, lam)[0]
                   - loss_and_grad(down, x, y, c, lam)[0]) / (2 * h)
    return grad


def dataset_from(x, y, c, split="train"):
    return EmbeddingDataset(np.asarray(x, np.float32),
                            np.asarray(y, np.uint32), c, split=split)


class TestLossAndGrad:
    def test_zero_params_uniform_softmax(self):
        gen = RngHandle(0).gen
        x = gen.standard_normal((10, 4))
        y = np.array([0, 1] * 5)
        loss, _ = loss_and_grad(np.zeros(2 * 4 + 2), x, y, 2, 0.0)
        assert loss == pytest.approx(math.log(2.0), rel=1e-12)

    def test_gradient_matches_finite_differences(self):
        params, x, y, c = random_instance(1)
        loss, grad = loss_and_grad(params, x, y, c, 0.05)
        fd = fd_gradient(params, x, y, c, 0.05)
        assert np.linalg.norm(grad - fd) / np.linalg.norm(fd) <= 1e-5

    def test_penalty_linearity_in_lambda(self):
        params, x, y, c = random_instance(2)
        d = x.shape[1]
        w_norm2 = float(np.sum(params[: c * d] ** 2))
        lam = 0.3
        l1, _ = loss_and_grad(params, x, y, c, lam)
        l2, _ = loss_and_grad(params, x, y, c, 2 * lam)
        assert l2 - l1 == pytest.approx(0.5 * lam * w_norm2, rel=1e-12)

    def test_bias_unpenalized(self):
        params, x, y, c = random_instance(3)
        d = x.shape[1]
        bumped = params.copy()
        bumped[c * d:] += 10.0  # shift all biases equally: softmax unchanged
        l1, _ = loss_and_grad(params, x, y, c, 1.0)
        l2, _ = loss_and_grad(bumped, x, y, c, 1.0)
        assert l2 == pytest.approx(l1, rel=1e-9)

    def test_label_out_of_range(self):
        params, x, y, c = random_instance(4)
        y = y.copy()
        y[0] = c
        with pytest.raises(ValueError):
            loss_and_grad(params, x, y, c, 0.0)

    def test_empty_data_rejected(self):
        with pytest.raises(ValueError):
            loss_and_grad(np.zeros(8), np.empty((0, 3)), np.empty(0, int), 2, 0.0)


class TestTrainLogreg:
    def test_separable_toy_reaches_full_accuracy(self):
        # two arcs on the unit circle separated by a wide margin
        gen = RngHandle(5).gen
        angles_a = gen.uniform(-0.5, 0.5, size=40)
        angles_b = gen.uniform(math.pi - 0.5, math.pi + 0.5, size=40)
        x = np.concatenate([
            np.stack([np.cos(angles_a), np.sin(angles_a)], axis=1),
            np.stack([np.cos(angles_b), np.sin(angles_b)], axis=1),
        ])
        y = np.array([0] * 40 + [1] * 40)
        ds = dataset_from(x, y, 2)
        model = train_logreg(ds, TrainConfig(l2_strength=1e-6))
        assert (predict_many(model, x) == y).mean() == 1.0

    def test_random_labels_memorized_but_not_generalized(self):
        gen = RngHandle(6).gen
        c, d = 4, 20
        x_train = gen.standard_normal((60, d))
        y_train = gen.integers(0, c, size=60)
        model = train_logreg(dataset_from(x_train, y_train, c),
                             TrainConfig(l2_strength=1e-8))
        train_acc = (predict_many(model, x_train) == y_train).mean()
        assert train_acc > 1.5 / c

        n_test = 2000
        x_test = gen.standard_normal((n_test, d))
        y_test = gen.integers(0, c, size=n_test)
        test_acc = (predict_many(model, x_test) == y_test).mean()
        p = 1.0 / c
        band = 3.0 * math.sqrt(p * (1 - p) / n_test)
        assert abs(test_acc - p) <= band

    def test_final_loss_not_above_zero_init(self):
        gen = RngHandle(7).gen
        x = gen.standard_normal((50, 6))
        y = gen.integers(0, 3, size=50)
        ds = dataset_from(x, y, 3)
        model = train_logreg(ds)
        lam = 1.0 / 50
        params = np.concatenate([model.weights.ravel(), model.biases])
        final, _ = loss_and_grad(params, x.astype(np.float64), y, 3, lam)
        zero, _ = loss_and_grad(np.zeros_like(params), x.astype(np.float64), y, 3, lam)
        assert final <= zero

    def test_loss_monotone_over_accepted_iterates(self):
        gen = RngHandle(8).gen
        x = gen.standard_normal((80, 5))
        y = gen.integers(0, 3, size=80)
        trace: list[float] = []
        train_logreg(dataset_from(x, y, 3), loss_trace=trace)
        diffs = np.diff(np.array(trace))
        assert (diffs <= 1e-10).all()

    def test_deterministic(self):
        gen = RngHandle(9).gen
        x = gen.standard_normal((40, 4))
        y = gen.integers(0, 2, size=40)
        a = train_logreg(dataset_from(x, y, 2))
        b = train_logreg(dataset_from(x, y, 2))
        assert np.array_equal(a.weights, b.weights)
        assert np.array_equal(a.biases, b.biases)

    def test_label_permutation_equivariance(self):
        gen = RngHandle(10).gen
        c, d, n = 3, 6, 90
        x = sample_vmf(VmfParams(e(0, d), 5.0), n, RngHandle(11))
        y = gen.integers(0, c, size=n)
        perm = np.array([2, 0, 1])
        a = train_logreg(dataset_from(x, y, c))
        b = train_logreg(dataset_from(x, perm[y], c))
        assert np.allclose(b.weights[perm], a.weights, atol=1e-4)
        acc_a = (predict_many(a, x) == y).mean()
        acc_b = (predict_many(b, x) == perm[y]).mean()
        assert acc_a == acc_b

    def test_single_class_rejected(self):
        ds = dataset_from(np.ones((5, 3)), np.zeros(5, int), 2)
        with pytest.raises(TrainingError):
            train_logreg(ds)

    def test_non_finite_features_rejected(self):
        x = np.ones((4, 3))
        x[0, 0] = np.nan
        with pytest.raises(TrainingError):
            train_logreg(dataset_from(x, [0, 0, 1, 1], 2))


class TestPredict:
    def test_zero_model_tie_breaks_to_class_zero(self):
        model = LinearClassifier(np.zeros((3, 4)), np.zeros(3))
        assert predict(model, e(0, 4)) == 0

    def test_dominant_bias_wins(self):
        model = LinearClassifier(np.zeros((3, 4)), np.array([0.0, 100.0, 0.0]))
        assert predict(model, e(1, 4)) == 1

    def test_matches_direct_score_argmax(self):
        gen = RngHandle(12).gen
        model = LinearClassifier(gen.standard_normal((5, 7)), gen.standard_normal(5))
        for _ in range(30):
            x = gen.standard_normal(7)
            scores = model.weights @ x + model.biases
            assert predict(model, x) == int(np.argmax(scores))

    def test_tie_break_is_lowest_index(self):
        w = np.zeros((4, 3))
        w[1] = e(0, 3)
        w[3] = e(0, 3)
        model = LinearClassifier(w, np.zeros(4))
        assert predict(model, e(0, 3)) == 1

    def test_dimension_mismatch(self):
        model = LinearClassifier(np.zeros((2, 4)), np.zeros(2))
        with pytest.raises(ValueError):
            predict(model, e(0, 5))


class TestEvaluate:
    def _axis_test_set(self, c, d, per_class):
        x = np.concatenate([np.tile(e(i, d), (per_class, 1)) for i in range(c)])
        y = np.repeat(np.arange(c), per_class)
        return dataset_from(x, y, c, split="test")

    def test_perfect_predictor(self):
        c, d = 4, 4
        model = LinearClassifier(np.eye(c, d) * 10.0, np.zeros(c))
        test = self._axis_test_set(c, d, 5)
        report = evaluate(model, test, {0: "head", 1: "medium", 2: "tail", 3: "tail"})
        assert report.overall == 1.0
        assert report.groups == {"head": 1.0, "medium": 1.0, "tail": 1.0}
        assert np.array_equal(report.confusion, np.eye(c, dtype=int) * 5)

    def test_constant_predictor_on_balanced_test(self):
        c, d = 5, 6
        model = LinearClassifier(np.zeros((c, d)), np.array([0.0, 50.0, 0, 0, 0]))
        report = evaluate(model, self._axis_test_set(c, d, 8))
        assert report.overall == pytest.approx(1.0 / c)

    def test_overall_is_weighted_group_mean(self):
        gen = RngHandle(13).gen
        c, d = 6, 8
        model = LinearClassifier(gen.standard_normal((c, d)), gen.standard_normal(c))
        x = gen.standard_normal((200, d))
        x /= np.linalg.norm(x, axis=1, keepdims=True)
        y = gen.integers(0, c, size=200)
        test = dataset_from(x, y, c, split="test")
        group_map = {0: "head", 1: "head", 2: "medium", 3: "tail", 4: "tail"}
        report = evaluate(model, test, group_map)  # class 5 is ungrouped
        weights = {name: 0 for name in report.groups}
        correct = {name: 0.0 for name in report.groups}
        members = {cls: group_map.get(cls, "ungrouped") for cls in range(c)}
        preds = predict_many(model, x)
        for cls in range(c):
            mask = y == cls
            weights[members[cls]] += int(mask.sum())
            correct[members[cls]] += int((preds[mask] == cls).sum())
        recomputed = sum(correct.values()) / sum(weights.values())
        assert report.overall == pytest.approx(recomputed, rel=1e-12)
        for name in report.groups:
            assert report.groups[name] == pytest.approx(correct[name] / weights[name],
                                                        rel=1e-12)

    def test_per_class_nan_for_absent_classes(self):
        model = LinearClassifier(np.eye(3, 4), np.zeros(3))
        x = np.tile(e(0, 4), (5, 1))
        test = dataset_from(x, np.zeros(5, int), 3, split="test")
        report = evaluate(model, test)
        assert report.per_class[0] == 1.0
        assert np.isnan(report.per_class[1]) and np.isnan(report.per_class[2])

    def test_empty_test_rejected(self):
        model = LinearClassifier(np.eye(2, 3), np.zeros(2))
        with pytest.raises(ValueError):
            evaluate(model, dataset_from(np.empty((0, 3)), np.empty(0, int), 2))

    def test_labels_beyond_model_range(self):
        model = LinearClassifier(np.eye(2, 3), np.zeros(2))
        test = dataset_from(np.ones((2, 3)), [0, 2], 3, split="test")
        with pytest.raises(ValueError):
            evaluate(model, test)


class TestGroupMap:
    def test_default_thresholds(self):
        counts = {0: 101, 1: 100, 2: 20, 3: 19, 4: 500}
        gm = group_map_from_counts(counts)
        assert gm == {0: "head", 1: "medium", 2: "medium", 3: "tail", 4: "head"}

    def test_custom_thresholds(self):
        gm = group_map_from_counts({0: 6, 1: 5, 2: 2}, head_over=5, tail_under=3)
        assert gm == {0: "head", 1: "medium", 2: "tail"}


class TestModelSerialization:
    def test_save_load_round_trip(self):
        gen = RngHandle(14).gen
        model = LinearClassifier(gen.standard_normal((3, 5)), gen.standard_normal(3))
        buf = io.BytesIO()
        model.save(buf)
        buf.seek(0)
        back = LinearClassifier.load(buf)
        # storage is f32; reload must match the f32 cast exactly
        assert np.array_equal(back.weights, model.weights.astype(np.float32))
        assert np.array_equal(back.biases, model.biases.astype(np.float32))
