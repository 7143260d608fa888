"""Multinomial logistic regression trained with L-BFGS, plus evaluation.

The objective is mean softmax cross-entropy with an L2 penalty on the
weight matrix only (biases are free).  Training starts from zero and is
fully deterministic.  Evaluation reports top-1 accuracy overall, per
class, and per class group (head/medium/tail by training cardinality).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Mapping

import numpy as np
from scipy.optimize import minimize

from . import data as _data


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    """Optimizer settings; l2_strength = None resolves to 1/N at fit time."""

    l2_strength: float | None = None
    max_iterations: int = 1000
    gradient_tolerance: float = 1e-6
    history_size: int = 10


@dataclass
class LinearClassifier:
    weights: np.ndarray  # (C, d)
    biases: np.ndarray  # (C,)

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.biases = np.asarray(self.biases, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] < 2:
            raise ValueError("weights must be (C, d) with C >= 2")
        if self.biases.shape != (self.weights.shape[0],):
            raise ValueError("biases must have one entry per class")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.biases).all()):
            raise ValueError("classifier parameters must be finite")

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.weights.shape[1]

    def scores(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=np.float64)
        return xs @ self.weights.T + self.biases

    def save(self, path: str | Path | BinaryIO) -> None:
        _data.write_model(self.weights, self.biases, path)

    @classmethod
    def load(cls, path: str | Path | BinaryIO) -> "LinearClassifier":
        weights, biases = _data.read_model(path)
        return cls(weights, biases)


@dataclass
class EvalReport:
    overall: float
    per_class: np.ndarray  # (C,), NaN where a class has no test samples
    groups: dict[str, float]
    confusion: np.ndarray  # (C, C) rows = true class, cols = predicted


def loss_and_grad(params: np.ndarray, features: np.ndarray, labels: np.ndarray,
                  num_classes: int, l2_strength: float) -> tuple[float, np.ndarray]:
    """Penalized cross-entropy and its analytic gradient.

    ``params`` is the flattened (C, d) weight matrix followed by the C
    biases.  The penalty (l2/2)*||W||_F^2 leaves biases untouched.
    """
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels)
    n, d = x.shape
    if n == 0:
        raise ValueError("cannot evaluate the loss on an empty dataset")
    if y.size and (int(y.min()) < 0 or int(y.max()) >= num_classes):
        raise ValueError(f"labels must lie in [0, {num_classes})")
    c = num_classes
    w = params[: c * d].reshape(c, d)
    b = params[c * d:]

    scores = x @ w.T + b
    scores -= scores.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(scores).sum(axis=1))
    loss = float(np.mean(log_z - scores[np.arange(n), y])
                 + 0.5 * l2_strength * np.sum(w * w))

    probs = np.exp(scores - log_z[:, None])
    probs[np.arange(n), y] -= 1.0
    probs /= n
    grad_w = probs.T @ x + l2_strength * w
    grad_b = probs.sum(axis=0)
    return loss, np.concatenate([grad_w.ravel(), grad_b])


def train_logreg(data, cfg: TrainConfig | None = None, rng=None,
                 loss_trace: list[float] | None = None) -> LinearClassifier:
    """Fit the linear head on any object with .matrix/.labels/.num_classes.

    L-BFGS from zero initialization (so ``rng`` is accepted for interface
    symmetry but never consumed), stopping when the gradient infinity
    norm drops below the configured tolerance.
    """
    cfg = cfg or TrainConfig()
    x = np.asarray(data.matrix, dtype=np.float64)
    y = np.asarray(data.labels, dtype=np.int64)
    c = int(data.num_classes)
    if np.unique(y).size < 2:
        raise TrainingError("training needs at least 2 classes present")
    if not np.isfinite(x).all():
        raise TrainingError("training features contain non-finite values")
    lam = cfg.l2_strength if cfg.l2_strength is not None else 1.0 / x.shape[0]
    d = x.shape[1]

    def objective(params: np.ndarray) -> tuple[float, np.ndarray]:
        loss, grad = loss_and_grad(params, x, y, c, lam)
        if not math.isfinite(loss):
            raise TrainingError(f"non-finite loss encountered (loss={loss})")
        return loss, grad

    callback = None
    if loss_trace is not None:
        callback = lambda params: loss_trace.append(objective(params)[0])

    result = minimize(
        objective,
        np.zeros(c * d + c),
        jac=True,
        method="L-BFGS-B",
        callback=callback,
        options={
            "maxiter": cfg.max_iterations,
            "maxcor": cfg.history_size,
            "gtol": cfg.gradient_tolerance,
            "ftol": 1e-15,  # let the gradient test drive termination
        },
    )
    if not np.isfinite(result.fun) or not np.isfinite(result.x).all():
        raise TrainingError(f"optimizer diverged: {result.message}")
    return LinearClassifier(result.x[: c * d].reshape(c, d), result.x[c * d:])


def predict(model: LinearClassifier, x: np.ndarray) -> int:
    """Highest-scoring class; ties resolve to the lowest class index."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.dim,):
        raise ValueError(f"dimension mismatch: got {x.shape}, expected ({model.dim},)")
    return int(np.argmax(model.weights @ x + model.biases))


def predict_many(model: LinearClassifier, xs: np.ndarray) -> np.ndarray:
    return np.argmax(model.scores(xs), axis=1)


def group_map_from_counts(counts: Mapping[int, int], head_over: int = 100,
                          tail_under: int = 20) -> dict[int, str]:
    """Head/medium/tail assignment from training-set class cardinalities."""
    out = {}
    for cls, n in counts.items():
        if n > head_over:
            out[int(cls)] = "head"
        elif n < tail_under:
            out[int(cls)] = "tail"
        else:
            out[int(cls)] = "medium"
    return out


def evaluate(model: LinearClassifier, test,
             group_map: Mapping[int, str] | None = None) -> EvalReport:
    """Top-1 accuracy report over a labeled test set.

    Classes missing from ``group_map`` count toward an "ungrouped"
    bucket; group accuracies weight every test sample equally.
    """
    if test.n == 0:
        raise ValueError("test set is empty")
    y = np.asarray(test.labels, dtype=np.int64)
    if int(y.max()) >= model.num_classes:
        raise ValueError("test labels exceed the model's class range")
    preds = predict_many(model, test.matrix)
    c = model.num_classes
    confusion = np.zeros((c, c), dtype=np.int64)
    np.add.at(confusion, (y, preds), 1)
    overall = float(np.trace(confusion) / confusion.sum())

    totals = confusion.sum(axis=1)
    per_class = np.where(totals > 0, np.diag(confusion) / np.maximum(totals, 1), np.nan)

    groups: dict[str, float] = {}
    if group_map is not None:
        assignment = {int(k): v for k, v in group_map.items()}
        buckets: dict[str, list[int]] = {}
        for cls in range(c):
            buckets.setdefault(assignment.get(cls, "ungrouped"), []).append(cls)
        for name, members in buckets.items():
            weight = totals[members].sum()
            if weight > 0:
                groups[name] = float(np.diag(confusion)[members].sum() / weight)
    return EvalReport(overall, per_class, groups, confusion)
