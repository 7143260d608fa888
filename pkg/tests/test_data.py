import io
import json
import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmfbal import (
    BadMagic,
    EmbeddingDataset,
    FormatError,
    InsufficientSamples,
    LabelOutOfRange,
    LongTailProfile,
    RngHandle,
    Truncated,
    VersionMismatch,
    ZeroVector,
    class_counts,
    longtail_counts,
    make_longtail_subset,
    normalize_all,
    read_embeddings,
    read_model,
    write_embeddings,
    write_model,
)


def random_dataset(gen, n=20, d=6, c=4):
    matrix = gen.standard_normal((n, d)).astype(np.float32)
    labels = gen.integers(0, c, size=n).astype(np.uint32)
    return EmbeddingDataset(matrix, labels, c)


def roundtrip(ds):
    buf = io.BytesIO()
    write_embeddings(ds, buf)
    buf.seek(0)
    return read_embeddings(buf, split=ds.split)


class TestRoundTrip:
    def test_bitwise_identity(self, tmp_path):
        ds = random_dataset(RngHandle(0).gen)
        path = tmp_path / "ds.vmfe"
        write_embeddings(ds, path)
        back = read_embeddings(path)
        assert back.matrix.tobytes() == ds.matrix.tobytes()
        assert back.labels.tobytes() == ds.labels.tobytes()
        assert back.num_classes == ds.num_classes
        assert back.dim == ds.dim

    @settings(max_examples=30, deadline=None)
    @given(st.integers(min_value=0, max_value=2**32 - 1),
           st.integers(min_value=0, max_value=50),
           st.integers(min_value=2, max_value=20),
           st.integers(min_value=1, max_value=9))
    def test_bitwise_identity_randomized(self, seed, n, d, c):
        gen = RngHandle(seed).gen
        matrix = gen.standard_normal((n, d)).astype(np.float32)
        labels = gen.integers(0, c, size=n).astype(np.uint32) if n else np.empty(0, np.uint32)
        ds = EmbeddingDataset(matrix, labels, c)
        back = roundtrip(ds)
        assert back.matrix.tobytes() == ds.matrix.tobytes()
        assert back.labels.tobytes() == ds.labels.tobytes()

    def test_sidecar_names(self, tmp_path):
        ds = random_dataset(RngHandle(1).gen, c=3)
        ds.class_names = {0: "apple", 1: "banana", 2: "cherry"}
        path = tmp_path / "named.vmfe"
        write_embeddings(ds, path)
        sidecar = tmp_path / "named.classes.json"
        assert sidecar.exists()
        assert json.loads(sidecar.read_text())["1"] == "banana"
        assert read_embeddings(path).class_names == ds.class_names


class TestFormatErrors:
    def _bytes(self, ds):
        buf = io.BytesIO()
        write_embeddings(ds, buf)
        return bytearray(buf.getvalue())

    def test_bad_magic(self):
        raw = self._bytes(random_dataset(RngHandle(2).gen))
        raw[0] = ord("X")
        with pytest.raises(BadMagic):
            read_embeddings(io.BytesIO(bytes(raw)))

    def test_version_mismatch(self):
        raw = self._bytes(random_dataset(RngHandle(2).gen))
        raw[4:8] = struct.pack("<I", 9)
        with pytest.raises(VersionMismatch):
            read_embeddings(io.BytesIO(bytes(raw)))

    def test_truncated_payload(self):
        raw = self._bytes(random_dataset(RngHandle(2).gen))
        with pytest.raises(Truncated):
            read_embeddings(io.BytesIO(bytes(raw[:-5])))

    def test_declared_rows_exceed_payload(self):
        ds = random_dataset(RngHandle(2).gen)
        raw = self._bytes(ds)
        raw[13:21] = struct.pack("<Q", ds.n + 10)
        with pytest.raises(Truncated):
            read_embeddings(io.BytesIO(bytes(raw)))

    def test_label_out_of_range(self):
        ds = random_dataset(RngHandle(2).gen, c=4)
        raw = self._bytes(ds)
        raw[21:25] = struct.pack("<I", 1)  # claim a single class
        with pytest.raises(LabelOutOfRange):
            read_embeddings(io.BytesIO(bytes(raw)))

    def test_unknown_role(self):
        raw = self._bytes(random_dataset(RngHandle(2).gen))
        raw[8] = 7
        with pytest.raises(FormatError):
            read_embeddings(io.BytesIO(bytes(raw)))

    def test_trailing_bytes(self):
        raw = self._bytes(random_dataset(RngHandle(2).gen))
        with pytest.raises(FormatError):
            read_embeddings(io.BytesIO(bytes(raw) + b"z"))

    def test_model_file_rejected_by_embedding_reader(self):
        buf = io.BytesIO()
        write_model(np.zeros((3, 4), np.float32), np.zeros(3, np.float32), buf)
        buf.seek(0)
        with pytest.raises(FormatError):
            read_embeddings(buf)


class TestModelContainer:
    def test_round_trip(self, tmp_path):
        gen = RngHandle(3).gen
        w = gen.standard_normal((5, 7)).astype(np.float32)
        b = gen.standard_normal(5).astype(np.float32)
        path = tmp_path / "model.vmfe"
        write_model(w, b, path)
        w2, b2 = read_model(path)
        assert w2.tobytes() == w.tobytes()
        assert b2.tobytes() == b.tobytes()

    def test_embeddings_rejected_by_model_reader(self):
        buf = io.BytesIO()
        write_embeddings(random_dataset(RngHandle(4).gen), buf)
        buf.seek(0)
        with pytest.raises(FormatError):
            read_model(buf)


class TestNormalizeAll:
    def test_three_four_five(self):
        ds = EmbeddingDataset(np.array([[3.0, 4.0]], np.float32),
                              np.array([0], np.uint32), 1)
        out = normalize_all(ds)
        assert np.allclose(out.matrix, [[0.6, 0.8]], atol=1e-7)

    def test_idempotent(self):
        ds = random_dataset(RngHandle(5).gen)
        once = normalize_all(ds)
        twice = normalize_all(once)
        assert np.abs(twice.matrix - once.matrix).max() <= 1e-7

    def test_rows_become_unit(self):
        out = normalize_all(random_dataset(RngHandle(6).gen))
        norms = np.linalg.norm(out.matrix.astype(np.float64), axis=1)
        assert np.abs(norms - 1.0).max() <= 1e-6

    def test_zero_row_names_index(self):
        matrix = np.ones((3, 4), np.float32)
        matrix[1] = 0.0
        ds = EmbeddingDataset(matrix, np.zeros(3, np.uint32), 1)
        with pytest.raises(ZeroVector) as err:
            normalize_all(ds)
        assert err.value.row == 1
        assert "row 1" in str(err.value)

    def test_input_untouched(self):
        ds = random_dataset(RngHandle(7).gen)
        before = ds.matrix.copy()
        normalize_all(ds)
        assert np.array_equal(ds.matrix, before)


class TestClassCounts:
    def test_empty(self):
        ds = EmbeddingDataset(np.empty((0, 3), np.float32), np.empty(0, np.uint32), 4)
        assert class_counts(ds) == {}

    def test_known_labels(self):
        ds = EmbeddingDataset(np.zeros((5, 2), np.float32),
                              np.array([0, 2, 2, 1, 2], np.uint32), 3)
        assert class_counts(ds) == {0: 1, 1: 1, 2: 3}

    def test_sum_equals_n(self):
        ds = random_dataset(RngHandle(8).gen, n=37)
        assert sum(class_counts(ds).values()) == 37


def balanced_dataset(gen, per_class, d, c):
    matrix = gen.standard_normal((per_class * c, d)).astype(np.float32)
    labels = np.repeat(np.arange(c, dtype=np.uint32), per_class)
    return EmbeddingDataset(matrix, labels, c)


class TestLongTail:
    def test_profile_counts_cifar_style(self):
        counts = longtail_counts(LongTailProfile(ir=100.0, n_max=500), 100)
        assert counts[0] == 500
        assert counts[99] == 5
        assert counts[50] == 49  # round(500 * 100^(-50/99))

    def test_ir_one_keeps_everything(self):
        ds = balanced_dataset(RngHandle(9).gen, 10, 4, 5)
        out = make_longtail_subset(ds, LongTailProfile(ir=1.0, n_max=10), RngHandle(0))
        assert class_counts(out) == {k: 10 for k in range(5)}

    def test_monotone_and_ratio(self):
        ds = balanced_dataset(RngHandle(10).gen, 60, 4, 8)
        out = make_longtail_subset(ds, LongTailProfile(ir=20.0, n_max=60), RngHandle(1))
        counts = class_counts(out)
        ordered = [counts[k] for k in sorted(counts)]
        assert ordered == sorted(ordered, reverse=True)
        assert ordered[0] == 60
        assert ordered[-1] == 3  # 60/20

    def test_deterministic_under_seed(self):
        ds = balanced_dataset(RngHandle(11).gen, 30, 5, 6)
        profile = LongTailProfile(ir=10.0, n_max=30)
        a = make_longtail_subset(ds, profile, RngHandle(42))
        b = make_longtail_subset(ds, profile, RngHandle(42))
        assert np.array_equal(a.matrix, b.matrix)
        assert np.array_equal(a.labels, b.labels)

    def test_rng_defaults_to_profile_seed(self):
        ds = balanced_dataset(RngHandle(11).gen, 30, 5, 6)
        profile = LongTailProfile(ir=10.0, n_max=30, seed=42)
        a = make_longtail_subset(ds, profile)
        b = make_longtail_subset(ds, profile, RngHandle(42))
        assert np.array_equal(a.matrix, b.matrix)

    def test_rows_survive_bitwise(self):
        ds = balanced_dataset(RngHandle(12).gen, 20, 4, 3)
        out = make_longtail_subset(ds, LongTailProfile(ir=5.0, n_max=20), RngHandle(2))
        pool = {row.tobytes() for row in ds.matrix}
        assert all(row.tobytes() in pool for row in out.matrix)

    def test_insufficient_samples(self):
        ds = balanced_dataset(RngHandle(13).gen, 5, 4, 3)
        with pytest.raises(InsufficientSamples):
            make_longtail_subset(ds, LongTailProfile(ir=2.0, n_max=50), RngHandle(0))

    def test_floor_of_one(self):
        counts = longtail_counts(LongTailProfile(ir=1e6, n_max=10), 50)
        assert min(counts) == 1

    def test_bad_profile(self):
        with pytest.raises(ValueError):
            LongTailProfile(ir=0.5, n_max=10)
        with pytest.raises(ValueError):
            LongTailProfile(ir=10.0, n_max=10, kind="zipf")


class TestDatasetValidation:
    def test_label_beyond_class_count(self):
        with pytest.raises(LabelOutOfRange):
            EmbeddingDataset(np.zeros((2, 3), np.float32),
                             np.array([0, 5], np.uint32), 3)

    def test_label_row_mismatch(self):
        with pytest.raises(ValueError):
            EmbeddingDataset(np.zeros((2, 3), np.float32),
                             np.array([0], np.uint32), 3)
