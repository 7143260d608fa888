"""Embedding datasets: binary container I/O, normalization, long-tail subsets.

File container (little-endian, also reused for linear-classifier weights):

    bytes 0-3   magic "VMFE"
    bytes 4-7   u32 version (currently 1)
    byte  8     u8 role: 0 = embeddings, 1 = model
    bytes 9-12  u32 d (embedding dimension)
    bytes 13-20 u64 N (rows; equals C for role 1)
    bytes 21-24 u32 C (class count)
    role 0: N x u32 labels, then N*d f32 row-major
    role 1: C*d f32 weights row-major, then C f32 biases

An optional sidecar ``<name>.classes.json`` maps class ids to display
names.
"""
from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import BinaryIO

import numpy as np

from .rng import RngHandle

MAGIC = b"VMFE"
VERSION = 1
ROLE_EMBEDDINGS = 0
ROLE_MODEL = 1

_HEADER = struct.Struct("<4sIBIQI")


class FormatError(ValueError):
    """Base class for container-format violations."""


class BadMagic(FormatError):
    pass


class VersionMismatch(FormatError):
    pass


class Truncated(FormatError):
    pass


class LabelOutOfRange(FormatError):
    pass


class ZeroVector(ValueError):
    """A row with zero norm cannot be normalized."""

    def __init__(self, row: int):
        self.row = row
        super().__init__(f"row {row} has zero norm and cannot be normalized")


class InsufficientSamples(ValueError):
    pass


@dataclass
class EmbeddingDataset:
    """Labeled embedding matrix; the unit of exchange between pipeline stages."""

    matrix: np.ndarray  # (N, d) float32
    labels: np.ndarray  # (N,) uint32
    num_classes: int
    class_names: dict[int, str] | None = None
    split: str = "train"

    def __post_init__(self) -> None:
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint32)
        if self.matrix.ndim != 2:
            raise ValueError(f"matrix must be 2-D, got shape {self.matrix.shape}")
        if self.labels.shape != (self.matrix.shape[0],):
            raise ValueError("labels must have one entry per matrix row")
        if self.labels.size and int(self.labels.max()) >= self.num_classes:
            raise LabelOutOfRange(
                f"label {int(self.labels.max())} >= declared class count {self.num_classes}")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]


@dataclass
class LongTailProfile:
    """Exponential class-size decay with a fixed head/tail imbalance ratio."""

    ir: float
    n_max: int
    kind: str = "exponential"
    seed: int = 0

    def __post_init__(self) -> None:
        if self.ir < 1.0:
            raise ValueError(f"imbalance ratio must be >= 1, got {self.ir}")
        if self.kind != "exponential":
            raise ValueError(f"unsupported profile kind: {self.kind!r}")
        if self.n_max < 1:
            raise ValueError("base count must be >= 1")


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix("").parent / (path.with_suffix("").name + ".classes.json")


def _write_header(fh: BinaryIO, role: int, d: int, n: int, c: int) -> None:
    fh.write(_HEADER.pack(MAGIC, VERSION, role, d, n, c))


def _read_exact(fh: BinaryIO, count: int, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise Truncated(f"expected {count} bytes of {what}, got {len(buf)}")
    return buf


def _read_header(fh: BinaryIO) -> tuple[int, int, int, int]:
    raw = fh.read(_HEADER.size)
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagic(f"bad magic {raw[:4]!r}, expected {MAGIC!r}")
    if len(raw) != _HEADER.size:
        raise Truncated(f"header is {len(raw)} bytes, expected {_HEADER.size}")
    _, version, role, d, n, c = _HEADER.unpack(raw)
    if version != VERSION:
        raise VersionMismatch(f"unsupported version {version}, expected {VERSION}")
    if role not in (ROLE_EMBEDDINGS, ROLE_MODEL):
        raise FormatError(f"unknown role byte {role}")
    return role, d, n, c


def write_embeddings(dataset: EmbeddingDataset, path: str | Path | BinaryIO) -> None:
    """Serialize a dataset; bitwise round trip with read_embeddings."""
    if hasattr(path, "write"):
        _write_embeddings_fh(dataset, path)  # type: ignore[arg-type]
        return
    path = Path(path)
    with open(path, "wb") as fh:
        _write_embeddings_fh(dataset, fh)
    if dataset.class_names:
        _sidecar_path(path).write_text(
            json.dumps({str(k): v for k, v in sorted(dataset.class_names.items())},
                       indent=0, sort_keys=True))


def _write_embeddings_fh(dataset: EmbeddingDataset, fh: BinaryIO) -> None:
    _write_header(fh, ROLE_EMBEDDINGS, dataset.dim, dataset.n, dataset.num_classes)
    fh.write(dataset.labels.astype("<u4", copy=False).tobytes())
    fh.write(dataset.matrix.astype("<f4", copy=False).tobytes())


def read_embeddings(path: str | Path | BinaryIO, split: str = "train") -> EmbeddingDataset:
    """Parse a role-0 container; raises the specific FormatError subclass."""
    if hasattr(path, "read"):
        return _read_embeddings_fh(path, split, None)  # type: ignore[arg-type]
    path = Path(path)
    with open(path, "rb") as fh:
        return _read_embeddings_fh(fh, split, path)


def _read_embeddings_fh(fh: BinaryIO, split: str, path: Path | None) -> EmbeddingDataset:
    role, d, n, c = _read_header(fh)
    if role != ROLE_EMBEDDINGS:
        raise FormatError(f"expected an embeddings file (role 0), found role {role}")
    labels = np.frombuffer(_read_exact(fh, 4 * n, "labels"), dtype="<u4").astype(np.uint32)
    matrix = np.frombuffer(_read_exact(fh, 4 * n * d, "embedding payload"),
                           dtype="<f4").astype(np.float32).reshape(n, d)
    trailing = fh.read(1)
    if trailing:
        raise FormatError("trailing bytes after declared payload")
    if labels.size and int(labels.max()) >= c:
        raise LabelOutOfRange(f"label {int(labels.max())} >= declared class count {c}")
    names = None
    if path is not None:
        sidecar = _sidecar_path(path)
        if sidecar.exists():
            names = {int(k): str(v) for k, v in json.loads(sidecar.read_text()).items()}
    return EmbeddingDataset(matrix, labels, c, class_names=names, split=split)


def write_model(weights: np.ndarray, biases: np.ndarray, path: str | Path | BinaryIO) -> None:
    """Serialize a (C, d) weight matrix and length-C bias vector as role 1."""
    weights = np.ascontiguousarray(weights, dtype=np.float32)
    biases = np.ascontiguousarray(biases, dtype=np.float32)
    c, d = weights.shape
    if biases.shape != (c,):
        raise ValueError("biases must have one entry per class")

    def _write(fh: BinaryIO) -> None:
        _write_header(fh, ROLE_MODEL, d, c, c)
        fh.write(weights.astype("<f4", copy=False).tobytes())
        fh.write(biases.astype("<f4", copy=False).tobytes())

    if hasattr(path, "write"):
        _write(path)  # type: ignore[arg-type]
    else:
        with open(path, "wb") as fh:
            _write(fh)


def read_model(path: str | Path | BinaryIO) -> tuple[np.ndarray, np.ndarray]:
    """Parse a role-1 container back into (weights, biases)."""
    def _read(fh: BinaryIO) -> tuple[np.ndarray, np.ndarray]:
        role, d, n, c = _read_header(fh)
        if role != ROLE_MODEL:
            raise FormatError(f"expected a model file (role 1), found role {role}")
        if n != c:
            raise FormatError(f"model row count {n} != class count {c}")
        weights = np.frombuffer(_read_exact(fh, 4 * c * d, "weights"),
                                dtype="<f4").astype(np.float32).reshape(c, d)
        biases = np.frombuffer(_read_exact(fh, 4 * c, "biases"), dtype="<f4").astype(np.float32)
        if fh.read(1):
            raise FormatError("trailing bytes after declared payload")
        return weights, biases

    if hasattr(path, "read"):
        return _read(path)  # type: ignore[arg-type]
    with open(path, "rb") as fh:
        return _read(fh)


def normalize_all(dataset: EmbeddingDataset) -> EmbeddingDataset:
    """Divide every row by its Euclidean norm; idempotent up to f32 rounding."""
    norms = np.linalg.norm(dataset.matrix.astype(np.float64), axis=1)
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ZeroVector(int(zero[0]))
    matrix = (dataset.matrix.astype(np.float64) / norms[:, None]).astype(np.float32)
    return replace(dataset, matrix=matrix)


def class_counts(dataset: EmbeddingDataset) -> dict[int, int]:
    """Histogram of labels over observed classes."""
    if dataset.n == 0:
        return {}
    counts = np.bincount(dataset.labels, minlength=dataset.num_classes)
    return {int(k): int(v) for k, v in enumerate(counts) if v > 0}


def longtail_counts(profile: LongTailProfile, num_classes: int) -> list[int]:
    """Per-class keep counts, descending: round(n_max * ir^(-k/(C-1))), floor 1."""
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    out = []
    for k in range(num_classes):
        target = profile.n_max * profile.ir ** (-k / (num_classes - 1))
        out.append(max(1, int(math.floor(target + 0.5))))
    return out


def make_longtail_subset(dataset: EmbeddingDataset, profile: LongTailProfile,
                         rng: RngHandle | None = None) -> EmbeddingDataset:
    """Subsample a (roughly balanced) dataset onto an exponential tail profile.

    Classes are ranked by descending count (ties by ascending id); rank k
    keeps round(n_max * ir^(-k/(C-1))) rows, drawn uniformly without
    replacement.  Kept rows stay in their original order.
    """
    if rng is None:
        rng = RngHandle(profile.seed)
    c = dataset.num_classes
    counts = class_counts(dataset)
    if len(counts) < c:
        missing = sorted(set(range(c)) - set(counts))
        raise InsufficientSamples(f"classes {missing} have no samples")
    order = sorted(counts, key=lambda k: (-counts[k], k))
    targets = longtail_counts(profile, c)
    keep: list[np.ndarray] = []
    for rank, cls in enumerate(order):
        want = targets[rank]
        rows = np.flatnonzero(dataset.labels == cls)
        if rows.size < want:
            raise InsufficientSamples(
                f"class {cls} has {rows.size} samples, profile needs {want}")
        chosen = rng.gen.choice(rows, size=want, replace=False)
        keep.append(np.sort(chosen))
    idx = np.sort(np.concatenate(keep))
    return replace(dataset, matrix=dataset.matrix[idx], labels=dataset.labels[idx])
