"""VMFE container writer/reader (role 0: labeled embeddings).

Byte layout (little-endian):
    0-3   magic "VMFE"
    4-7   u32 version = 1
    8     u8 role (0 = embeddings)
    9-12  u32 d
    13-20 u64 N
    21-24 u32 C
    then N x u32 labels, then N*d f32 row-major.

Implemented standalone so the tool has no dependency on the consuming
pipeline; compatibility is enforced byte-for-byte by the test suite.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

MAGIC = b"VMFE"
VERSION = 1
ROLE_EMBEDDINGS = 0

_HEADER = struct.Struct("<4sIBIQI")


class FormatError(ValueError):
    pass


class BadMagic(FormatError):
    pass


class VersionMismatch(FormatError):
    pass


class Truncated(FormatError):
    pass


class LabelOutOfRange(FormatError):
    pass


def sidecar_path(path: Path) -> Path:
    return path.with_suffix("").parent / (path.with_suffix("").name + ".classes.json")


def write_vmfe(path: str | Path, matrix: np.ndarray, labels: np.ndarray,
               num_classes: int, class_names: dict[int, str] | None = None) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    labels = np.ascontiguousarray(labels, dtype="<u4")
    n, d = matrix.shape
    if labels.shape != (n,):
        raise ValueError("labels must have one entry per row")
    if labels.size and int(labels.max()) >= num_classes:
        raise LabelOutOfRange(f"label {int(labels.max())} >= class count {num_classes}")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, ROLE_EMBEDDINGS, d, n, num_classes))
        fh.write(labels.tobytes())
        fh.write(matrix.tobytes())
    if class_names:
        sidecar_path(path).write_text(
            json.dumps({str(k): v for k, v in sorted(class_names.items())}))


def read_vmfe(path: str | Path) -> tuple[np.ndarray, np.ndarray, int]:
    """Returns (matrix, labels, num_classes); raises a FormatError subclass."""
    with open(path, "rb") as fh:
        raw = fh.read(_HEADER.size)
        if len(raw) < 4 or raw[:4] != MAGIC:
            raise BadMagic(f"bad magic {raw[:4]!r}")
        if len(raw) != _HEADER.size:
            raise Truncated("incomplete header")
        _, version, role, d, n, c = _HEADER.unpack(raw)
        if version != VERSION:
            raise VersionMismatch(f"unsupported version {version}")
        if role != ROLE_EMBEDDINGS:
            raise FormatError(f"expected role 0, found {role}")
        label_bytes = fh.read(4 * n)
        if len(label_bytes) != 4 * n:
            raise Truncated(f"labels: expected {4 * n} bytes, got {len(label_bytes)}")
        payload = fh.read(4 * n * d)
        if len(payload) != 4 * n * d:
            raise Truncated(f"payload: expected {4 * n * d} bytes, got {len(payload)}")
        if fh.read(1):
            raise FormatError("trailing bytes after declared payload")
    labels = np.frombuffer(label_bytes, dtype="<u4").astype(np.uint32)
    matrix = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(n, d)
    if labels.size and int(labels.max()) >= c:
        raise LabelOutOfRange(f"label {int(labels.max())} >= class count {c}")
    return matrix, labels, c


@dataclass
class Summary:
    dim: int
    rows: int
    num_classes: int
    per_class: dict[int, int]
    min_norm: float
    max_norm: float

    def render(self) -> str:
        lines = [
            f"d={self.dim}  N={self.rows}  C={self.num_classes}",
            f"row norms in [{self.min_norm:.6f}, {self.max_norm:.6f}]",
            "per-class counts:",
        ]
        lines += [f"  {cls:5d}: {count}" for cls, count in sorted(self.per_class.items())]
        return "\n".join(lines)


def summarize(path: str | Path) -> Summary:
    matrix, labels, c = read_vmfe(path)
    norms = np.linalg.norm(matrix.astype(np.float64), axis=1)
    per_class = {int(k): int(v) for k, v in
                 zip(*np.unique(labels, return_counts=True))}
    return Summary(matrix.shape[1], matrix.shape[0], c, per_class,
                   float(norms.min()) if norms.size else 0.0,
                   float(norms.max()) if norms.size else 0.0)
