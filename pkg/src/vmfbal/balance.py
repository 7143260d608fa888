"""Class balancing by synthetic embedding generation.

Every method tops classes up to the size of the largest one, keeps the
real rows bitwise intact, and flags each output row as real or
synthetic.  ``vmf-kde`` draws from the per-class vMF kernel density;
the remaining methods are comparison baselines (duplication, SMOTE
interpolation, ambient Gaussian KDE, and a no-op).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data import EmbeddingDataset, class_counts
from .kde import ClassKde, build_class_kde, estimate_local_kappa, sample_kde
from .rng import RngHandle

METHODS = ("vmf-kde", "gauss-kde", "smote", "ros", "none")


@dataclass
class BalancePlan:
    """Per-class synthetic-sample deficits relative to the largest class."""

    targets: dict[int, int]
    n_max: int


@dataclass
class BalancedSet:
    """Real plus synthetic embeddings with per-row provenance."""

    matrix: np.ndarray  # (M, d) float32
    labels: np.ndarray  # (M,) uint32
    synthetic: np.ndarray  # (M,) bool, False = real
    method: str
    num_classes: int

    def __post_init__(self) -> None:
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float32)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.uint32)
        self.synthetic = np.ascontiguousarray(self.synthetic, dtype=bool)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def real_only(self) -> tuple[np.ndarray, np.ndarray]:
        keep = ~self.synthetic
        return self.matrix[keep], self.labels[keep]


def compute_targets(counts: Mapping[int, int]) -> BalancePlan:
    """Deficit of each class against the largest: n_max - n_k."""
    if not counts:
        raise ValueError("class count map is empty")
    if any(v < 1 for v in counts.values()):
        raise ValueError("all class counts must be >= 1")
    n_max = max(counts.values())
    return BalancePlan({int(k): n_max - v for k, v in counts.items()}, n_max)


def _class_rows(dataset: EmbeddingDataset, cls: int) -> np.ndarray:
    return np.flatnonzero(dataset.labels == cls)


def _assemble(dataset: EmbeddingDataset, synth: dict[int, np.ndarray],
              method: str) -> BalancedSet:
    blocks = [dataset.matrix]
    labels = [dataset.labels]
    flags = [np.zeros(dataset.n, dtype=bool)]
    for cls in sorted(synth):
        rows = synth[cls]
        if rows.shape[0] == 0:
            continue
        blocks.append(np.ascontiguousarray(rows, dtype=np.float32))
        labels.append(np.full(rows.shape[0], cls, dtype=np.uint32))
        flags.append(np.ones(rows.shape[0], dtype=bool))
    return BalancedSet(np.concatenate(blocks), np.concatenate(labels),
                       np.concatenate(flags), method, dataset.num_classes)


def balance_vmf_kde(dataset: EmbeddingDataset, rng: RngHandle) -> BalancedSet:
    """Fill each class's deficit with draws from its vMF kernel density.

    Kernel concentrations come from nearest-neighbour pairs; singleton
    classes, which have no pair, fall back to the median concentration
    across all multi-sample classes (or the dimension itself when every
    class is a singleton).
    """
    plan = compute_targets(class_counts(dataset))
    per_class = {cls: dataset.matrix[_class_rows(dataset, cls)].astype(np.float64)
                 for cls in sorted(plan.targets)}

    kdes: dict[int, ClassKde] = {}
    pooled: list[float] = []
    for cls, emb in per_class.items():
        if emb.shape[0] >= 2:
            kdes[cls] = build_class_kde(cls, emb, fallback_kappa=0.0)
            pooled.extend(c.kappa for c in kdes[cls].components)
    fallback = float(np.median(pooled)) if pooled else float(dataset.dim)
    for cls, emb in per_class.items():
        if cls not in kdes:
            kdes[cls] = build_class_kde(cls, emb, fallback_kappa=fallback)

    synth = {cls: sample_kde(kdes[cls], plan.targets[cls], rng)
             for cls in sorted(plan.targets)}
    return _assemble(dataset, synth, "vmf-kde")


def balance_random_oversample(dataset: EmbeddingDataset, rng: RngHandle) -> BalancedSet:
    """Duplicate uniformly-chosen real rows until every class hits n_max."""
    plan = compute_targets(class_counts(dataset))
    synth = {}
    for cls in sorted(plan.targets):
        rows = _class_rows(dataset, cls)
        picks = rng.gen.integers(0, rows.size, size=plan.targets[cls])
        synth[cls] = dataset.matrix[rows[picks]]
    return _assemble(dataset, synth, "ros")


def balance_smote(dataset: EmbeddingDataset, rng: RngHandle, k: int = 5) -> BalancedSet:
    """Interpolate toward same-class cosine neighbours, then renormalize.

    Each draw picks a real row, one of its k nearest neighbours (all
    available ones when the class is smaller than k+1), and a uniform
    interpolation weight.  Singleton classes degrade to duplication.
    """
    if k < 1:
        raise ValueError(f"neighbour count must be >= 1, got {k}")
    plan = compute_targets(class_counts(dataset))
    synth = {}
    for cls in sorted(plan.targets):
        want = plan.targets[cls]
        rows = _class_rows(dataset, cls)
        emb = dataset.matrix[rows].astype(np.float64)
        n = emb.shape[0]
        if want == 0:
            synth[cls] = np.empty((0, dataset.dim), dtype=np.float32)
            continue
        if n == 1:
            synth[cls] = np.repeat(dataset.matrix[rows], want, axis=0)
            continue
        k_eff = min(k, n - 1)
        sims = emb @ emb.T
        np.fill_diagonal(sims, -np.inf)
        # stable argsort keeps the lowest index first among ties
        neighbours = np.argsort(-sims, axis=1, kind="stable")[:, :k_eff]
        base = rng.gen.integers(0, n, size=want)
        pick = rng.gen.integers(0, k_eff, size=want)
        u = rng.gen.random(want)
        z = emb[base]
        z_nbr = emb[neighbours[base, pick]]
        out = z + u[:, None] * (z_nbr - z)
        norms = np.linalg.norm(out, axis=1)
        degenerate = norms < 1e-12  # opposite points interpolated to ~0
        out[degenerate] = z[degenerate]
        norms[degenerate] = np.linalg.norm(out[degenerate], axis=1)
        synth[cls] = (out / norms[:, None]).astype(np.float32)
    return _assemble(dataset, synth, "smote")


def balance_gaussian_kde(dataset: EmbeddingDataset, rng: RngHandle,
                         renormalize: bool = True) -> BalancedSet:
    """Ambient-space Gaussian KDE baseline with Scott's-rule bandwidth.

    Per class, a draw adds isotropic noise of scale
    sigma_bar * n_k^(-1/(d+4)) to a uniformly chosen real row, where
    sigma_bar is the mean per-coordinate standard deviation.  Singleton
    classes borrow sigma_bar from the pooled dataset.  Rows are pushed
    back to the sphere unless ``renormalize`` is disabled.
    """
    plan = compute_targets(class_counts(dataset))
    d = dataset.dim
    pooled_sigma = float(np.mean(np.std(dataset.matrix.astype(np.float64),
                                        axis=0, ddof=1))) if dataset.n >= 2 else 0.0
    synth = {}
    for cls in sorted(plan.targets):
        want = plan.targets[cls]
        rows = _class_rows(dataset, cls)
        emb = dataset.matrix[rows].astype(np.float64)
        n = emb.shape[0]
        sigma = pooled_sigma if n < 2 else float(np.mean(np.std(emb, axis=0, ddof=1)))
        h = sigma * n ** (-1.0 / (d + 4))
        picks = rng.gen.integers(0, n, size=want)
        out = emb[picks] + h * rng.gen.standard_normal((want, d))
        if renormalize:
            norms = np.linalg.norm(out, axis=1)
            degenerate = norms < 1e-12
            out[degenerate] = emb[picks[degenerate]]
            norms[degenerate] = np.linalg.norm(out[degenerate], axis=1)
            out = out / norms[:, None]
        synth[cls] = out.astype(np.float32)
    return _assemble(dataset, synth, "gauss-kde")


def balance_none(dataset: EmbeddingDataset) -> BalancedSet:
    """Pass the dataset through untouched; the unbalanced baseline."""
    return BalancedSet(dataset.matrix.copy(), dataset.labels.copy(),
                       np.zeros(dataset.n, dtype=bool), "none", dataset.num_classes)


def balance(dataset: EmbeddingDataset, method: str, rng: RngHandle | None = None,
            smote_k: int = 5) -> BalancedSet:
    """Dispatch on method name; rng is required for the stochastic methods."""
    if method == "none":
        return balance_none(dataset)
    if rng is None:
        raise ValueError(f"method {method!r} is stochastic and needs an rng")
    if method == "vmf-kde":
        return balance_vmf_kde(dataset, rng)
    if method == "gauss-kde":
        return balance_gaussian_kde(dataset, rng)
    if method == "smote":
        return balance_smote(dataset, rng, k=smote_k)
    if method == "ros":
        return balance_random_oversample(dataset, rng)
    raise ValueError(f"unknown balancing method {method!r}; choose from {METHODS}")
