"""Class-conditional density estimation with vMF kernels.

One kernel per observed embedding, uniformly weighted.  Each kernel's
concentration is estimated locally from the embedding and its nearest
same-class neighbour (cosine similarity), on the assumption that the
pair comes from one tight vMF cluster.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .rng import RngHandle
from .vmf import VmfParams, estimate_kappa_banerjee, log_norm_const, sample_vmf

# A kernel is just a vMF component anchored at an observed embedding.
VmfComponent = VmfParams


class NoNeighbor(ValueError):
    """Raised when a nearest-neighbour query has no candidates (class size 1)."""


@dataclass(eq=False)
class ClassKde:
    """Uniform mixture of vMF kernels for one class; immutable after build."""

    class_id: int
    components: list[VmfComponent]
    dim: int

    def __post_init__(self) -> None:
        if not self.components:
            raise ValueError("a class density needs at least one component")
        if any(c.dim != self.dim for c in self.components):
            raise ValueError("all components must share the class dimension")

    def __len__(self) -> int:
        return len(self.components)

    @cached_property
    def _mu_matrix(self) -> np.ndarray:
        return np.stack([c.mu for c in self.components])

    @cached_property
    def _kappas(self) -> np.ndarray:
        return np.array([c.kappa for c in self.components])

    @cached_property
    def _log_norms(self) -> np.ndarray:
        return np.array([log_norm_const(self.dim, k) for k in self._kappas])


def nearest_same_class(index: int, class_embeddings: np.ndarray) -> int:
    """Index of the most cosine-similar other member; ties to lowest index."""
    emb = np.asarray(class_embeddings, dtype=np.float64)
    n = emb.shape[0]
    if not 0 <= index < n:
        raise IndexError(f"index {index} out of range for {n} embeddings")
    if n < 2:
        raise NoNeighbor(f"class has {n} embedding(s); no neighbour exists")
    sims = emb @ emb[index]
    sims[index] = -np.inf
    return int(np.argmax(sims))  # argmax takes the first maximum


def estimate_local_kappa(z_i: np.ndarray, z_j: np.ndarray, d: int) -> float:
    """Local concentration from a point and its neighbour.

    Resultant length of the two-point set, clamped below 1 so exact
    duplicates land on KAPPA_MAX instead of infinity.
    """
    z_i = np.asarray(z_i, dtype=np.float64)
    z_j = np.asarray(z_j, dtype=np.float64)
    if z_i.shape != (d,) or z_j.shape != (d,):
        raise ValueError(f"expected two vectors of dimension {d}")
    r = float(np.linalg.norm(0.5 * (z_i + z_j)))
    r = min(r, 1.0 - 1e-9)
    return estimate_kappa_banerjee(r, d)


def build_class_kde(class_id: int, class_embeddings: np.ndarray,
                    fallback_kappa: float) -> ClassKde:
    """One kernel per embedding, concentration from its nearest neighbour.

    Singleton classes have no neighbour to pair with and use
    ``fallback_kappa`` instead.
    """
    emb = np.asarray(class_embeddings, dtype=np.float64)
    if emb.ndim != 2 or emb.shape[0] == 0:
        raise ValueError("class_embeddings must be a nonempty (n, d) array")
    n, d = emb.shape
    if n == 1:
        return ClassKde(class_id, [VmfComponent(emb[0], fallback_kappa)], d)
    sims = emb @ emb.T
    np.fill_diagonal(sims, -np.inf)
    neighbours = np.argmax(sims, axis=1)
    comps = [VmfComponent(emb[i], estimate_local_kappa(emb[i], emb[j], d))
             for i, j in enumerate(neighbours)]
    return ClassKde(class_id, comps, d)


def kde_log_density(kde: ClassKde, x: np.ndarray) -> float:
    """Log of the mixture density at x, via log-sum-exp.

    Kernel concentrations reach 1e5..1e8, so the per-kernel log terms
    must never leave log space.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (kde.dim,):
        raise ValueError(f"dimension mismatch: got {x.shape}, expected ({kde.dim},)")
    logs = kde._log_norms + kde._kappas * (kde._mu_matrix @ x)
    m = logs.max()
    return float(m + np.log(np.exp(logs - m).sum()) - np.log(len(kde)))


def kde_log_density_many(kde: ClassKde, xs: np.ndarray) -> np.ndarray:
    """Vectorized kde_log_density over the rows of an (n, d) array."""
    xs = np.asarray(xs, dtype=np.float64)
    logs = kde._log_norms[None, :] + (xs @ kde._mu_matrix.T) * kde._kappas[None, :]
    m = logs.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(logs - m).sum(axis=1, keepdims=True)))[:, 0] - np.log(len(kde))


def sample_kde(kde: ClassKde, n: int, rng: RngHandle) -> np.ndarray:
    """Draw n samples from the mixture: uniform kernel choice, then vMF draw.

    Output rows are grouped by kernel index; n = 0 yields an empty array.
    """
    if n < 0:
        raise ValueError(f"sample count must be >= 0, got {n}")
    if n == 0:
        return np.empty((0, kde.dim), dtype=np.float64)
    choices = rng.gen.integers(0, len(kde), size=n)
    counts = np.bincount(choices, minlength=len(kde))
    blocks = [sample_vmf(kde.components[i], int(c), rng)
              for i, c in enumerate(counts) if c > 0]
    return np.concatenate(blocks, axis=0)
