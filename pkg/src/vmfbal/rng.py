"""Deterministic random streams.

Everything stochastic in this package draws from an :class:`RngHandle`,
a thin wrapper around numpy's Philox counter-based bit generator keyed
by a ``(seed, stream)`` pair.  Philox is fully specified (Salmon et al.,
"Parallel random numbers: as easy as 1, 2, 3"), so the same key yields
the same draw sequence on every platform running the same numpy build.
"""
from __future__ import annotations

import numpy as np

_MASK64 = 0xFFFFFFFFFFFFFFFF


def _splitmix64(value: int) -> int:
    """One round of the SplitMix64 mixer; used to derive child stream ids."""
    value = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = value
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class RngHandle:
    """A named, reproducible random stream.

    Identical ``(seed, stream)`` pairs produce bitwise-identical draw
    sequences.  A handle is stateful and must not be shared between
    threads; parallel work should partition across :meth:`child` streams
    instead.
    """

    def __init__(self, seed: int, stream: int = 0):
        if not 0 <= int(seed) <= _MASK64 or not 0 <= int(stream) <= _MASK64:
            raise ValueError("seed and stream must be unsigned 64-bit integers")
        self.seed = int(seed)
        self.stream = int(stream)
        key = np.array([self.seed, self.stream], dtype=np.uint64)
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RngHandle":
        """Derive an independent stream; deterministic in (stream, index)."""
        if index < 0:
            raise ValueError("child index must be non-negative")
        return RngHandle(self.seed, _splitmix64(self.stream ^ _splitmix64(index + 1)))

    def __repr__(self) -> str:  # pragma: no cover
        return f"RngHandle(seed={self.seed}, stream={self.stream})"
