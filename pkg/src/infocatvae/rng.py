"""Seedable counter-based random source.

The generator is SplitMix64: output ``i`` is a fixed 64-bit mixing function of
``seed + (counter + i + 1) * GOLDEN``. Because it is counter based, draws are
vectorised with numpy ``uint64`` arithmetic and the whole state is two
integers, which makes checkpointing exact.

Gaussian variates use the Box-Muller transform (two uniforms per pair of
normals).
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _splitmix64(seed: int, start: int, n: int) -> np.ndarray:
    idx = np.arange(start + 1, start + n + 1, dtype=np.uint64)
    z = np.uint64(seed & _MASK64) + idx * _GOLDEN
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class Rng:
    """SplitMix64 stream. Identical seeds give identical streams."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & _MASK64
        self.counter = 0

    def __repr__(self):
        return f"Rng(seed={self.seed}, counter={self.counter})"

    def get_state(self) -> tuple[int, int]:
        return self.seed, self.counter

    def set_state(self, state: tuple[int, int]) -> None:
        self.seed, self.counter = int(state[0]) & _MASK64, int(state[1])

    def uint64(self, n: int) -> np.ndarray:
        out = _splitmix64(self.seed, self.counter, n)
        self.counter += n
        return out

    def uniform(self, shape=()) -> np.ndarray:
        """Uniform doubles in [0, 1) with 53 bits of resolution."""
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.uint64(n) >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        return u.reshape(shape)

    def standard_normal(self, shape=()) -> np.ndarray:
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        u = self.uniform((2, m))
        # 1 - u lies in (0, 1], keeping the log finite
        r = np.sqrt(-2.0 * np.log1p(-u[0]))
        theta = 2.0 * np.pi * u[1]
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return z.reshape(shape)

    def categorical(self, p, size=None):
        """Draw indices with probability proportional to the weights ``p``.

        Returns a Python int when ``size`` is None, otherwise an int array.
        """
        p = np.asarray(p, dtype=np.float64)
        if p.ndim != 1 or p.size == 0:
            raise ValueError("categorical weights must be a nonempty 1-D array")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("categorical weights must be finite and nonnegative")
        total = p.sum()
        if total <= 0:
            raise ValueError("categorical weights are all zero")
        cdf = np.cumsum(p) / total
        cdf[-1] = 1.0
        u = self.uniform(() if size is None else size)
        idx = np.searchsorted(cdf, u, side="right")
        if size is None:
            return int(idx)
        return idx.astype(np.int64)

    def integers(self, high: int, size=None):
        """Uniform integers in ``[0, high)``."""
        return self.categorical(np.ones(high), size=size)

    def permutation(self, n: int) -> np.ndarray:
        # argsort of iid uniforms; stable sort keeps ties deterministic
        return np.argsort(self.uniform(n), kind="stable")
