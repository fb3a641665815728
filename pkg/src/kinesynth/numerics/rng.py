"""Seeded random streams.

Backed by numpy's PCG64 bit generator, whose output stream is specified
bit-for-bit and does not depend on platform or thread count.
"""

from __future__ import annotations

import numpy as np


class SeededRng:
    """Deterministic random source keyed by a 64-bit seed.

    ``spawn(*key)`` derives an independent child stream whose state depends
    only on ``(seed, key)``, so per-sample streams can be created in any order.
    """

    def __init__(self, seed: int, key: tuple[int, ...] = ()):
        seed = int(seed)
        if seed < 0 or seed >= 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = seed
        self.key = tuple(int(k) for k in key)
        seq = np.random.SeedSequence(entropy=seed, spawn_key=self.key)
        self._gen = np.random.Generator(np.random.PCG64(seq))

    def spawn(self, *key: int) -> SeededRng:
        return SeededRng(self.seed, self.key + tuple(key))

    def normal(self, size, loc=0.0, scale=1.0) -> np.ndarray:
        return self._gen.normal(loc, scale, size)

    def uniform(self, size, low=0.0, high=1.0) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def random(self, size=None):
        return self._gen.random(size)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def choice(self, a, size=None, replace=True):
        return self._gen.choice(a, size=size, replace=replace)

    def __repr__(self):
        return f"SeededRng(seed={self.seed}, key={self.key})"
