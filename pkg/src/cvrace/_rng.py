"""Counter-based 64-bit random stream used for every seeded decision.

Generator ``splitmix64-ctr/v1``
-------------------------------
Draw number ``i`` (0-based) of the stream keyed by ``seed`` is::

    z = (seed + (i + 1) * 0x9E3779B97F4A7C15) mod 2**64
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 mod 2**64
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB mod 2**64
    out = z ^ (z >> 31)

Derived quantities:

* uniform double in [0, 1): ``(out >> 11) * 2**-53``
* integer in ``[0, bound)``: draw ``out`` until ``out >= 2**64 mod bound``,
  then return ``out mod bound`` (unbiased rejection)
* permutation of ``0..n-1``: start from the identity and, for ``i = n-1``
  down to ``1``, swap position ``i`` with ``j = below(i + 1)``
* standard normal: ``sqrt(-2 ln(1 - u1)) * cos(2 pi u2)`` from two
  consecutive uniforms (one normal per pair)

Every stream is a pure function of ``(seed, counter)`` so results do not
depend on thread scheduling or on any library's generator internals.
"""

from __future__ import annotations

import numpy as np

NAME = "splitmix64-ctr/v1"

MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """Finalizer of splitmix64 on a Python integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


class CounterRNG:
    """Sequential reader over the ``splitmix64-ctr/v1`` stream of one seed."""

    def __init__(self, seed: int):
        self.seed = int(seed) & MASK64
        self.counter = 0

    def uint64(self, size: int) -> np.ndarray:
        ctr = np.arange(self.counter + 1, self.counter + 1 + size, dtype=np.uint64)
        self.counter += size
        z = np.uint64(self.seed) + ctr * np.uint64(_GAMMA)
        return _mix64_array(z)

    def next_uint64(self) -> int:
        self.counter += 1
        return mix64(self.seed + self.counter * _GAMMA)

    def uniform(self, size: int) -> np.ndarray:
        return (self.uint64(size) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def below(self, bound: int) -> int:
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = (1 << 64) % bound
        while True:
            u = self.next_uint64()
            if u >= threshold:
                return u % bound

    def permutation(self, n: int) -> np.ndarray:
        perm = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm

    def normal(self, size: int) -> np.ndarray:
        u = self.uniform(2 * size).reshape(size, 2)
        return np.sqrt(-2.0 * np.log1p(-u[:, 0])) * np.cos(2.0 * np.pi * u[:, 1])

    def uniform_range(self, low: float, high: float, size: int) -> np.ndarray:
        return low + (high - low) * self.uniform(size)
