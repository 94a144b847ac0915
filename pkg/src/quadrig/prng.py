"""Counter-based SplitMix64 streams.

The generator is part of the fixture format: the same ``(seed, stream)``
must yield the same numbers in any language. Draw ``i`` (0-based) from
stream ``s`` of seed ``seed`` is the SplitMix64 finaliser applied to

    seed + GAMMA * (s * 2**32 + i + 1)    (mod 2**64)

with ``GAMMA = 0x9E3779B97F4A7C15`` and the finaliser

    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB
    z =  z ^ (z >> 31)

This is exactly the output sequence of a SplitMix64 generator whose state
starts at ``seed + GAMMA * s * 2**32``.
"""

from __future__ import annotations

import math

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
STREAM_SPAN = 2**32
_MASK = 2**64 - 1


def splitmix64(z):
    """SplitMix64 finaliser on a uint64 array (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX1)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX2)
    return z ^ (z >> np.uint64(31))


class Stream:
    """Sequential reader over one counter-based stream."""

    def __init__(self, seed: int, stream: int):
        if not 0 <= seed <= _MASK:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self._base = (seed + GAMMA * stream * STREAM_SPAN) & _MASK
        self._count = 0

    def u64(self, n: int) -> np.ndarray:
        start = self._count
        if start + n > STREAM_SPAN:
            raise OverflowError("stream exhausted")
        self._count += n
        counters = np.arange(start + 1, start + n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self._base) + np.uint64(GAMMA) * counters
        return splitmix64(z)

    def uniform(self, n: int) -> np.ndarray:
        """Doubles in the open interval (0, 1): ``((x >> 11) + 0.5) * 2**-53``."""
        x = self.u64(n) >> np.uint64(11)
        return (x.astype(np.float64) + 0.5) * 2.0**-53

    def symmetric(self, n: int) -> np.ndarray:
        """Doubles in (-1, 1), never exactly zero: ``2u - 1``."""
        return 2.0 * self.uniform(n) - 1.0

    def below(self, bound: int) -> int:
        """One integer in ``[0, bound)`` as ``floor(u * bound)``."""
        return min(int(self.uniform(1)[0] * bound), bound - 1)

    def shuffled(self, n: int) -> list[int]:
        """Fisher-Yates permutation of ``range(n)``, swapping from the top down."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            r = self.below(i + 1)
            perm[i], perm[r] = perm[r], perm[i]
        return perm

    def normal(self, n: int) -> np.ndarray:
        """Standard normals, Box-Muller cosine branch, two uniforms per draw."""
        u = self.uniform(2 * n)
        return np.array([
            math.sqrt(-2.0 * math.log(u[2 * i])) * math.cos(2.0 * math.pi * u[2 * i + 1])
            for i in range(n)
        ])
