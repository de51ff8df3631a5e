"""Portable xoshiro256** generator with Box-Muller normals.

The stream is fully determined by the algorithm, so synthetic fixtures
are reproducible by any implementation that follows the same steps:

* state seeded from a 64-bit integer through four splitmix64 outputs;
* uniforms on ``(0, 1]`` as ``((x >> 11) + 1) * 2**-53`` and on ``[0, 1)``
  as ``(x >> 11) * 2**-53``;
* normals produced in pairs ``r*cos(2*pi*u2), r*sin(2*pi*u2)`` with
  ``r = sqrt(-2 ln u1)``, ``u1`` drawn first from ``(0, 1]``.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state: int) -> tuple[int, int]:
    """Return ``(next_state, output)``."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xoshiro256:
    def __init__(self, seed: int):
        sm = int(seed) & _MASK
        s = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            s.append(out)
        self._s = s
        self._spare = None

    def next_u64(self) -> int:
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def uniform(self) -> float:
        """Uniform on ``[0, 1)``."""
        return (self.next_u64() >> 11) * _INV_2_53

    def uniform_open0(self) -> float:
        """Uniform on ``(0, 1]``; safe as a logarithm argument."""
        return ((self.next_u64() >> 11) + 1) * _INV_2_53

    def normal(self) -> float:
        if self._spare is not None:
            z, self._spare = self._spare, None
            return z
        u1 = self.uniform_open0()
        u2 = self.uniform()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, n: int) -> np.ndarray:
        return np.fromiter((self.normal() for _ in range(n)), dtype=np.float64, count=n)
