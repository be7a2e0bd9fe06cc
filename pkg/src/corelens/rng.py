"""Deterministic 64-bit PRNG: splitmix64 seeding a xoshiro256++ stream.

Every randomized operation in the package takes an explicit integer seed
and draws from its own stream, so results are reproducible within this
implementation (cross-language bit-exactness is not a goal). Gaussians
come from Box-Muller on the uniform stream, with the second value of
each pair cached.
"""

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_INV53 = 2.0 ** -53


def _splitmix64(state):
    """One splitmix64 step. Returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


class Xoshiro256pp:
    """xoshiro256++ stream seeded from a single 64-bit integer."""

    def __init__(self, seed):
        state = int(seed) & _MASK64
        s = []
        for _ in range(4):
            state, out = _splitmix64(state)
            s.append(out)
        if not any(s):  # all-zero state is the one forbidden point
            s[0] = 1
        self._s0, self._s1, self._s2, self._s3 = s
        self._gauss = None

    def next_u64(self):
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        r = (s0 + s3) & _MASK64
        r = ((r << 23) | (r >> 41)) & _MASK64
        r = (r + s0) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = ((s3 << 45) | (s3 >> 19)) & _MASK64
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return r

    def random(self):
        """Uniform float64 in [0, 1), 53 bits of the next word."""
        return (self.next_u64() >> 11) * _INV53

    def below(self, n):
        """Uniform integer in [0, n) via multiply-shift."""
        if n <= 0:
            raise ValueError("below() requires n >= 1")
        return (self.next_u64() * n) >> 64

    def normal(self):
        """Standard normal via Box-Muller; second of each pair is cached."""
        if self._gauss is not None:
            z, self._gauss = self._gauss, None
            return z
        # u1 in (0, 1] so log() is finite
        u1 = ((self.next_u64() >> 11) + 1) * _INV53
        u2 = (self.next_u64() >> 11) * _INV53
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._gauss = r * math.sin(theta)
        return r * math.cos(theta)

    def normals(self, shape):
        """Array of standard normals drawn in row-major order."""
        n = int(np.prod(shape))
        out = np.empty(n, dtype=np.float64)
        nrm = self.normal
        for i in range(n):
            out[i] = nrm()
        return out.reshape(shape)

    def permutation(self, n):
        """Fisher-Yates permutation of range(n)."""
        idx = np.arange(n, dtype=np.int64)
        for i in range(n - 1, 0, -1):
            j = self.below(i + 1)
            idx[i], idx[j] = idx[j], idx[i]
        return idx
