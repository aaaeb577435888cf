"""Deterministic pseudo-random number generation.

The generator is xoshiro256** 1.0 seeded through splitmix64, ported from
the public-domain C sources by David Blackman and Sebastiano Vigna
(https://prng.di.unimi.it/).  Everything is integer arithmetic on Python
ints masked to 64 bits, so the stream is identical on every platform and
never depends on numpy's generator internals.

Algorithm constants
-------------------
splitmix64:   increment 0x9E3779B97F4A7C15,
              mix multipliers 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB,
              shifts 30 / 27 / 31.
xoshiro256**: scrambler ``rotl(s1 * 5, 7) * 9``, state update with
              ``t = s1 << 17`` and final ``rotl(s3, 45)``.

A 64-bit output ``x`` becomes a double in [0, 1) as ``(x >> 11) * 2**-53``.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_DOUBLE_SCALE = 2.0 ** -53


def _splitmix64(x: int) -> tuple[int, int]:
    """One splitmix64 step: returns (new seed register, output)."""
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x, z ^ (z >> 31)


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK64


class Rng:
    """xoshiro256** stream with single-owner mutable state.

    The 256-bit core state is expanded from a 64-bit seed via four
    splitmix64 outputs.  Instances must not be shared across threads.
    """

    __slots__ = ("_s0", "_s1", "_s2", "_s3", "_seed_register")

    def __init__(self, seed: int):
        self._seed_register = seed & _MASK64
        x = self._seed_register
        x, self._s0 = _splitmix64(x)
        x, self._s1 = _splitmix64(x)
        x, self._s2 = _splitmix64(x)
        x, self._s3 = _splitmix64(x)

    def next_u64(self) -> int:
        """Next raw 64-bit output of the xoshiro256** core."""
        s0, s1, s2, s3 = self._s0, self._s1, self._s2, self._s3
        result = (_rotl((s1 * 5) & _MASK64, 7) * 9) & _MASK64
        t = (s1 << 17) & _MASK64
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s0, self._s1, self._s2, self._s3 = s0, s1, s2, s3
        return result

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """One double in [lo, hi).  Raises ValueError unless lo < hi."""
        if not lo < hi:
            raise ValueError(f"invalid range: lo={lo!r} must be < hi={hi!r}")
        u = (self.next_u64() >> 11) * _DOUBLE_SCALE
        v = lo + u * (hi - lo)
        # rounding of lo + u*(hi-lo) can land on hi; keep the half-open contract
        if v >= hi:
            v = math.nextafter(hi, lo)
        return v

    def uniform_array(self, shape, lo: float = 0.0, hi: float = 1.0) -> np.ndarray:
        if not lo < hi:
            raise ValueError(f"invalid range: lo={lo!r} must be < hi={hi!r}")
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            u = (self.next_u64() >> 11) * _DOUBLE_SCALE
            v = lo + u * (hi - lo)
            if v >= hi:
                v = math.nextafter(hi, lo)
            out[i] = v
        return out.reshape(shape)

    def normal(self) -> float:
        """One standard normal draw (Box-Muller, cosine branch)."""
        u1 = 1.0 - self.uniform()          # (0, 1], keeps log() finite
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normal_array(self, shape) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape)) if shape else 1
        out = np.empty(n, dtype=np.float64)
        for i in range(n):
            out[i] = self.normal()
        return out.reshape(shape)

    def integer(self, n: int) -> int:
        """Uniform integer in [0, n) by 64-bit modulo.

        The modulo bias is below n / 2**64, negligible for the small n used
        here, and keeps the draw a single state advance.
        """
        if n <= 0:
            raise ValueError(f"n must be positive, got {n}")
        return self.next_u64() % n

    def shuffle(self, items: np.ndarray) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.integer(i + 1)
            items[i], items[j] = items[j], items[i]

    def split(self) -> "Rng":
        """Derive an independent child stream (seeded from next_u64)."""
        return Rng(self.next_u64())
