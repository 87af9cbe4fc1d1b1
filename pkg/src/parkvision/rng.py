"""Portable deterministic random numbers (splitmix64).

All corpus generation randomness comes from this one generator so a corpus
is reproducible bit for bit from its seed, in any language that implements
the same update rule:

    state  <- (state + 0x9E3779B97F4A7C15) mod 2^64
    output <- mix(state)

where mix is the splitmix64 finalizer:

    z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
    z ^= z >> 27;  z *= 0x94D049BB133111EB
    z ^= z >> 31

Floats in [0, 1) take the top 53 bits of an output. Bounded ints reduce an
output modulo the range width. Gaussians use the Box-Muller transform on two
consecutive uniforms. Bulk helpers evaluate the same sequence with vectorized
uint64 arithmetic.
"""

from __future__ import annotations

import math

import numpy as np

_MASK = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(z: int) -> int:
    """splitmix64 finalizer."""
    z &= _MASK
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK
    return z ^ (z >> 31)


def subseed(seed: int, index: int) -> int:
    """Independent per-item seed so item k can be generated without
    generating items 0..k-1 first."""
    return mix64((seed & _MASK) ^ mix64((index + 1) * _GOLDEN))


class SplitMix64:
    """Sequential splitmix64 stream."""

    def __init__(self, seed: int):
        self._state = seed & _MASK

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK
        return mix64(self._state)

    def uniform(self) -> float:
        """Float in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * 2.0**-53

    def randint(self, lo: int, hi: int) -> int:
        """Integer in [lo, hi], both inclusive. Modulo reduction; the tiny
        bias is irrelevant here and the portability is not."""
        if hi < lo:
            raise ValueError("empty range")
        return lo + self.next_u64() % (hi - lo + 1)

    def uniform_range(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.uniform()

    def gauss(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        u1 = max(self.uniform(), 2.0**-53)
        u2 = self.uniform()
        return mu + sigma * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def choice(self, seq):
        return seq[self.randint(0, len(seq) - 1)]


def _bulk_u64(seed: int, start: int, count: int) -> np.ndarray:
    """Outputs start+1 .. start+count of the splitmix64 stream for `seed`."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = (np.uint64(seed & _MASK) + idx * np.uint64(_GOLDEN))
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
    return z ^ (z >> np.uint64(31))


def bulk_uniform(seed: int, start: int, count: int) -> np.ndarray:
    return (_bulk_u64(seed, start, count) >> np.uint64(11)).astype(np.float64) * 2.0**-53


def bulk_gauss(seed: int, start: int, count: int, sigma: float) -> np.ndarray:
    """Box-Muller over two consecutive uniform blocks; matches the scalar
    stream's transform (cosine branch)."""
    u1 = np.maximum(bulk_uniform(seed, start, count), 2.0**-53)
    u2 = bulk_uniform(seed, start + count, count)
    return sigma * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
