"""Seedable, portable random number generation for reproducible plans.

All split plans and synthetic slides are driven by SplitMix64 (Steele, Lea &
Flood 2014) so that a fixed seed reproduces byte-identical artifacts on any
platform, independent of Python or numpy versions. Constants:

    state update   s += 0x9E3779B97F4A7C15          (golden-ratio gamma)
    finalizer      z ^= z >> 30; z *= 0xBF58476D1CE4E5B9
                   z ^= z >> 27; z *= 0x94D049BB133111EB
                   z ^= z >> 31

Uniform doubles take the top 53 bits of one output; bounded integers use
rejection sampling (no modulo bias); shuffles are descending Fisher-Yates.
Gaussians use Box-Muller and are reproducible up to libm rounding.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def mix64(z: int) -> int:
    """SplitMix64 finalizer: a 64-bit bijective hash."""
    z &= _MASK64
    z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
    z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
    return z ^ (z >> 31)


def _fnv1a(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _MASK64
    return h


def derive_seed(base: int, *parts: int | str) -> int:
    """Derive an independent child seed from a base seed and a key path.

    Deterministic and order-sensitive: derive_seed(s, a, b) != derive_seed(s, b, a)
    in general. Strings are folded in via FNV-1a so textual ids can key streams.
    """
    state = mix64(base)
    for part in parts:
        if isinstance(part, str):
            part = _fnv1a(part.encode("utf-8"))
        state = mix64((state + _GAMMA) ^ mix64(part))
    return state


class SplitMix64:
    """Sequential SplitMix64 stream with the sampling helpers the pipeline needs."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64
        self._spare_gauss: float | None = None

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        return mix64(self._state)

    def random(self) -> float:
        """Uniform double in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def random_block(self, n: int) -> list[float]:
        """n uniforms identical to n successive random() calls, produced in bulk.

        SplitMix64 is counter-based (state_i = state_0 + i * gamma), so the
        whole block vectorizes; the stream position advances by exactly n.
        """
        idx = np.arange(1, n + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            z = np.uint64(self._state) + idx * np.uint64(_GAMMA)
            self._state = int(z[-1])
            z = (z ^ (z >> np.uint64(30))) * np.uint64(_MIX1)
            z = (z ^ (z >> np.uint64(27))) * np.uint64(_MIX2)
            z = z ^ (z >> np.uint64(31))
        return ((z >> np.uint64(11)) * (1.0 / (1 << 53))).tolist()

    def below(self, n: int) -> int:
        """Uniform integer in [0, n), bias-free via rejection sampling."""
        if n <= 0:
            raise ValueError("below() requires n > 0")
        limit = (1 << 64) - ((1 << 64) % n)
        while True:
            u = self.next_u64()
            if u < limit:
                return u % n

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def normal(self, mu: float = 0.0, sigma: float = 1.0) -> float:
        """Box-Muller gaussian; generates pairs, caches the spare."""
        if self._spare_gauss is not None:
            z = self._spare_gauss
            self._spare_gauss = None
            return mu + sigma * z
        while True:
            u1 = self.random()
            if u1 > 0.0:
                break
        u2 = self.random()
        r = math.sqrt(-2.0 * math.log(u1))
        theta = 2.0 * math.pi * u2
        self._spare_gauss = r * math.sin(theta)
        return mu + sigma * r * math.cos(theta)

    def shuffle(self, items: list) -> None:
        """In-place descending Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample(self, items: list, k: int) -> list:
        """k distinct items, drawn without replacement (partial Fisher-Yates)."""
        if not 0 <= k <= len(items):
            raise ValueError(f"cannot sample {k} from {len(items)} items")
        pool = list(items)
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def choice(self, items: list):
        if not items:
            raise ValueError("choice() from empty sequence")
        return items[self.below(len(items))]
