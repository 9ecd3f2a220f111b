"""Deterministic seeded random streams.

All randomness in this package flows through a single 64-bit mixing
function (the splitmix64 finalizer) so that every draw is bit-identical
across platforms and library versions.  Independent streams are derived
by absorbing a seed plus arbitrary purpose tags (strings or integers)
into a 64-bit key; there is no global RNG state anywhere.
"""

from __future__ import annotations

import math

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15  # golden-ratio increment
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


def mix64(x: int) -> int:
    """splitmix64 finalizer: a 64-bit bijective scrambler."""
    x &= _MASK64
    x = (x ^ (x >> 30)) * _MIX1 & _MASK64
    x = (x ^ (x >> 27)) * _MIX2 & _MASK64
    return x ^ (x >> 31)


def derive_key(seed: int, *tags) -> int:
    """Derive a 64-bit stream key from a seed and purpose tags.

    Tags may be ints or strings.  Each tag is absorbed into the running
    key through mix64, so (seed, "cal") and (seed, "gen") give unrelated
    streams.
    """
    key = mix64(seed & _MASK64)
    for tag in tags:
        if isinstance(tag, str):
            for byte in tag.encode("utf-8"):
                key = mix64((key + _GAMMA + byte) & _MASK64)
        else:
            key = mix64((key + _GAMMA + (int(tag) & _MASK64)) & _MASK64)
    return key


class Stream:
    """Sequential random stream backed by a splitmix64 counter.

    Provides the distributions the simulator needs (uniform, normal,
    bounded integers, sampling without replacement).  Deterministic
    given the construction key.
    """

    def __init__(self, seed: int, *tags):
        self._key = derive_key(seed, *tags)
        self._counter = 0

    def next_u64(self) -> int:
        self._counter += 1
        return mix64((self._key + self._counter * _GAMMA) & _MASK64)

    def uniform(self, low: float = 0.0, high: float = 1.0) -> float:
        # 53 bits of mantissa, exactly representable in a double
        u = self.next_u64() >> 11
        return low + (high - low) * (u * (1.0 / (1 << 53)))

    def normal(self, mean: float = 0.0, std: float = 1.0) -> float:
        # Box-Muller; one Gaussian per pair keeps the stream stateless.
        u1 = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        u2 = (self.next_u64() >> 11) * (1.0 / (1 << 53))
        r = math.sqrt(-2.0 * math.log(1.0 - u1))
        return mean + std * r * math.cos(2.0 * math.pi * u2)

    def clipped_normal(self, mean: float, std: float, low: float, high: float) -> float:
        return min(max(self.normal(mean, std), low), high)

    def randint(self, bound: int) -> int:
        """Uniform integer in [0, bound) via rejection (no modulo bias)."""
        if bound <= 0:
            raise ValueError("bound must be positive")
        limit = _MASK64 - (_MASK64 + 1) % bound
        while True:
            u = self.next_u64()
            if u <= limit:
                return u % bound

    def sample_distinct(self, bound: int, count: int, exclude=frozenset()):
        """count distinct integers from [0, bound) avoiding exclude."""
        if count + len(exclude) > bound:
            raise ValueError("sample space exhausted")
        seen = set()
        out = []
        while len(out) < count:
            v = self.randint(bound)
            if v in seen or v in exclude:
                continue
            seen.add(v)
            out.append(v)
        return out

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(i + 1)
            items[i], items[j] = items[j], items[i]


def keyed_unit_floats(key: int, values: np.ndarray) -> np.ndarray:
    """Map an integer array to pseudo-random floats in [0, 1), vectorized.

    Each element is hashed independently under the given stream key, so
    the result is a pure function of (key, value) with no sequential
    state.  uint64 arithmetic wraps modulo 2^64 by construction.
    """
    x = (np.asarray(values, dtype=np.uint64) + np.uint64(1)) * np.uint64(_GAMMA)
    x += np.uint64(key)
    x ^= x >> np.uint64(30)
    x *= np.uint64(_MIX1)
    x ^= x >> np.uint64(27)
    x *= np.uint64(_MIX2)
    x ^= x >> np.uint64(31)
    return (x >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
