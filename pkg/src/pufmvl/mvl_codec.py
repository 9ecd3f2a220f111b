"""Fixed-width digit codecs for re-encoding 24-bit words in arbitrary radices.

A value in [0, max_value] is written as a fixed number of digits, most
significant first.  Digit width is computed with exact integer
arithmetic: floating-point logarithms are off by one exactly where it
hurts (radix 8 against 2^24 - 1, where 8^8 exceeds the maximum by a
single count).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

MAX_24BIT = (1 << 24) - 1


def digits_required(radix: int, max_value: int) -> int:
    """Smallest D with radix**D > max_value, by repeated multiplication."""
    if radix < 2:
        raise ValueError(f"radix must be >= 2, got {radix}")
    if max_value < 1:
        raise ValueError(f"max_value must be >= 1, got {max_value}")
    d = 1
    power = radix
    while power <= max_value:
        power *= radix
        d += 1
    return d


@dataclass(frozen=True)
class RadixSpec:
    """Radix and digit width for one encoding of values up to max_value."""

    radix: int
    max_value: int = MAX_24BIT
    width: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "width", digits_required(self.radix, self.max_value))


@dataclass(frozen=True)
class DigitVector:
    """Fixed-width digit string, most-significant digit first."""

    spec: RadixSpec
    digits: tuple

    def __post_init__(self):
        if len(self.digits) != self.spec.width:
            raise ValueError(
                f"expected {self.spec.width} digits, got {len(self.digits)}"
            )
        for d in self.digits:
            if not 0 <= d < self.spec.radix:
                raise ValueError(f"digit {d} out of range for radix {self.spec.radix}")


def encode(value: int, spec: RadixSpec) -> DigitVector:
    """Positional encoding of value, zero-padded to spec.width."""
    if not 0 <= value <= spec.max_value:
        raise ValueError(f"value {value} outside [0, {spec.max_value}]")
    digits = [0] * spec.width
    v = value
    for i in range(spec.width - 1, -1, -1):
        digits[i] = v % spec.radix
        v //= spec.radix
    return DigitVector(spec, tuple(digits))


def decode(dv: DigitVector) -> int:
    """Integer value of a digit vector (may exceed the spec's max_value
    for radices whose width overshoots; the caller reduces)."""
    value = 0
    for d in dv.digits:
        if not 0 <= d < dv.spec.radix:
            raise ValueError(f"digit {d} out of range for radix {dv.spec.radix}")
        value = value * dv.spec.radix + d
    return value


def round_digits(raw, radix: int) -> DigitVector:
    """Round continuous model outputs to legal digits.

    Rounding is half-away-from-zero, then clamped into [0, radix-1];
    banker's rounding would make results depend on parity conventions.
    """
    if radix < 2:
        raise ValueError(f"radix must be >= 2, got {radix}")
    digits = []
    for x in raw:
        if not math.isfinite(x):
            raise ValueError(f"non-finite prediction {x!r}")
        rounded = math.floor(x + 0.5) if x >= 0 else math.ceil(x - 0.5)
        digits.append(min(max(rounded, 0), radix - 1))
    # max_value = radix**W - 1 pins the spec width to exactly len(raw)
    spec = RadixSpec(radix, radix ** len(digits) - 1)
    return DigitVector(spec, tuple(digits))


def value_to_bits(value: int) -> list:
    """24-bit big-endian expansion."""
    if not 0 <= value < (1 << 24):
        raise ValueError(f"value {value} outside [0, 2^24)")
    return [(value >> (23 - i)) & 1 for i in range(24)]


def bits_to_value(bits) -> int:
    """Inverse of value_to_bits."""
    if len(bits) != 24:
        raise ValueError(f"expected 24 bits, got {len(bits)}")
    value = 0
    for b in bits:
        if b not in (0, 1):
            raise ValueError(f"bit {b!r} not in {{0, 1}}")
        value = (value << 1) | b
    return value
