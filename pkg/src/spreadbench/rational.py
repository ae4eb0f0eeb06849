"""Exact rational parsing and formatting helpers."""

from __future__ import annotations

from fractions import Fraction
from numbers import Rational
from typing import Iterable, Sequence

Vector = tuple  # tuple[Fraction, ...]


def to_fraction(value) -> Fraction:
    """Parse ``value`` exactly.

    Accepts ints, :class:`fractions.Fraction` (or any ``numbers.Rational``)
    and strings such as ``"3"``, ``"-1/4"`` or ``"2.5"``. Floats are rejected:
    they cannot be parsed exactly in general and silently rounding them would
    defeat the point of the library.
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, Rational):
        return Fraction(int(value.numerator), int(value.denominator))
    if isinstance(value, str):
        try:
            return Fraction(value.strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ValueError(f"not a rational: {value!r}") from exc
    raise TypeError(f"cannot read {type(value).__name__} {value!r} as an exact rational")


def to_vector(values: Iterable) -> tuple[Fraction, ...]:
    return tuple(to_fraction(v) for v in values)


def fmt(value: Fraction) -> str:
    """Lowest-terms ``p/q`` (or ``p`` for integers)."""
    return str(Fraction(value))


def fmt_vector(values: Sequence[Fraction]) -> list[str]:
    return [fmt(v) for v in values]


def pos(x: Fraction) -> Fraction:
    return x if x > 0 else Fraction(0)


def neg(x: Fraction) -> Fraction:
    return -x if x < 0 else Fraction(0)


def dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def zeros(dim: int) -> tuple[Fraction, ...]:
    return (Fraction(0),) * dim
