"""Exact integer and rational helpers.

Python ints are arbitrary precision and :class:`fractions.Fraction` is always
kept in lowest terms with a positive denominator, so both serve directly as
the numeric substrate.  This module adds the l-adic pieces on top.
"""

from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational as _RationalABC

Rational = Fraction

INFINITY = math.inf


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    if n % 2 == 0:
        return n == 2
    f = 3
    while f * f <= n:
        if n % f == 0:
            return False
        f += 2
    return True


def _check_prime(ell: int) -> None:
    if not is_prime(int(ell)):
        raise ValueError(f"{ell} is not prime")


def as_rational(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, _RationalABC)):
        return Fraction(x)
    if isinstance(x, str):
        return parse_rational(x)
    raise TypeError(f"cannot read {x!r} as an exact rational")


def valuation_int(n: int, ell: int) -> int:
    """Exponent of ``ell`` in the nonzero integer ``n``."""
    if n == 0:
        raise ValueError("valuation of 0 is infinite")
    n = abs(n)
    v = 0
    while n % ell == 0:
        n //= ell
        v += 1
    return v


def v_ell(x, ell: int):
    """l-adic valuation of a rational; ``math.inf`` for zero."""
    _check_prime(ell)
    x = as_rational(x)
    if x == 0:
        return INFINITY
    return valuation_int(x.numerator, ell) - valuation_int(x.denominator, ell)


def in_z_inv_ell(x, ell: int) -> bool:
    """True iff the reduced denominator of ``x`` is a power of ``ell``."""
    _check_prime(ell)
    den = as_rational(x).denominator
    while den % ell == 0:
        den //= ell
    return den == 1


def geometric_tail(ell: int, exponent_step: int, start: int) -> Fraction:
    """Sum of ell**(-k*exponent_step) over k >= start."""
    if exponent_step < 1:
        raise ValueError("exponent_step must be >= 1")
    if start < 0:
        raise ValueError("start must be >= 0")
    q = Fraction(1, ell**exponent_step)
    return q**start / (1 - q)


def format_rational(x) -> str:
    x = as_rational(x)
    if x.denominator == 1:
        return str(x.numerator)
    return f"{x.numerator}/{x.denominator}"


def parse_rational(s: str) -> Fraction:
    s = s.strip()
    if "/" in s:
        num, den = s.split("/", 1)
        return Fraction(int(num), int(den))
    return Fraction(int(s))


def format_decimal(x, places: int = 5) -> str:
    """Display-only rounding; truncates like the "0.22115..." convention."""
    x = as_rational(x)
    sign = "-" if x < 0 else ""
    x = abs(x)
    scaled = x.numerator * 10**places // x.denominator
    whole, frac = divmod(scaled, 10**places)
    return f"{sign}{whole}.{frac:0{places}d}"
