"""Empirical check: reduce a rational curve and point modulo primes and count
how often the reduced point has order prime to l.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .exactnum import format_decimal, format_rational, valuation_int


class HasseViolation(ArithmeticError):
    pass


@dataclass(frozen=True)
class CurveQ:
    a1: int
    a2: int
    a3: int
    a4: int
    a6: int
    label: str = ""

    def __post_init__(self):
        if self.discriminant == 0:
            raise ValueError("singular curve")

    @classmethod
    def from_list(cls, a: Sequence[int], label: str = "") -> "CurveQ":
        if len(a) != 5:
            raise ValueError("expected [a1, a2, a3, a4, a6]")
        return cls(*(int(v) for v in a), label=label)

    @property
    def b_invariants(self) -> tuple[int, int, int, int]:
        a1, a2, a3, a4, a6 = self.a1, self.a2, self.a3, self.a4, self.a6
        b2 = a1 * a1 + 4 * a2
        b4 = 2 * a4 + a1 * a3
        b6 = a3 * a3 + 4 * a6
        b8 = a1 * a1 * a6 + 4 * a2 * a6 - a1 * a3 * a4 + a2 * a3 * a3 - a4 * a4
        return b2, b4, b6, b8

    @property
    def c_invariants(self) -> tuple[int, int]:
        b2, b4, b6, _ = self.b_invariants
        return b2 * b2 - 24 * b4, -b2**3 + 36 * b2 * b4 - 216 * b6

    @property
    def discriminant(self) -> int:
        b2, b4, b6, b8 = self.b_invariants
        return -b2 * b2 * b8 - 8 * b4**3 - 27 * b6 * b6 + 9 * b2 * b4 * b6

    def contains(self, x: int, y: int) -> bool:
        return (y * y + self.a1 * x * y + self.a3 * y
                - (x**3 + self.a2 * x * x + self.a4 * x + self.a6)) == 0

    def to_json(self) -> dict:
        return {"label": self.label, "a": [self.a1, self.a2, self.a3, self.a4, self.a6]}


@dataclass(frozen=True)
class PointQ:
    x: int
    y: int


@dataclass(frozen=True)
class ReducedCurve:
    """Short model Y^2 = X^3 + A X + B over F_p, with the original b-invariants."""

    p: int
    A: int
    B: int
    b2: int
    b4: int
    b6: int
    a1: int
    a3: int

    def to_short(self, x: int, y: int) -> tuple[int, int]:
        p = self.p
        return (36 * x + 3 * self.b2) % p, (108 * (2 * y + self.a1 * x + self.a3)) % p


def reduce_good(curve: CurveQ, p: int) -> Optional[ReducedCurve]:
    """Reduction at a good prime p > 3, or None (skip)."""
    if p <= 3 or curve.discriminant % p == 0:
        return None
    c4, c6 = curve.c_invariants
    b2, b4, b6, _ = curve.b_invariants
    return ReducedCurve(p, (-27 * c4) % p, (-54 * c6) % p, b2 % p, b4 % p, b6 % p, curve.a1 % p, curve.a3 % p)


def group_order(red: ReducedCurve) -> int:
    """#E(F_p) = p + 1 + sum of the quadratic character of 4x^3 + b2 x^2 + 2 b4 x + b6."""
    p = red.p
    x = np.arange(p, dtype=np.int64)
    f = (4 * x + red.b2) % p
    f = (f * x + 2 * red.b4) % p
    f = (f * x + red.b6) % p
    square = np.zeros(p, dtype=bool)
    square[(x * x) % p] = True
    nonzero = f != 0
    chi = int(np.count_nonzero(square[f] & nonzero)) - int(np.count_nonzero(~square[f] & nonzero))
    n = p + 1 + chi
    if (n - p - 1) ** 2 > 4 * p:
        raise HasseViolation(f"#E(F_{p}) = {n} outside the Hasse interval")
    return n


# points on the short model; None is the identity

def _add(red: ReducedCurve, P, Q):
    p = red.p
    if P is None:
        return Q
    if Q is None:
        return P
    x1, y1 = P
    x2, y2 = Q
    if x1 == x2:
        if (y1 + y2) % p == 0:
            return None
        lam = (3 * x1 * x1 + red.A) * pow(2 * y1, -1, p) % p
    else:
        lam = (y2 - y1) * pow(x2 - x1, -1, p) % p
    x3 = (lam * lam - x1 - x2) % p
    return x3, (lam * (x1 - x3) - y1) % p


def scalar_mul(red: ReducedCurve, k: int, P):
    if k < 0:
        P = None if P is None else (P[0], (-P[1]) % red.p)
        k = -k
    out = None
    while k:
        if k & 1:
            out = _add(red, out, P)
        P = _add(red, P, P)
        k >>= 1
    return out


def factor_small(n: int) -> dict:
    out: dict = {}
    q = 2
    while q * q <= n:
        while n % q == 0:
            out[q] = out.get(q, 0) + 1
            n //= q
        q += 1 if q == 2 else 2
    if n > 1:
        out[n] = out.get(n, 0) + 1
    return out


def point_order(red: ReducedCurve, P, n: int, factored: Optional[dict] = None) -> int:
    if scalar_mul(red, n, P) is not None:
        raise ValueError("N * P is not the identity")
    o = n
    for q in (factored or factor_small(n)):
        while o % q == 0 and scalar_mul(red, o // q, P) is None:
            o //= q
    return o


def primes_up_to(bound: int) -> np.ndarray:
    sieve = np.ones(bound + 1, dtype=bool)
    sieve[:2] = False
    for q in range(2, math.isqrt(bound) + 1):
        if sieve[q]:
            sieve[q * q::q] = False
    return np.flatnonzero(sieve)


@dataclass
class SweepReport:
    bound: int
    ell: int
    scale: int
    primes_used: int
    primes_skipped: list
    count_coprime: int
    exact_reference: Optional[Fraction] = None
    rows: list = field(default_factory=list)

    @property
    def frequency(self) -> float:
        return self.count_coprime / self.primes_used if self.primes_used else float("nan")

    def to_json(self) -> dict:
        out = {
            "bound": self.bound,
            "ell": self.ell,
            "scale": self.scale,
            "primes_used": self.primes_used,
            "primes_skipped": self.primes_skipped,
            "count_coprime": self.count_coprime,
            "frequency": f"{self.frequency:.5f}",
        }
        if self.exact_reference is not None:
            out["exact"] = format_rational(self.exact_reference)
            out["exact_decimal"] = format_decimal(self.exact_reference)
            out["abs_error"] = f"{abs(self.frequency - float(self.exact_reference)):.5f}"
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["p", "N", "ord", "v_ell"])
        w.writerows(self.rows)
        return buf.getvalue()


def _sweep_chunk(args):
    curve, point, ell, scale, primes = args
    used, skipped, hits, rows = 0, [], 0, []
    for p in primes:
        red = reduce_good(curve, p)
        if red is None:
            skipped.append(p)
            continue
        n = group_order(red)
        P = red.to_short(point.x, point.y)
        Q = scalar_mul(red, ell**scale, P)
        o = point_order(red, Q, n)
        v = valuation_int(o, ell)
        used += 1
        hits += v == 0
        rows.append((p, n, o, v))
    return used, skipped, hits, rows


def empirical_density(curve: CurveQ, point: PointQ, ell: int, bound: int, scale: int = 0,
                      exact: Optional[Fraction] = None, workers: int = 1,
                      keep_rows: bool = False) -> SweepReport:
    """Frequency of good primes p <= bound at which ord(l^scale * point mod p) is prime to l."""
    if bound < 1000:
        raise ValueError("bound must be at least 1000")
    if not curve.contains(point.x, point.y):
        raise ValueError("point is not on the curve")
    primes = [int(p) for p in primes_up_to(bound)]
    chunks = [primes[i::max(workers, 1)] for i in range(max(workers, 1))]
    jobs = [(curve, point, ell, scale, c) for c in chunks]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_sweep_chunk, jobs))
    else:
        parts = [_sweep_chunk(j) for j in jobs]
    used = sum(x[0] for x in parts)
    skipped = sorted(p for x in parts for p in x[1])
    hits = sum(x[2] for x in parts)
    rows = sorted(r for x in parts for r in x[3]) if keep_rows else []
    return SweepReport(bound, ell, scale, used, skipped, hits, exact, rows)


def curve_from_spec(spec: dict) -> tuple[CurveQ, PointQ]:
    """{"label", "a": [a1, a2, a3, a4, a6], "point": [x, y]}."""
    curve = CurveQ.from_list(spec["a"], spec.get("label", ""))
    x, y = (int(v) for v in spec["point"])
    if not curve.contains(x, y):
        raise ValueError("point is not on the curve")
    return curve, PointQ(x, y)
