"""Exact densities: closed formulas for surjective arboreal images, the series
sum over (a, b) of mu(M_ab) l^(-2a-b) delta(a, b) evaluated on tail models,
and instance checks of the denominator and limit theorems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Mapping, Optional, Union

from .exactnum import format_decimal, format_rational, in_z_inv_ell
from .measures import AdmissiblePiece, TailModel


class ImageType(str, Enum):
    GL2_FULL = "gl2"
    SPLIT_CARTAN = "split"
    NONSPLIT_CARTAN = "nonsplit"
    NORM_SPLIT = "normsplit"
    NORM_NONSPLIT = "normnonsplit"
    EXPLICIT = "explicit"

    @classmethod
    def parse(cls, s: Union[str, "ImageType"]) -> "ImageType":
        if isinstance(s, cls):
            return s
        try:
            return cls(s.lower())
        except ValueError:
            raise ValueError(f"unknown image type {s!r}; expected one of "
                             f"{', '.join(m.value for m in cls)}") from None

    @property
    def is_cm(self) -> bool:
        return self not in (ImageType.GL2_FULL, ImageType.EXPLICIT)


@dataclass
class DensityResult:
    value: Fraction
    method: str
    ell: int
    defect: Optional[int] = None
    failure: Optional[Fraction] = None
    image: Optional[str] = None
    lower: Optional[Fraction] = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "value": format_rational(self.value),
            "decimal": format_decimal(self.value),
            "method": self.method,
            "ell": self.ell,
        }
        if self.lower is not None:
            out["lower"] = format_rational(self.lower)
            out["lower_decimal"] = format_decimal(self.lower)
        if self.defect is not None:
            out["defect"] = self.defect
        if self.failure is not None:
            out["failure"] = format_rational(self.failure)
        if self.image is not None:
            out["image"] = self.image
        out.update(self.extra)
        return out


# ---------------------------------------------------------------------------
# closed forms


def _torus_factor(ell: int, d: int) -> Fraction:
    return 1 - Fraction(ell) ** (1 - d) / (ell**2 - 1)


def _split(ell: int, d: int) -> Fraction:
    return _torus_factor(ell, d) ** 2


def _nonsplit(ell: int, d: int) -> Fraction:
    return 1 - Fraction(ell) ** (2 * (1 - d)) / (ell**4 - 1)


def closed_density(image, ell: int, d: int) -> Fraction:
    """Density for a surjective arboreal image with Kummer defect ``d``."""
    image = ImageType.parse(image)
    if d < 0:
        raise ValueError("defect must be >= 0")
    if image is ImageType.GL2_FULL:
        return 1 - Fraction(ell) ** (1 - d) * (ell**3 - ell - 1) / ((ell**2 - 1) * (ell**3 - 1))
    if image is ImageType.SPLIT_CARTAN:
        return _split(ell, d)
    if image is ImageType.NONSPLIT_CARTAN:
        return _nonsplit(ell, d)
    if image is ImageType.NORM_SPLIT:
        return (_torus_factor(ell, d) + _split(ell, d)) / 2
    if image is ImageType.NORM_NONSPLIT:
        return (_torus_factor(ell, d) + _nonsplit(ell, d)) / 2
    raise ValueError("explicit images have no closed form; use sum_series")


# ---------------------------------------------------------------------------
# series over tail models


def _geom(ell: int, step: int, xs) -> Fraction:
    """Sum of l^(-step x) over xs: a finite iterable or ('from', x0)."""
    if isinstance(xs, tuple) and xs and xs[0] == "from":
        x0 = xs[1]
        q = Fraction(1, ell**step)
        return q**x0 / (1 - q)
    return sum((Fraction(1, ell ** (step * x)) for x in xs), Fraction(0))


def _split_axis(piece_set, piece_from, cut: int):
    """(values below cut, region at or above cut) for a finite set or a tail."""
    if piece_set is not None:
        low = sorted(x for x in piece_set if x < cut)
        high = sorted(x for x in piece_set if x >= cut)
        return low, high
    low = list(range(piece_from, cut))
    return low, ("from", max(piece_from, cut))


def _is_empty(region) -> bool:
    return not (isinstance(region, tuple) and region and region[0] == "from") and len(region) == 0


@dataclass(frozen=True)
class DefectRule:
    """Maximal Kummer growth with defect d: the weight of (a, b) is 1/#(l^d T)."""

    d: int

    def failure(self, ell: int) -> Fraction:
        return Fraction(ell ** (2 * self.d))

    def cell_weight(self, ell: int, a: int, b: int) -> Fraction:
        return Fraction(1, ell ** (max(a - self.d, 0) + max(a + b - self.d, 0)))

    def piece_sum(self, ell: int, p: AdmissiblePiece) -> Fraction:
        d = self.d
        total = Fraction(0)
        a_low, a_high = _split_axis(p.a_set, p.a_from, d)
        for a in a_low:
            b_low, b_high = _split_axis(p.b_set, p.b_from, d - a)
            for b in b_low:
                total += p.value(ell, a, b)
            if not _is_empty(b_high):
                # weight l^(d - a - b)
                total += (p.c * Fraction(1, ell ** (p.alpha * a)) * Fraction(ell) ** (d - a)
                          * _geom(ell, p.beta + 1, b_high))
        if not _is_empty(a_high):
            b_all = list(p.b_set) if p.b_set is not None else ("from", p.b_from)
            # weight l^(2d - 2a - b)
            total += (p.c * Fraction(ell ** (2 * d)) * _geom(ell, p.alpha + 2, a_high)
                      * _geom(ell, p.beta + 1, b_all))
        return total


@dataclass(frozen=True)
class TableRule:
    """Explicit arboreal data: F times l^(-2a-b) delta(a, b), with delta known on
    grid cells and constant on each tail regime ("a0", "b0", "ab")."""

    failure_constant: Fraction
    cells: Mapping
    regimes: Mapping

    def failure(self, ell: int) -> Fraction:
        return Fraction(self.failure_constant)

    def cell_weight(self, ell: int, a: int, b: int) -> Fraction:
        if (a, b) not in self.cells:
            raise KeyError(f"delta({a},{b}) not supplied")
        return self.failure_constant * Fraction(1, ell ** (2 * a + b)) * self.cells[(a, b)]

    def piece_sum(self, ell: int, p: AdmissiblePiece) -> Fraction:
        if p.c == 0:
            return Fraction(0)
        if p.kind not in self.regimes:
            raise KeyError(f"no delta for tail regime {p.kind!r}")
        a_region = sorted(p.a_set) if p.a_set is not None else ("from", p.a_from)
        b_region = sorted(p.b_set) if p.b_set is not None else ("from", p.b_from)
        return (self.failure_constant * self.regimes[p.kind] * p.c
                * _geom(ell, p.alpha + 2, a_region) * _geom(ell, p.beta + 1, b_region))


DeltaRule = Union[DefectRule, TableRule]


def sum_series(model: TailModel, rule: DeltaRule) -> Fraction:
    """Exact sum of mu(a,b) * weight(a,b) over all of N^2."""
    ell = model.ell
    total = Fraction(0)
    for (a, b), mu in model.grid.items():
        if mu:
            total += mu * rule.cell_weight(ell, a, b)
    for p in model.pieces:
        if p.c:
            total += rule.piece_sum(ell, p)
    return total


def series_partials(model: TailModel, rule: DeltaRule) -> dict:
    """Contribution of the grid and of each tail regime separately."""
    ell = model.ell
    out = {"grid": sum((mu * rule.cell_weight(ell, a, b) for (a, b), mu in model.grid.items() if mu),
                       Fraction(0))}
    for p in model.pieces:
        out[p.kind] = out.get(p.kind, Fraction(0)) + (rule.piece_sum(ell, p) if p.c else Fraction(0))
    return out


def scaled_density(ell: int, d: int, k: int, image=None, model: Optional[TailModel] = None) -> Fraction:
    """Density of l^k alpha: the same image with defect d + k."""
    if k < 0:
        raise ValueError("k must be >= 0")
    if model is not None:
        return sum_series(model, DefectRule(d + k))
    return closed_density(image, ell, d + k)


# ---------------------------------------------------------------------------
# audits


def denominator_audit(x, ell: int, cm: bool) -> bool:
    """x (l-1)(l^2-1)^2(l^E-1) in Z[1/l], E = 4 with CM and 6 otherwise."""
    e = 4 if cm else 6
    factor = (ell - 1) * (ell**2 - 1) ** 2 * (ell**e - 1)
    return in_z_inv_ell(Fraction(x) * factor, ell)


def limit_audit(image, ell: int, max_defect: int = 20) -> bool:
    """Closed density is nondecreasing in d and 1 - value <= l^3 * l^(-d)."""
    values = [closed_density(image, ell, d) for d in range(max_defect + 1)]
    monotone = all(x <= y for x, y in zip(values, values[1:]))
    bounded = all(1 - v <= Fraction(ell**3, ell**d) for d, v in enumerate(values))
    in_range = all(0 < v <= 1 for v in values)
    return monotone and bounded and in_range
