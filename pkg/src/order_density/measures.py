"""Haar measures of the fixed-point classes M_{a,b}, truncation bounds, and
exact geometric tail fits.

A class (a, b) is decided modulo l^(a+b+1) and never changes under lifting,
so tables for preimage groups at high level are computed by lifting only the
still-undetermined elements: each element of G(k) has exactly l^rank lifts in
G(k+1), which makes the weights exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .exactnum import format_rational, geometric_tail, parse_rational
from .matgroups import MatrixGroupLevel, lift_elements
from .modmatrix import batch_det, batch_elementary_valuations, batch_kernel_classes, batch_minus_identity

CHUNK = 1_000_000


class FitRejected(ValueError):
    """The grid is not (yet) in the exactly geometric regime."""


@dataclass
class MeasureTable:
    ell: int
    level: int
    entries: dict = field(default_factory=dict)
    undetermined: Fraction = Fraction(0)
    tag: str = ""

    def mu(self, a: int, b: int) -> Fraction:
        if a + b >= self.level:
            raise KeyError(f"({a},{b}) is not decided at level {self.level}")
        return self.entries.get((a, b), Fraction(0))

    def total(self) -> Fraction:
        return sum(self.entries.values(), Fraction(0)) + self.undetermined

    def cells(self):
        for s in range(self.level):
            for a in range(s + 1):
                yield a, s - a

    def to_json(self) -> dict:
        return {
            "ell": self.ell,
            "level": self.level,
            "tag": self.tag,
            "entries": [{"a": a, "b": b, "mu": format_rational(self.mu(a, b))} for a, b in self.cells()],
            "undetermined": format_rational(self.undetermined),
        }

    @classmethod
    def from_json(cls, data: dict) -> "MeasureTable":
        entries = {(int(e["a"]), int(e["b"])): parse_rational(e["mu"]) for e in data["entries"]}
        entries = {k: v for k, v in entries.items() if v}
        return cls(int(data["ell"]), int(data["level"]), entries, parse_rational(data["undetermined"]),
                   data.get("tag", ""))


@dataclass
class _ClassCounts:
    """Per-coset exact masses (relative to the whole group) of each class."""

    ell: int
    level: int
    masses: dict  # label -> {(a, b): Fraction}
    undetermined: dict  # label -> Fraction
    coset_mass: dict  # label -> Fraction


def _accumulate(store: dict, labels: np.ndarray, a: np.ndarray, b: np.ndarray, weight: Fraction) -> None:
    if len(a) == 0:
        return
    keys = (labels.astype(np.int64) * 1024 + a) * 1024 + b
    uniq, counts = np.unique(keys, return_counts=True)
    for key, c in zip(uniq.tolist(), counts.tolist()):
        lab, rest = divmod(key, 1024 * 1024)
        cell = store.setdefault(lab, {})
        cell[divmod(rest, 1024)] = cell.get(divmod(rest, 1024), Fraction(0)) + c * weight


def class_counts(group: MatrixGroupLevel, level: Optional[int] = None) -> _ClassCounts:
    """Classify the group at ``level`` (default: its own level).

    Above the group's level this measures the ambient preimage of the group,
    lifting only elements whose class is not yet decided.
    """
    ell, m = group.ell, group.level
    level = m if level is None else level
    if level < m:
        raise ValueError("level below the group's level")
    rank = group.ambient.rank
    order = group.order
    masses: dict = {}
    undetermined: dict = {}

    labels = group.coset_labels()
    coset_mass = {int(lab): Fraction(int(c), order) for lab, c in zip(*np.unique(labels, return_counts=True))}

    weight = Fraction(1, order)
    det, a, b = batch_kernel_classes(group.elements, ell, m)
    _accumulate(masses, labels[det], a[det], b[det], weight)
    for lab in coset_mass:
        undetermined[lab] = Fraction(0)
        masses.setdefault(lab, {})
    # depth-first over chunks keeps memory bounded by about CHUNK lifted elements per level
    batch = max(1, CHUNK // ell**rank)
    stack = [(group.elements[~det], labels[~det], m, weight)]
    while stack:
        pending, pending_labels, k, w = stack.pop()
        if k == level or len(pending) == 0:
            for lab, c in zip(*np.unique(pending_labels, return_counts=True)):
                undetermined[int(lab)] += int(c) * w
            continue
        if len(pending) > batch:
            for start in range(0, len(pending), batch):
                stack.append((pending[start:start + batch], pending_labels[start:start + batch], k, w))
            continue
        w_next = w / ell**rank
        kids = lift_elements(pending, ell, k, group.ambient)
        kid_labels = np.repeat(pending_labels, ell**rank)
        det, a, b = batch_kernel_classes(kids, ell, k + 1)
        _accumulate(masses, kid_labels[det], a[det], b[det], w_next)
        stack.append((kids[~det], kid_labels[~det], k + 1, w_next))
    return _ClassCounts(ell, level, masses, undetermined, coset_mass)


def measure_table(group: MatrixGroupLevel, level: Optional[int] = None) -> MeasureTable:
    """mu(a, b) for all a + b < level, plus the undetermined mass."""
    counts = class_counts(group, level)
    entries: dict = {}
    for cells in counts.masses.values():
        for key, val in cells.items():
            entries[key] = entries.get(key, Fraction(0)) + val
    undetermined = sum(counts.undetermined.values(), Fraction(0))
    return MeasureTable(group.ell, counts.level, entries, undetermined, group.tag)


def split_coset_tables(group: MatrixGroupLevel, level: Optional[int] = None) -> tuple[MeasureTable, MeasureTable]:
    """Conditional tables on G ∩ C and G \\ C, each of total mass 1."""
    if group.ambient.kind != "normalizer":
        raise ValueError("split_coset_tables needs a group inside a Cartan normalizer")
    counts = class_counts(group, level)
    out = []
    for lab in (0, 1):
        share = counts.coset_mass.get(lab, Fraction(0))
        if share == 0:
            raise ValueError("group does not meet both cosets of the Cartan")
        entries = {k: v / share for k, v in counts.masses.get(lab, {}).items()}
        und = counts.undetermined.get(lab, Fraction(0)) / share
        out.append(MeasureTable(group.ell, counts.level, entries, und, f"{group.tag}:{'C' if lab == 0 else 'N-C'}"))
    return out[0], out[1]


def reduction_class_table(group: MatrixGroupLevel, coset: Optional[int] = None) -> dict:
    """Distribution of the clipped class (e1, e2 - e1) of M - I at the group's own level.

    Nothing is lifted, so classes touching the level are not yet exact; at
    level 1 this is the usual mod-l count.  ``coset`` restricts to one coset of
    a Cartan normalizer (0 for C) and normalizes on it.
    """
    x = group.elements
    if coset is not None:
        x = x[group.coset_labels() == coset]
        if len(x) == 0:
            raise ValueError("empty coset")
    e1, e2 = batch_elementary_valuations(batch_minus_identity(x, group.modulus), group.ell, group.level)
    keys, counts = np.unique(e1 * 1024 + (e2 - e1), return_counts=True)
    return {divmod(int(k), 1024): Fraction(int(c), len(x)) for k, c in zip(keys, counts)}


def coset_shares(group: MatrixGroupLevel) -> tuple[Fraction, Fraction]:
    labels = group.coset_labels()
    n1 = int((labels == 1).sum())
    return Fraction(group.order - n1, group.order), Fraction(n1, group.order)


def merge_tables(tables: Sequence[MeasureTable], weights: Sequence[Fraction]) -> MeasureTable:
    level = min(t.level for t in tables)
    entries: dict = {}
    und = Fraction(0)
    for t, w in zip(tables, weights):
        for key, val in t.entries.items():
            if sum(key) < level:
                entries[key] = entries.get(key, Fraction(0)) + w * val
        und += w * t.undetermined
        und += w * sum((v for k, v in t.entries.items() if sum(k) >= level), Fraction(0))
    return MeasureTable(tables[0].ell, level, entries, und, "merged")


def singular_mass(group: MatrixGroupLevel, k: int) -> Fraction:
    """Mass of {M : det(M - I) = 0 mod l^k}, computed at the group's level (k <= level)."""
    if k > group.level:
        raise ValueError("k must not exceed the group's level")
    if k <= 0:
        return Fraction(1)
    q = group.modulus
    det = batch_det(batch_minus_identity(group.elements, q), q)
    hits = int((det % group.ell**k == 0).sum())
    return Fraction(hits, group.order)


# ---------------------------------------------------------------------------
# tail models


@dataclass(frozen=True)
class AdmissiblePiece:
    """Value c * l^(-alpha a - beta b) on A x B, each factor a finite set or a tail."""

    kind: str  # "a0" (a = 0), "b0" (b = 0) or "ab" (a, b >= 1)
    a_set: Optional[frozenset] = None
    a_from: Optional[int] = None
    b_set: Optional[frozenset] = None
    b_from: Optional[int] = None
    c: Fraction = Fraction(0)
    alpha: int = 0
    beta: int = 0

    def contains(self, a: int, b: int) -> bool:
        in_a = a in self.a_set if self.a_set is not None else a >= self.a_from
        in_b = b in self.b_set if self.b_set is not None else b >= self.b_from
        return in_a and in_b

    def value(self, ell: int, a: int, b: int) -> Fraction:
        return self.c * Fraction(1, ell ** (self.alpha * a + self.beta * b))

    def to_json(self) -> dict:
        out: dict = {"kind": self.kind}
        if self.a_set is not None:
            out["a_set"] = sorted(self.a_set)
        else:
            out["a_from"] = self.a_from
        if self.b_set is not None:
            out["b_set"] = sorted(self.b_set)
        else:
            out["b_from"] = self.b_from
        out.update(c=format_rational(self.c), alpha=self.alpha, beta=self.beta)
        return out


def _axis_sum(ell: int, step: int, finite: Optional[frozenset], start: Optional[int]) -> Fraction:
    if finite is not None:
        return sum((Fraction(1, ell ** (step * x)) for x in finite), Fraction(0))
    return geometric_tail(ell, step, start)


def piece_mass(piece: AdmissiblePiece, ell: int) -> Fraction:
    if piece.c == 0:
        return Fraction(0)
    return (piece.c * _axis_sum(ell, piece.alpha, piece.a_set, piece.a_from)
            * _axis_sum(ell, piece.beta, piece.b_set, piece.b_from))


@dataclass
class TailModel:
    ell: int
    grid: dict
    pieces: list
    level: int
    tag: str = ""

    def mu(self, a: int, b: int) -> Fraction:
        if (a, b) in self.grid:
            return self.grid[(a, b)]
        for p in self.pieces:
            if p.contains(a, b):
                return p.value(self.ell, a, b)
        raise KeyError(f"({a},{b}) not covered")

    def total(self) -> Fraction:
        return sum(self.grid.values(), Fraction(0)) + sum((piece_mass(p, self.ell) for p in self.pieces),
                                                          Fraction(0))

    def to_json(self) -> dict:
        return {
            "ell": self.ell,
            "level": self.level,
            "tag": self.tag,
            "entries": [{"a": a, "b": b, "mu": format_rational(v)} for (a, b), v in sorted(self.grid.items())],
            "pieces": [p.to_json() for p in self.pieces],
        }


def _power_exponent(ratio: Fraction, ell: int) -> Optional[int]:
    """k >= 1 with ratio == l^k, else None."""
    if ratio.denominator != 1 or ratio.numerator <= 1:
        return None
    n, k = ratio.numerator, 0
    while n % ell == 0:
        n //= ell
        k += 1
    return k if n == 1 else None


def _fit_line(ell: int, near: Fraction, far: Fraction, far_pos: int):
    """(c, k) with value(x) = c * l^(-k x) through x = far_pos - 1 and far_pos."""
    if near == 0 and far == 0:
        return Fraction(0), 0
    if near == 0 or far == 0:
        return None
    k = _power_exponent(near / far, ell)
    if k is None:
        return None
    return far * ell ** (k * far_pos), k


def _fit_edge(ell: int, values: dict, top: int, kind: str):
    """Fit x -> values[x] on x = 1..top; returns (piece, exceptions)."""
    if top < 3:
        raise FitRejected(f"regime {kind}: need at least 3 points, level too low")
    fit = _fit_line(ell, values[top - 1], values[top], top)
    if fit is None:
        raise FitRejected(f"regime {kind}: top two values are not geometric")
    c, k = fit
    law = lambda x: c * Fraction(1, ell ** (k * x))  # noqa: E731
    start = top + 1
    while start > 1 and values[start - 1] == law(start - 1):
        start -= 1
    if start > top - 2:
        raise FitRejected(f"regime {kind}: no held-out value confirms the fit")
    exceptions = {x: values[x] for x in range(1, start)}
    if kind == "a0":
        piece = AdmissiblePiece("a0", a_set=frozenset({0}), b_from=start, c=c, alpha=0, beta=k)
    else:
        piece = AdmissiblePiece("b0", a_from=start, b_set=frozenset({0}), c=c, alpha=k, beta=0)
    return piece, exceptions


def _fit_interior(ell: int, values: dict, top: int):
    """Fit (a, b) -> c l^(-alpha a - beta b) on a, b >= 1, a + b <= top."""
    if top < 4:
        raise FitRejected("interior: need a + b up to 4 for a held-out check, level too low")
    v1 = values[(1, top - 1)]
    v0 = values[(1, top - 2)]
    v2 = values[(2, top - 2)]
    if v0 == v1 == v2 == 0:
        c, alpha, beta = Fraction(0), 0, 0
    elif 0 in (v0, v1, v2):
        raise FitRejected("interior: mixed zero and nonzero fit values")
    else:
        beta = _power_exponent(v0 / v1, ell)
        alpha = _power_exponent(v0 / v2, ell)
        if alpha is None or beta is None:
            raise FitRejected("interior: fit values are not geometric")
        c = v1 * ell ** (alpha + beta * (top - 1))

    def law(a, b):
        return c * Fraction(1, ell ** (alpha * a + beta * b))

    fit_cells = {(1, top - 1), (1, top - 2), (2, top - 2)}
    interior = [(a, s - a) for s in range(2, top + 1) for a in range(1, s)]
    for box in range(1, top + 1):
        checked = [cell for cell in interior if not (cell[0] < box and cell[1] < box)]
        if all(values[cell] == law(*cell) for cell in checked):
            break
    else:
        raise FitRejected("interior: law fails near the top diagonal")
    held_out = [cell for cell in checked if cell not in fit_cells]
    if not held_out:
        raise FitRejected("interior: no held-out value confirms the fit")
    pieces = [AdmissiblePiece("ab", a_from=box, b_from=1, c=c, alpha=alpha, beta=beta)]
    if box > 1:
        pieces.append(AdmissiblePiece("ab", a_set=frozenset(range(1, box)), b_from=box, c=c, alpha=alpha,
                                      beta=beta))
    exceptions = {cell: values[cell] for cell in interior if cell[0] < box and cell[1] < box}
    return pieces, exceptions


def check_level_stability(tables: Sequence[MeasureTable]) -> None:
    """Shared cells of tables at different levels must agree exactly."""
    for t in tables[1:]:
        if t.ell != tables[0].ell:
            raise ValueError("tables for different primes")
    for i, s in enumerate(tables):
        for t in tables[i + 1:]:
            low = min(s.level, t.level)
            for a, b in s.cells():
                if a + b < low and s.mu(a, b) != t.mu(a, b):
                    raise FitRejected(f"mu({a},{b}) differs between levels {s.level} and {t.level}")


def fit_tail(tables) -> TailModel:
    """Exact geometric tails for the regimes {a=0}, {b=0}, {a,b>=1}.

    Uses the highest-level table; every regime is fitted on its top points and
    must reproduce at least one further grid value exactly.  The result must
    carry total mass exactly 1.
    """
    if isinstance(tables, MeasureTable):
        tables = [tables]
    tables = sorted(tables, key=lambda t: t.level)
    check_level_stability(tables)
    t = tables[-1]
    ell, top = t.ell, t.level - 1
    grid = {(0, 0): t.mu(0, 0)}
    piece_a, exc_a = _fit_edge(ell, {b: t.mu(0, b) for b in range(1, top + 1)}, top, "a0")
    piece_b, exc_b = _fit_edge(ell, {a: t.mu(a, 0) for a in range(1, top + 1)}, top, "b0")
    interior = {(a, s - a): t.mu(a, s - a) for s in range(2, top + 1) for a in range(1, s)}
    pieces_ab, exc_ab = _fit_interior(ell, interior, top)
    grid.update({(0, b): v for b, v in exc_a.items()})
    grid.update({(a, 0): v for a, v in exc_b.items()})
    grid.update(exc_ab)
    model = TailModel(ell, grid, [piece_a, piece_b, *pieces_ab], t.level, t.tag)
    total = model.total()
    if total != 1:
        raise FitRejected(f"fitted model has total mass {total}, not 1")
    return model
