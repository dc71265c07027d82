"""Finite-level arboreal images inside (Z/l^n)^2 x| GL2(Z/l^n).

Elements are pairs (t, M) composed as (t1, M1)(t2, M2) = (t1 + M1 t2, M1 M2).
A group is stored as its distinct matrices plus, for every element, the index
of its matrix and the key x*q + y of its translation t = (x, y).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Optional, Sequence

import numpy as np

from .matgroups import (Ambient, GL2, MatrixGroupLevel, _check_size, _decode, _encode, group_from_spec,
                        lift_elements)
from .modmatrix import ResidueMatrix, batch_kernel_classes, batch_minus_identity, batch_mul


@dataclass(frozen=True)
class ArborealElement:
    t: tuple[int, int]
    m: ResidueMatrix

    def __mul__(self, other: "ArborealElement") -> "ArborealElement":
        q = self.m.modulus
        mt = self.m.apply(other.t)
        return ArborealElement(((self.t[0] + mt[0]) % q, (self.t[1] + mt[1]) % q), self.m * other.m)

    def power(self, k: int) -> "ArborealElement":
        out = ArborealElement((0, 0), ResidueMatrix.identity(self.m.ell, self.m.level))
        for _ in range(k):
            out = out * self
        return out


def _vectors(q: int) -> np.ndarray:
    xs, ys = np.indices((q, q)).reshape(2, -1)
    return np.stack([xs, ys], axis=1).astype(np.int64)


def _apply(m: np.ndarray, t: np.ndarray, q: int) -> np.ndarray:
    """Row-wise M t for stacked M (N,4) and t (N,2)."""
    return np.stack([(m[:, 0] * t[:, 0] + m[:, 1] * t[:, 1]) % q,
                     (m[:, 2] * t[:, 0] + m[:, 3] * t[:, 1]) % q], axis=1)


def _tkey(t: np.ndarray, q: int) -> np.ndarray:
    return t[:, 0] * q + t[:, 1]


class ArborealGroupLevel:
    def __init__(self, ell: int, level: int, matrices: np.ndarray, m_index: np.ndarray, t_keys: np.ndarray,
                 ambient: Ambient = GL2, tag: str = ""):
        q = ell**level
        mkeys = _encode(np.asarray(matrices, dtype=np.int64) % q, q)
        uniq, inverse = np.unique(mkeys, return_inverse=True)
        idx = inverse.reshape(-1)[np.asarray(m_index)]
        pair = idx.astype(np.int64) * q * q + np.asarray(t_keys, dtype=np.int64)
        pair = np.unique(pair)
        self.ell = ell
        self.level = level
        self.matrices = _decode(uniq, q)
        self.m_index = pair // (q * q)
        self.t_keys = pair % (q * q)
        self.ambient = ambient
        self.tag = tag
        self._image_masks: Optional[np.ndarray] = None

    @property
    def modulus(self) -> int:
        return self.ell**self.level

    @property
    def order(self) -> int:
        return len(self.t_keys)

    def __len__(self) -> int:
        return self.order

    def matrix_projection(self) -> MatrixGroupLevel:
        return MatrixGroupLevel(self.ell, self.level, self.matrices, [], f"projection({self.tag})", self.ambient)

    def elements(self) -> Iterable[ArborealElement]:
        q = self.modulus
        for i, tk in zip(self.m_index.tolist(), self.t_keys.tolist()):
            m = ResidueMatrix(self.ell, self.level, tuple(int(v) for v in self.matrices[i]))
            yield ArborealElement(divmod(tk, q), m)

    def element_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        q = self.modulus
        t = np.stack([self.t_keys // q, self.t_keys % q], axis=1)
        return t, self.matrices[self.m_index]

    def _matrix_slot(self, m) -> int:
        q = self.modulus
        row = np.array(m.entries if isinstance(m, ResidueMatrix) else m, dtype=np.int64).reshape(1, 4) % q
        keys = _encode(self.matrices, q)
        key = _encode(row, q)[0]
        pos = int(np.searchsorted(keys, key))
        if pos >= len(keys) or keys[pos] != key:
            raise KeyError("matrix is not in the projection")
        return pos

    def fiber_keys(self, m) -> np.ndarray:
        slot = self._matrix_slot(m)
        lo, hi = np.searchsorted(self.m_index, [slot, slot + 1])
        return self.t_keys[lo:hi]

    def image_masks(self) -> np.ndarray:
        """Boolean (K, q^2): mask[i, key] iff the vector lies in im(M_i - I)."""
        if self._image_masks is None:
            q = self.modulus
            vecs = _vectors(q)
            a = batch_minus_identity(self.matrices, q)
            masks = np.zeros((len(a), q * q), dtype=bool)
            step = max(1, 2_000_000 // (q * q))
            for s in range(0, len(a), step):
                blk = a[s:s + step]
                img = np.stack([(blk[:, None, 0] * vecs[None, :, 0] + blk[:, None, 1] * vecs[None, :, 1]) % q,
                                (blk[:, None, 2] * vecs[None, :, 0] + blk[:, None, 3] * vecs[None, :, 1]) % q],
                               axis=2)
                keys = img[..., 0] * q + img[..., 1]
                rows = np.repeat(np.arange(len(blk)), q * q)
                masks[s + rows, keys.reshape(-1)] = True
            self._image_masks = masks
        return self._image_masks

    def audit_closure(self, samples: int = 20_000, seed: int = 0) -> None:
        q = self.modulus
        t, m = self.element_arrays()
        n = self.order
        if n * n <= 4_000_000:
            i = np.repeat(np.arange(n), n)
            j = np.tile(np.arange(n), n)
        else:
            rng = np.random.default_rng(seed)
            i = rng.integers(0, n, samples)
            j = rng.integers(0, n, samples)
        prod_t = (t[i] + _apply(m[i], t[j], q)) % q
        prod_m = batch_mul(m[i], m[j], q)
        other = ArborealGroupLevel(self.ell, self.level, prod_m, np.arange(len(prod_m)), _tkey(prod_t, q))
        if not self.contains_pairs(other):
            raise ValueError("arboreal set is not closed under the semidirect law")

    def contains_pairs(self, other: "ArborealGroupLevel") -> bool:
        q = self.modulus
        mine = _encode(self.matrices, q)[self.m_index] * q * q + self.t_keys
        theirs = _encode(other.matrices, q)[other.m_index] * q * q + other.t_keys
        return bool(np.isin(theirs, mine).all())


# ---------------------------------------------------------------------------
# constructors


def standard_arboreal(group: MatrixGroupLevel, d: int) -> ArborealGroupLevel:
    """{(t, M) : M in G, t in l^min(d,n) (Z/l^n)^2}: maximal Kummer growth with defect d."""
    ell, n = group.ell, group.level
    q = ell**n
    e = min(d, n)
    _check_size(group.order * ell ** (2 * (n - e)), "standard arboreal group")
    sub = _vectors(ell ** (n - e)) * ell**e
    tk = _tkey(sub, q)
    m_index = np.repeat(np.arange(group.order), len(tk))
    t_keys = np.tile(tk, group.order)
    return ArborealGroupLevel(ell, n, group.elements, m_index, t_keys, group.ambient, f"standard(d={d})")


def _as_pairs(gens: Sequence, ell: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    q = ell**n
    ts, ms = [], []
    for g in gens:
        if isinstance(g, ArborealElement):
            ts.append(g.t)
            ms.append(g.m.entries)
        else:
            t, m = g
            ts.append(tuple(int(v) for v in np.asarray(t).reshape(-1)))
            ms.append(tuple(int(v) for v in np.asarray(m).reshape(-1)))
    return (np.array(ts, dtype=np.int64).reshape(-1, 2) % q, np.array(ms, dtype=np.int64).reshape(-1, 4) % q)


def generated_arboreal(ell: int, n: int, gens: Sequence, ambient: Ambient = GL2,
                       limit: Optional[int] = None) -> ArborealGroupLevel:
    """Closure of ``gens`` under the semidirect law, starting from (0, I)."""
    q = ell**n
    gt, gm = _as_pairs(gens, ell, n)
    if len(gm) and (np.array([(r[0] * r[3] - r[1] * r[2]) % ell for r in gm]) == 0).any():
        raise ValueError("generator matrices must be invertible")

    def key(t, m):
        return _encode(m, q) * q * q + _tkey(t, q)

    seen = key(np.zeros((1, 2), dtype=np.int64), np.array([[1, 0, 0, 1]], dtype=np.int64))
    frontier_t = np.zeros((1, 2), dtype=np.int64)
    frontier_m = np.array([[1, 0, 0, 1]], dtype=np.int64)
    while len(frontier_t) and len(gm):
        new_t = np.concatenate([(frontier_t + _apply(frontier_m, np.broadcast_to(gt[i], frontier_t.shape), q)) % q
                                for i in range(len(gm))])
        new_m = np.concatenate([batch_mul(frontier_m, gm[i], q) for i in range(len(gm))])
        keys, first = np.unique(key(new_t, new_m), return_index=True)
        fresh = ~np.isin(keys, seen)
        seen = np.union1d(seen, keys[fresh])
        _check_size(len(seen), "generated arboreal group", limit)
        frontier_t, frontier_m = new_t[first[fresh]], new_m[first[fresh]]
    mkeys, tkeys = seen // (q * q), seen % (q * q)
    mats = _decode(mkeys, q)
    return ArborealGroupLevel(ell, n, mats, np.arange(len(mats)), tkeys, ambient, "generated")


def lift_arboreal(group: ArborealGroupLevel, n: int) -> ArborealGroupLevel:
    """All (t, M) mod l^n whose reduction mod l^m lies in the group (M in the ambient)."""
    ell, m = group.ell, group.level
    if n < m:
        raise ValueError("target level below the group's level")
    if n == m:
        return group
    rank = group.ambient.rank
    _check_size(group.order * ell ** ((rank + 2) * (n - m)), "lifted arboreal group")
    q_m, q = ell**m, ell**n
    mats = group.matrices
    parent = np.arange(len(mats))
    for k in range(m, n):
        kids = lift_elements(mats, ell, k, group.ambient)
        parent = np.repeat(parent, ell**rank)
        mats = kids
    # translations: every lift of each t in the fiber of the parent matrix
    base_t = np.stack([group.t_keys // q_m, group.t_keys % q_m], axis=1)
    extra = _vectors(ell ** (n - m)) * q_m
    lifted_t = ((base_t[:, None, :] + extra[None, :, :]) % q).reshape(-1, 2)
    owner = np.repeat(group.m_index, len(extra))
    # join: lifted matrices with parent p get every lifted t whose owner is p
    order = np.argsort(parent, kind="stable")
    starts = np.searchsorted(parent[order], np.arange(len(group.matrices)))
    counts = np.bincount(parent, minlength=len(group.matrices))
    t_order = np.argsort(owner, kind="stable")
    t_starts = np.searchsorted(owner[t_order], np.arange(len(group.matrices)))
    t_counts = np.bincount(owner, minlength=len(group.matrices))
    m_idx, t_idx = [], []
    for p in range(len(group.matrices)):
        ms = order[starts[p]:starts[p] + counts[p]]
        ts = t_order[t_starts[p]:t_starts[p] + t_counts[p]]
        m_idx.append(np.repeat(ms, len(ts)))
        t_idx.append(np.tile(ts, len(ms)))
    m_idx = np.concatenate(m_idx)
    t_idx = np.concatenate(t_idx)
    return ArborealGroupLevel(ell, n, mats, m_idx, _tkey(lifted_t[t_idx], q), group.ambient,
                              f"lift({group.tag})")


def arboreal_from_spec(spec: dict) -> ArborealGroupLevel:
    """{"ell", "level", "image": <group spec>, "kummer": {"mode": "defect", "d"} | {"mode": "explicit", "elements"}}."""
    ell, level = int(spec["ell"]), int(spec["level"])
    kummer = spec.get("kummer", {"mode": "defect", "d": 0})
    if kummer.get("mode", "defect") == "defect":
        image = dict(spec["image"])
        image.setdefault("ell", ell)
        image["level"] = level
        return standard_arboreal(group_from_spec(image), int(kummer.get("d", 0)))
    if kummer["mode"] == "explicit":
        return generated_arboreal(ell, level, kummer["elements"])
    raise ValueError(f"unknown kummer mode {kummer['mode']!r}")


# ---------------------------------------------------------------------------
# fibers, w and the finite-level density


def kummer_fiber(group: ArborealGroupLevel, m) -> set:
    """W_n(M) = {t : (t, M) in the group} as a set of (x, y) tuples."""
    q = group.modulus
    return {divmod(int(k), q) for k in group.fiber_keys(m)}


def _w_per_matrix(group: ArborealGroupLevel) -> list:
    masks = group.image_masks()
    hits = masks[group.m_index, group.t_keys]
    inter = np.bincount(group.m_index, weights=hits, minlength=len(group.matrices)).astype(np.int64)
    img = masks.sum(axis=1)
    return [Fraction(int(i), int(s)) for i, s in zip(inter, img)]


def w_value(group: ArborealGroupLevel, m) -> Fraction:
    """#(im(M - I) ∩ W_n(M)) / #im(M - I)."""
    slot = group._matrix_slot(m)
    mask = group.image_masks()[slot]
    fiber = group.fiber_keys(m)
    return Fraction(int(mask[fiber].sum()), int(mask.sum()))


def failure_constant(group: ArborealGroupLevel) -> Fraction:
    """l^(2n) / #W_n(I)."""
    return Fraction(group.modulus**2, len(group.fiber_keys((1, 0, 0, 1))))


def fixed_density_level(group: ArborealGroupLevel) -> Fraction:
    """#{(t, M) : t in im(M - I)} / #group, an upper approximation of the density."""
    masks = group.image_masks()
    hits = int(masks[group.m_index, group.t_keys].sum())
    return Fraction(hits, group.order)


def density_interval(group: ArborealGroupLevel, tail: Fraction) -> tuple[Fraction, Fraction]:
    hi = fixed_density_level(group)
    return max(hi - tail, Fraction(0)), hi


class EmptyClass(Fraction):
    """delta of an empty class: 0, flagged."""

    empty = True


def delta_ab(group: ArborealGroupLevel, a: int, b: int) -> Fraction:
    """Average of w over the matrices of class (a, b) at the group's level."""
    if a + b >= group.level:
        raise ValueError(f"class ({a},{b}) is not decided at level {group.level}")
    det, ca, cb = batch_kernel_classes(group.matrices, group.ell, group.level)
    sel = np.flatnonzero(det & (ca == a) & (cb == b))
    if len(sel) == 0:
        return EmptyClass(0)
    ws = _w_per_matrix(group)
    return sum((ws[i] for i in sel), Fraction(0)) / len(sel)


def delta_table(group: ArborealGroupLevel) -> dict:
    """delta(a, b) for every class decided at the group's level (empty classes omitted)."""
    det, ca, cb = batch_kernel_classes(group.matrices, group.ell, group.level)
    ws = _w_per_matrix(group)
    sums: dict = {}
    counts: dict = {}
    for i in np.flatnonzero(det).tolist():
        key = (int(ca[i]), int(cb[i]))
        sums[key] = sums.get(key, Fraction(0)) + ws[i]
        counts[key] = counts.get(key, 0) + 1
    return {k: sums[k] / counts[k] for k in sums}


def grid_series(group: ArborealGroupLevel) -> tuple[Fraction, Fraction]:
    """(F * sum over decided classes of mu l^(-2a-b) delta, undetermined mass) at the group's level.

    The finite-level density lies between the first value and the first plus
    the second.
    """
    det, ca, cb = batch_kernel_classes(group.matrices, group.ell, group.level)
    ws = _w_per_matrix(group)
    f = failure_constant(group)
    k = len(group.matrices)
    total = Fraction(0)
    for i in np.flatnonzero(det).tolist():
        total += ws[i] * Fraction(1, group.ell ** int(2 * ca[i] + cb[i]))
    return f * total / k, Fraction(int((~det).sum()), k)
