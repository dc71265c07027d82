"""Finite subgroups of GL2(Z/l^n): full groups, Cartans, normalizers,
explicitly generated groups and their preimages at higher level.

Every group carries an :class:`Ambient`, the smooth l-adic group it lives in
(GL2, a Cartan, or a Cartan normalizer).  Preimages are taken inside the
ambient: the lifts of M from level k to k+1 are exactly M(I + l^k V), with V
the ambient's Lie algebra.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .modmatrix import ResidueMatrix, batch_det, batch_mul

DEFAULT_SIZE_GUARD = 8_000_000


class SizeGuardError(RuntimeError):
    """An enumeration would exceed the configured element cap."""


class ClosureError(ValueError):
    """A supposed group failed a closure audit."""


def size_guard() -> int:
    return int(os.environ.get("ORDER_DENSITY_SIZE_GUARD", DEFAULT_SIZE_GUARD))


def _check_size(count: int, what: str, limit: Optional[int] = None) -> None:
    limit = size_guard() if limit is None else limit
    if count > limit:
        raise SizeGuardError(f"{what} needs {count} elements, above the size guard {limit}")


def gl_b(t: int, b: int = 2) -> int:
    """#GL_b(F_t) as the polynomial prod_{k<b} (t^b - t^k)."""
    out = 1
    for k in range(b):
        out *= t**b - t**k
    return out


def gl2_order(ell: int, n: int) -> int:
    return gl_b(ell) * ell ** (4 * (n - 1))


# ---------------------------------------------------------------------------
# ambient groups


@dataclass(frozen=True)
class Ambient:
    """GL2, the Cartan {x I + y phi} with phi = [[0, d], [1, r]], or its normalizer.

    ``phi`` satisfies phi^2 = r phi + d.  The normalizer adds the coset w C with
    w = [[1, r], [0, -1]], which conjugates phi to r - phi.
    """

    kind: str = "gl2"
    d: int = 0
    r: int = 0

    def __post_init__(self):
        if self.kind not in ("gl2", "cartan", "normalizer"):
            raise ValueError(f"unknown ambient kind {self.kind!r}")

    @property
    def rank(self) -> int:
        return 4 if self.kind == "gl2" else 2

    def phi(self) -> tuple[int, int, int, int]:
        return (0, self.d, 1, self.r)

    def w(self) -> tuple[int, int, int, int]:
        return (1, self.r, 0, -1)

    def lie_basis(self) -> np.ndarray:
        if self.kind == "gl2":
            return np.eye(4, dtype=np.int64)
        return np.array([(1, 0, 0, 1), self.phi()], dtype=np.int64)

    def cartan_coords(self, x: np.ndarray, q: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(in_C, in_wC, (xc, yc)) where the element is xc I + yc phi or w(xc I + yc phi)."""
        x = np.atleast_2d(x) % q
        in_c = ((x[:, 1] - self.d * x[:, 2]) % q == 0) & ((x[:, 3] - x[:, 0] - self.r * x[:, 2]) % q == 0)
        wx = batch_mul(np.array(self.w(), dtype=np.int64) % q, x, q)
        in_wc = ((wx[:, 1] - self.d * wx[:, 2]) % q == 0) & ((wx[:, 3] - wx[:, 0] - self.r * wx[:, 2]) % q == 0)
        src = np.where(in_c[:, None], x, wx)
        return in_c, in_wc & ~in_c, np.stack([src[:, 0], src[:, 2]], axis=1)

    def contains(self, x: np.ndarray, ell: int, level: int) -> np.ndarray:
        q = ell**level
        x = np.atleast_2d(x) % q
        unit = batch_det(x, q) % ell != 0
        if self.kind == "gl2":
            return unit
        in_c, in_wc, _ = self.cartan_coords(x, q)
        if self.kind == "cartan":
            return unit & in_c
        return unit & (in_c | in_wc)

    def coset_labels(self, x: np.ndarray, ell: int, level: int) -> np.ndarray:
        """0 on the Cartan, 1 on the nontrivial coset (always 0 for GL2 and C)."""
        if self.kind != "normalizer":
            return np.zeros(len(x), dtype=np.int8)
        in_c, _, _ = self.cartan_coords(x, ell**level)
        return np.where(in_c, 0, 1).astype(np.int8)

    def canonical_lift(self, x: np.ndarray, ell: int, level: int) -> np.ndarray:
        """Integer representatives of ``x`` (given mod l^level) that stay in the ambient at every level."""
        if self.kind == "gl2":
            return x
        q = ell**level
        in_c, _, coords = self.cartan_coords(x, q)
        xc, yc = coords[:, 0], coords[:, 1]
        c = np.stack([xc, self.d * yc, yc, xc + self.r * yc], axis=1)
        w = self.w()
        wc = np.stack([w[0] * c[:, 0] + w[1] * c[:, 2], w[0] * c[:, 1] + w[1] * c[:, 3],
                       w[2] * c[:, 0] + w[3] * c[:, 2], w[2] * c[:, 1] + w[3] * c[:, 3]], axis=1)
        return np.where(in_c[:, None], c, wc)

    def to_json(self) -> dict:
        return {"kind": self.kind, "d": self.d, "r": self.r}


GL2 = Ambient("gl2")


# ---------------------------------------------------------------------------
# the group container


def _encode(x: np.ndarray, q: int) -> np.ndarray:
    return ((x[:, 0] * q + x[:, 1]) * q + x[:, 2]) * q + x[:, 3]


def _decode(keys: np.ndarray, q: int) -> np.ndarray:
    out = np.empty((len(keys), 4), dtype=np.int64)
    k = keys.copy()
    for col in (3, 2, 1, 0):
        out[:, col] = k % q
        k //= q
    return out


@dataclass
class MatrixGroupLevel:
    ell: int
    level: int
    elements: np.ndarray
    generators: list = field(default_factory=list)
    tag: str = "generated"
    ambient: Ambient = GL2
    base: Optional["MatrixGroupLevel"] = None

    def __post_init__(self):
        q = self.modulus
        keys = np.unique(_encode(np.asarray(self.elements, dtype=np.int64) % q, q))
        self.elements = _decode(keys, q)

    @property
    def modulus(self) -> int:
        return self.ell**self.level

    @property
    def order(self) -> int:
        return len(self.elements)

    def __len__(self) -> int:
        return len(self.elements)

    def matrices(self) -> Iterable[ResidueMatrix]:
        for row in self.elements:
            yield ResidueMatrix(self.ell, self.level, tuple(int(v) for v in row))

    def contains(self, x: np.ndarray) -> np.ndarray:
        q = self.modulus
        keys = _encode(np.atleast_2d(np.asarray(x, dtype=np.int64)) % q, q)
        mine = _encode(self.elements, q)
        pos = np.searchsorted(mine, keys)
        pos = np.minimum(pos, len(mine) - 1)
        return mine[pos] == keys

    def reduce(self, level: int) -> "MatrixGroupLevel":
        if level > self.level:
            raise ValueError("cannot reduce to a higher level")
        return MatrixGroupLevel(self.ell, level, self.elements % self.ell**level, list(self.generators),
                                f"reduction-of({self.tag})", self.ambient)

    def coset_labels(self) -> np.ndarray:
        return self.ambient.coset_labels(self.elements, self.ell, self.level)

    def spec_header(self) -> dict:
        return {"ell": self.ell, "level": self.level}


def closure_audit(group: MatrixGroupLevel, max_pairs: int = 5_000_000, samples: int = 100_000,
                  seed: int = 0) -> None:
    """Check identity, products and inverses; exhaustive when small, sampled otherwise."""
    q = group.modulus
    els = group.elements
    if not group.contains(np.array([1, 0, 0, 1]))[0]:
        raise ClosureError("identity missing")
    n = len(els)
    if n * n <= max_pairs:
        left = np.repeat(els, n, axis=0)
        right = np.tile(els, (n, 1))
    else:
        rng = np.random.default_rng(seed)
        left = els[rng.integers(0, n, samples)]
        right = els[rng.integers(0, n, samples)]
    if not group.contains(batch_mul(left, right, q)).all():
        raise ClosureError("product left the set")
    det = batch_det(els, q)
    if (det % group.ell == 0).any():
        raise ClosureError("non-invertible element")


# ---------------------------------------------------------------------------
# lifting


def lift_elements(x: np.ndarray, ell: int, level: int, ambient: Ambient) -> np.ndarray:
    """All ambient lifts to level+1 of the elements ``x`` given mod l^level."""
    q_next = ell ** (level + 1)
    base = ambient.canonical_lift(np.asarray(x, dtype=np.int64), ell, level) % q_next
    basis = ambient.lie_basis()
    r = len(basis)
    # tangent directions M * tau_i, only needed mod l
    dirs = np.stack([batch_mul(base, basis[i], ell) for i in range(r)], axis=1)  # (N, r, 4)
    coeffs = np.indices((ell,) * r).reshape(r, -1).T  # (l^r, r)
    shifts = np.matmul(coeffs[None], dirs) % ell  # (N, l^r, 4)
    step = ell**level
    out = (base[:, None, :] + step * shifts) % q_next
    return out.reshape(-1, 4)


# ---------------------------------------------------------------------------
# constructors


def _level_one_gl2(ell: int) -> np.ndarray:
    idx = np.indices((ell,) * 4).reshape(4, -1).T.astype(np.int64)
    return idx[batch_det(idx, ell) != 0]


def gl2_full(ell: int, n: int) -> MatrixGroupLevel:
    _check_size(gl2_order(ell, n), f"GL2(Z/{ell}^{n})")
    els = _level_one_gl2(ell)
    for k in range(1, n):
        els = lift_elements(els, ell, k, GL2)
    return MatrixGroupLevel(ell, n, els, [], "full", GL2)


def cartan_type(ell: int, d: int, r: int = 0) -> str:
    """split / nonsplit / ramified, from x^2 - r x - d over Z_l."""
    if ell == 2:
        if r % 2 == 0:
            return "ramified"
        return "split" if d % 2 == 0 else "nonsplit"
    disc = (r * r + 4 * d) % ell
    if disc == 0:
        return "ramified"
    return "split" if pow(disc, (ell - 1) // 2, ell) == 1 else "nonsplit"


def standard_cartan_params(ell: int, split: bool) -> tuple[int, int]:
    """(d, r) of an unramified Cartan: (0, d) for odd l, (r, d) = (1, *) at l = 2."""
    if ell == 2:
        return (0, 1) if split else (1, 1)
    if split:
        return (1, 0)
    d = next(x for x in range(2, ell) if pow(x, (ell - 1) // 2, ell) == ell - 1)
    return (d, 0)


def _cartan_elements(ell: int, n: int, d: int, r: int) -> np.ndarray:
    q = ell**n
    xs, ys = np.indices((q, q)).reshape(2, -1).astype(np.int64)
    c = np.stack([xs, (d * ys) % q, ys, (xs + r * ys) % q], axis=1)
    return c[batch_det(c, q) % ell != 0]


def cartan(ell: int, n: int, d: int, r: int = 0) -> MatrixGroupLevel:
    """Invertible x I + y phi mod l^n, phi = [[0, d], [1, r]]."""
    _check_size(ell ** (2 * n), f"Cartan mod {ell}^{n}")
    amb = Ambient("cartan", d % ell**n, r % ell**n)
    els = _cartan_elements(ell, n, d, r)
    return MatrixGroupLevel(ell, n, els, [], f"cartan({d},{r})", amb)


def normalizer_cartan(c: MatrixGroupLevel) -> MatrixGroupLevel:
    """C union w C for a Cartan built by :func:`cartan`."""
    amb = c.ambient
    if amb.kind != "cartan":
        raise ClosureError("normalizer_cartan expects a group built by cartan()")
    q = c.modulus
    w = np.array(amb.w(), dtype=np.int64) % q
    # w phi w^-1 = r - phi keeps C stable
    conj = batch_mul(batch_mul(w, c.elements, q), w, q)
    if not c.contains(conj).all():
        raise ClosureError("w does not normalize C")
    wc = batch_mul(w, c.elements, q)
    els = np.concatenate([c.elements, wc])
    namb = Ambient("normalizer", amb.d, amb.r)
    out = MatrixGroupLevel(c.ell, c.level, els, [], f"normalizer({amb.d},{amb.r})", namb)
    if out.order != 2 * c.order:
        raise ClosureError("w C overlaps C")
    return out


def _as_rows(gens, ell: int, n: int) -> np.ndarray:
    rows = []
    for g in gens:
        if isinstance(g, ResidueMatrix):
            rows.append(g.entries)
        else:
            g = np.asarray(g, dtype=np.int64).reshape(-1)
            rows.append(tuple(int(v) for v in g))
    return np.array(rows, dtype=np.int64).reshape(-1, 4) % ell**n


def generated_subgroup(ell: int, n: int, gens: Sequence, ambient: Ambient = GL2,
                       limit: Optional[int] = None) -> MatrixGroupLevel:
    """Closure of ``gens`` under multiplication (breadth-first from I)."""
    q = ell**n
    g = _as_rows(gens, ell, n)
    if len(g) and (batch_det(g, q) % ell == 0).any():
        raise ValueError("generators must be invertible")
    if len(g) and not ambient.contains(g, ell, n).all():
        raise ValueError("generators are not in the declared ambient group")
    limit = size_guard() if limit is None else limit
    seen = np.array([_encode(np.array([[1, 0, 0, 1]]), q)[0]])
    frontier = np.array([[1, 0, 0, 1]], dtype=np.int64)
    while len(frontier) and len(g):
        new = np.concatenate([batch_mul(frontier, gi, q) for gi in g])
        keys = np.unique(_encode(new, q))
        keys = np.setdiff1d(keys, seen, assume_unique=True)
        seen = np.union1d(seen, keys)
        _check_size(len(seen), "generated subgroup", limit)
        frontier = _decode(keys, q)
    return MatrixGroupLevel(ell, n, _decode(seen, q), [tuple(int(v) for v in row) for row in g],
                            "generated", ambient)


def preimage_group(group: MatrixGroupLevel, n: int) -> MatrixGroupLevel:
    """All ambient matrices mod l^n reducing into ``group``."""
    m = group.level
    if n < m:
        raise ValueError("target level below the group's level")
    if n == m:
        return group
    _check_size(group.order * group.ell ** (group.ambient.rank * (n - m)), "preimage group")
    els = group.elements
    for k in range(m, n):
        els = lift_elements(els, group.ell, k, group.ambient)
    return MatrixGroupLevel(group.ell, n, els, list(group.generators), f"preimage-of(level {m})",
                            group.ambient, base=group)


def conjugate_group(group: MatrixGroupLevel, p, ambient: Optional[Ambient] = None) -> MatrixGroupLevel:
    """P G P^-1, optionally re-declared inside another ambient."""
    q = group.modulus
    pm = _as_rows([p], group.ell, group.level)[0]
    det = int(batch_det(pm[None], q)[0])
    if det % group.ell == 0:
        raise ValueError("conjugating matrix must be invertible")
    dinv = pow(det, -1, q)
    pinv = np.array([pm[3] * dinv, -pm[1] * dinv, -pm[2] * dinv, pm[0] * dinv], dtype=np.int64) % q
    els = batch_mul(batch_mul(pm, group.elements, q), pinv, q)
    gens = []
    if group.generators:
        gens = [tuple(int(v) for v in row)
                for row in batch_mul(batch_mul(pm, np.array(group.generators, dtype=np.int64), q), pinv, q)]
    amb = group.ambient if ambient is None else ambient
    if not amb.contains(els, group.ell, group.level).all():
        raise ValueError("conjugated group is not inside the requested ambient")
    return MatrixGroupLevel(group.ell, group.level, els, gens, f"conjugate({group.tag})", amb)


def reduction_kernel_size(group: MatrixGroupLevel) -> int:
    """#ker(G(n) -> G(n-1)): elements congruent to I mod l^(n-1)."""
    n = group.level
    if n < 2:
        raise ValueError("need level >= 2")
    low = group.ell ** (n - 1)
    x = group.elements % low
    ident = np.array([1, 0, 0, 1]) % low
    return int((x == ident).all(axis=1).sum())


# ---------------------------------------------------------------------------
# JSON group specs


def group_from_spec(spec: dict, materialize: bool = True) -> MatrixGroupLevel:
    """Build a group from {"ell", "level", "mode", "d"?, "r"?, "generators"?, "base_level"?, "ambient"?,
    "conjugate_by"?}.

    With ``materialize=False`` preimage-type groups are returned at their base
    level; measures at higher levels are then obtained by lifting.
    """
    ell = int(spec["ell"])
    level = int(spec["level"])
    mode = spec.get("mode", "full")
    base_level = min(int(spec.get("base_level", 1)), level)
    target = level if materialize else base_level
    if mode == "full":
        return gl2_full(ell, target)
    if mode == "cartan":
        c = cartan(ell, base_level, int(spec["d"]), int(spec.get("r", 0)))
        return preimage_group(c, target)
    if mode == "normalizer":
        nc = normalizer_cartan(cartan(ell, base_level, int(spec["d"]), int(spec.get("r", 0))))
        return preimage_group(nc, target)
    if mode in ("generated", "preimage"):
        amb = spec.get("ambient") or {"kind": "gl2"}
        ambient = Ambient(amb.get("kind", "gl2"), int(amb.get("d", 0)), int(amb.get("r", 0)))
        lvl = base_level if mode == "preimage" else level
        if "conjugate_by" in spec:
            g = generated_subgroup(ell, lvl, spec.get("generators", []))
            g = conjugate_group(g, spec["conjugate_by"], ambient)
        else:
            g = generated_subgroup(ell, lvl, spec.get("generators", []), ambient)
        return preimage_group(g, target) if mode == "preimage" else g
    raise ValueError(f"unknown group mode {mode!r}")
