"""2x2 matrices over Z/l^n and the fixed-point invariant (a, b) of M - I.

Single matrices are :class:`ResidueMatrix` values.  Bulk work (group
enumeration, measure tables) goes through the ``batch_*`` functions, which
operate on ``int64`` arrays of shape ``(N, 4)`` holding entries in row-major
order ``(m11, m12, m21, m22)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

KernelClass = Optional[tuple[int, int]]
"""``(a, b)`` when ker(M - I) is Z/l^a x Z/l^(a+b) at every level; ``None`` if undetermined."""

# row-major positions of (pivot, same-row, same-column, opposite) per pivot slot
_PIVOT_PERM = np.array([[0, 1, 2, 3], [1, 0, 3, 2], [2, 3, 0, 1], [3, 2, 1, 0]])


@dataclass(frozen=True)
class ResidueMatrix:
    ell: int
    level: int
    entries: tuple[int, int, int, int]

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("level must be >= 1")
        q = self.ell**self.level
        object.__setattr__(self, "entries", tuple(int(x) % q for x in self.entries))

    @classmethod
    def from_rows(cls, rows: Sequence[Sequence[int]], ell: int, level: int) -> "ResidueMatrix":
        (a, b), (c, d) = rows
        return cls(ell, level, (a, b, c, d))

    @classmethod
    def identity(cls, ell: int, level: int) -> "ResidueMatrix":
        return cls(ell, level, (1, 0, 0, 1))

    @property
    def modulus(self) -> int:
        return self.ell**self.level

    def rows(self) -> list[list[int]]:
        a, b, c, d = self.entries
        return [[a, b], [c, d]]

    def det(self) -> int:
        a, b, c, d = self.entries
        return (a * d - b * c) % self.modulus

    def is_invertible(self) -> bool:
        return self.det() % self.ell != 0

    def reduce(self, level: int) -> "ResidueMatrix":
        if level > self.level:
            raise ValueError("cannot reduce to a higher level")
        return ResidueMatrix(self.ell, level, self.entries)

    def minus_identity(self) -> "ResidueMatrix":
        a, b, c, d = self.entries
        return ResidueMatrix(self.ell, self.level, (a - 1, b, c, d - 1))

    def apply(self, vec: Sequence[int]) -> tuple[int, int]:
        a, b, c, d = self.entries
        x, y = vec
        q = self.modulus
        return ((a * x + b * y) % q, (c * x + d * y) % q)

    def __mul__(self, other: "ResidueMatrix") -> "ResidueMatrix":
        return mat_mul(self, other)

    def to_json(self) -> list[list[int]]:
        return self.rows()


def _check_compatible(m: ResidueMatrix, n: ResidueMatrix) -> None:
    if (m.ell, m.level) != (n.ell, n.level):
        raise ValueError(f"level mismatch: ({m.ell},{m.level}) vs ({n.ell},{n.level})")


def mat_mul(m: ResidueMatrix, n: ResidueMatrix) -> ResidueMatrix:
    _check_compatible(m, n)
    a, b, c, d = m.entries
    e, f, g, h = n.entries
    return ResidueMatrix(m.ell, m.level, (a * e + b * g, a * f + b * h, c * e + d * g, c * f + d * h))


def mat_inv(m: ResidueMatrix) -> ResidueMatrix:
    det = m.det()
    if det % m.ell == 0:
        raise ZeroDivisionError("matrix is not invertible mod l^n")
    inv = pow(det, -1, m.modulus)
    a, b, c, d = m.entries
    return ResidueMatrix(m.ell, m.level, (d * inv, -b * inv, -c * inv, a * inv))


def mat_pow(m: ResidueMatrix, k: int) -> ResidueMatrix:
    if k < 0:
        m, k = mat_inv(m), -k
    result = ResidueMatrix.identity(m.ell, m.level)
    base = m
    while k:
        if k & 1:
            result = mat_mul(result, base)
        base = mat_mul(base, base)
        k >>= 1
    return result


# ---------------------------------------------------------------------------
# lookup tables shared by the batch routines


@lru_cache(maxsize=64)
def valuation_table(ell: int, level: int) -> np.ndarray:
    """``v[x]`` = l-adic valuation of x in Z/l^level, with ``v[0] = level``."""
    q = ell**level
    v = np.zeros(q, dtype=np.int64)
    step = ell
    k = 1
    while step <= q:
        v[::step] = k
        step *= ell
        k += 1
    v[0] = level
    v.setflags(write=False)
    return v


@lru_cache(maxsize=64)
def inverse_table(ell: int, level: int) -> np.ndarray:
    """``inv[u]`` = u^-1 mod l^level for units u, 0 elsewhere."""
    q = ell**level
    inv = np.zeros(q, dtype=np.int64)
    for u in range(1, q):
        if u % ell:
            inv[u] = pow(u, -1, q)
    inv.setflags(write=False)
    return inv


def batch_mul(x: np.ndarray, y: np.ndarray, q: int) -> np.ndarray:
    """Row-wise product of stacked 2x2 matrices (either side may be a single row)."""
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    out = np.empty((max(len(x), len(y)), 4), dtype=np.int64)
    out[:, 0] = (x[:, 0] * y[:, 0] + x[:, 1] * y[:, 2]) % q
    out[:, 1] = (x[:, 0] * y[:, 1] + x[:, 1] * y[:, 3]) % q
    out[:, 2] = (x[:, 2] * y[:, 0] + x[:, 3] * y[:, 2]) % q
    out[:, 3] = (x[:, 2] * y[:, 1] + x[:, 3] * y[:, 3]) % q
    return out


def batch_det(x: np.ndarray, q: int) -> np.ndarray:
    return (x[:, 0] * x[:, 3] - x[:, 1] * x[:, 2]) % q


def batch_minus_identity(x: np.ndarray, q: int) -> np.ndarray:
    a = x.copy()
    a[:, 0] -= 1
    a[:, 3] -= 1
    a %= q
    return a


def batch_elementary_valuations(a: np.ndarray, ell: int, level: int) -> tuple[np.ndarray, np.ndarray]:
    """Smith-form valuations (e1, e2) of each matrix in ``a`` over Z/l^level.

    Pivots on the first row-major entry of minimal valuation and reads e2 off
    the Schur complement.
    """
    q = ell**level
    a = np.asarray(a, dtype=np.int64) % q
    vtab = valuation_table(ell, level)
    vals = vtab[a]
    e1 = vals.min(axis=1)
    piv = vals.argmin(axis=1)
    p = np.take_along_axis(a, _PIVOT_PERM[piv], axis=1)
    scale = np.power(ell, np.minimum(e1, level - 1))
    unit = p[:, 0] // scale
    uinv = inverse_table(ell, level)[unit % q]
    r_red = p[:, 2] // scale
    schur = (p[:, 3] - (p[:, 1] * r_red % q) * uinv) % q
    e2 = np.where(e1 >= level, level, vtab[schur])
    return e1, e2


def batch_kernel_classes(x: np.ndarray, ell: int, level: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Kernel classes of ``x`` (not of ``x - I``): returns (determined, a, b)."""
    q = ell**level
    e1, e2 = batch_elementary_valuations(batch_minus_identity(x, q), ell, level)
    return e2 < level, e1, e2 - e1


def elementary_valuations(a: ResidueMatrix) -> tuple[int, int]:
    e1, e2 = batch_elementary_valuations(np.array([a.entries], dtype=np.int64), a.ell, a.level)
    return int(e1[0]), int(e2[0])


def kernel_class(m: ResidueMatrix) -> KernelClass:
    e1, e2 = elementary_valuations(m.minus_identity())
    if e2 < m.level:
        return (e1, e2 - e1)
    return None


def fixed_vector_count(m: ResidueMatrix) -> int:
    """#ker(M - I) on (Z/l^n)^2 by brute force (test oracle)."""
    q = m.modulus
    return sum(1 for x in range(q) for y in range(q) if m.apply((x, y)) == (x, y))


def kernel_size(a: ResidueMatrix) -> int:
    """#ker(A) on (Z/l^n)^2 by brute force."""
    q = a.modulus
    return sum(1 for x in range(q) for y in range(q) if a.apply((x, y)) == (0, 0))
