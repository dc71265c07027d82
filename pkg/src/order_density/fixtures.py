"""Reference values replayed by ``order-density verify``.

Rationals are kept as strings so the suite compares against literal data
rather than recomputed constants.
"""

from __future__ import annotations

from fractions import Fraction

# (image, ell, d) -> density
CLOSED = [
    ("gl2", 2, 0, "11/21"),
    ("gl2", 2, 1, "16/21"),
    ("gl2", 2, 2, "37/42"),
    ("gl2", 3, 0, "139/208"),
    ("gl2", 3, 1, "185/208"),
    ("gl2", 3, 2, "601/624"),
    ("gl2", 5, 0, "2381/2976"),
    ("gl2", 5, 1, "2857/2976"),
    ("gl2", 7, 0, "14071/16416"),
    ("gl2", 7, 1, "16081/16416"),
    ("normsplit", 5, 0, "817/1152"),
    ("normsplit", 5, 1, "1081/1152"),
    ("normnonsplit", 2, 0, "8/15"),
    ("normnonsplit", 2, 1, "4/5"),
    ("normnonsplit", 2, 2, "109/120"),
]

# order-6 image mod 3 and its full preimage in GL2(Z_3)
INDEX8_SPEC = {
    "ell": 3,
    "level": 1,
    "mode": "generated",
    "generators": [[[1, 1], [0, 1]], [[-1, 0], [0, 1]]],
}
INDEX8_ORDER = 6
INDEX8_DENSITIES = {0: "23/104", 1: "77/104", 2: "95/104"}
INDEX8_PARTIALS = {"a0": "5/24", "b0": "1/91", "ab": "1/546"}


def index8_mu(a: int, b: int) -> Fraction:
    if a == 0 and b == 0:
        return Fraction(0)
    if a == 0:
        return Fraction(5, 3 ** (b + 1))
    if b == 0:
        return Fraction(8, 3 ** (4 * a))
    return Fraction(32, 3 ** (4 * a + b + 1))


# order-96 image mod 13 inside a split Cartan normalizer; generators are given
# in the diagonal model and moved to the (d, r) = (1, 0) model by conjugation
NORMALIZER13_SPEC = {
    "ell": 13,
    "level": 1,
    "mode": "generated",
    "generators": [[[2, 0], [0, 2]], [[5, 0], [0, 1]], [[0, 1], [-1, 0]]],
    "conjugate_by": [[1, 1], [1, -1]],
    "ambient": {"kind": "normalizer", "d": 1, "r": 0},
}
NORMALIZER13_ORDER = 96
NORMALIZER13_LEVEL1 = {
    "C": {(0, 0): "41/48", (0, 1): "1/8"},
    "N-C": {(0, 0): "11/12", (0, 1): "1/12"},
}
NORMALIZER13_DENSITIES = {0: "16801/18816", 1: "18649/18816"}


def normalizer13_mu_c(a: int, b: int) -> Fraction:
    if a == 0 and b == 0:
        return Fraction(41, 48)
    if a == 0:
        return Fraction(3, 2) / 13**b
    if b == 0:
        return Fraction(3, 13 ** (2 * a))
    return Fraction(6, 13 ** (2 * a + b))


def normalizer13_mu_star(a: int, b: int) -> Fraction:
    if a > 0:
        return Fraction(0)
    if b == 0:
        return Fraction(11, 12)
    return Fraction(1, 13**b)


# curve, point, ell, exact density, published approximation (10^5 primes)
EMPIRICAL = [
    ("37.a1", [0, 0, 1, -1, 0], (0, 0), 2, "11/21", None),
    ("153.b2", [0, 0, 1, 6, 27], (5, 13), 3, "23/104", "0.22116"),
    ("1521.b2", [0, 0, 1, 0, 7140], (56, 427), 13, "16801/18816", "0.89322"),
    ("y^2=x^3+3x", [0, 0, 0, 3, 0], (1, -2), 5, "817/1152", None),
    ("y^2=x^3+3", [0, 0, 0, 0, 3], (1, 2), 2, "8/15", None),
]
EMPIRICAL_TOLERANCE = 0.005
