import random
from fractions import Fraction

import pytest

from order_density.curves import (CurveQ, PointQ, ReducedCurve, curve_from_spec, empirical_density,
                                  factor_small, group_order, point_order, primes_up_to, reduce_good, scalar_mul)
from order_density.exactnum import valuation_int

E37 = CurveQ.from_list([0, 0, 1, -1, 0], "37.a1")
E153 = CurveQ.from_list([0, 0, 1, 6, 27], "153.b2")


def brute_count(curve, p):
    """Projective points of the long model over F_p by enumeration."""
    n = 1
    for x in range(p):
        for y in range(p):
            lhs = y * y + curve.a1 * x * y + curve.a3 * y
            rhs = x**3 + curve.a2 * x * x + curve.a4 * x + curve.a6
            n += (lhs - rhs) % p == 0
    return n


def random_point(red, rng):
    p = red.p
    while True:
        x = rng.randrange(p)
        rhs = (x**3 + red.A * x + red.B) % p
        for y in range(p):
            if y * y % p == rhs:
                return x, y


def test_discriminants():
    assert E37.discriminant == 37
    assert E153.discriminant % 3 == 0 and E153.discriminant % 17 == 0


def test_reduce_skips():
    assert reduce_good(E37, 37) is None
    assert reduce_good(E37, 2) is None and reduce_good(E37, 3) is None
    assert isinstance(reduce_good(E37, 5), ReducedCurve)


def test_cm_curve_mod7():
    assert group_order(reduce_good(CurveQ.from_list([0, 0, 0, 3, 0]), 7)) == 8


@pytest.mark.parametrize("curve", [E37, E153, CurveQ.from_list([0, 0, 1, 0, 7140]), CurveQ.from_list([1, -1, 1, 2, 5])])
def test_group_order_matches_enumeration(curve):
    for p in [int(p) for p in primes_up_to(90) if p > 3]:
        red = reduce_good(curve, p)
        if red is not None:
            assert group_order(red) == brute_count(curve, p)


def test_lagrange_and_orders():
    rng = random.Random(1)
    for p in (101, 1009, 7919):
        red = reduce_good(E37, p)
        n = group_order(red)
        for _ in range(20):
            pt = random_point(red, rng)
            assert scalar_mul(red, n, pt) is None
            o = point_order(red, pt, n)
            assert n % o == 0 and scalar_mul(red, o, pt) is None
            for q in factor_small(o):
                assert scalar_mul(red, o // q, pt) is not None


def test_point_order_identity_and_bad_input():
    red = reduce_good(E37, 101)
    assert point_order(red, None, group_order(red)) == 1
    with pytest.raises(ValueError):
        point_order(red, red.to_short(0, 0), group_order(red) + 1)


def test_hasse_interval_holds():
    for curve in (E37, E153):
        for p in [int(p) for p in primes_up_to(20000) if p > 3][::25]:
            red = reduce_good(curve, p)
            if red is not None:
                n = group_order(red)
                assert (n - p - 1) ** 2 <= 4 * p


def test_short_model_maps_point():
    for p in (101, 103):
        red = reduce_good(E153, p)
        x, y = red.to_short(5, 13)
        assert (y * y - (x**3 + red.A * x + red.B)) % p == 0


def test_scaling_identity():
    for p in [int(p) for p in primes_up_to(3000) if p > 3][:200]:
        red = reduce_good(E153, p)
        if red is None:
            continue
        n = group_order(red)
        pt = red.to_short(5, 13)
        v0 = valuation_int(point_order(red, pt, n), 3)
        v1 = valuation_int(point_order(red, scalar_mul(red, 3, pt), n), 3)
        assert v1 == max(v0 - 1, 0)


def test_small_sweep_report():
    rep = empirical_density(E153, PointQ(5, 13), 3, 5000, keep_rows=True, exact=Fraction(23, 104))
    assert rep.count_coprime <= rep.primes_used
    assert 3 in rep.primes_skipped and 17 in rep.primes_skipped
    assert rep.to_csv().splitlines()[0] == "p,N,ord,v_ell"
    assert rep.to_json()["exact"] == "23/104"
    scaled = empirical_density(E153, PointQ(5, 13), 3, 5000, scale=1)
    assert scaled.count_coprime >= rep.count_coprime
    parallel = empirical_density(E153, PointQ(5, 13), 3, 5000, workers=2)
    assert parallel.count_coprime == rep.count_coprime


def test_sweep_guards():
    with pytest.raises(ValueError):
        empirical_density(E37, PointQ(0, 0), 2, 100)
    with pytest.raises(ValueError):
        empirical_density(E37, PointQ(1, 1), 2, 2000)
    with pytest.raises(ValueError):
        CurveQ.from_list([0, 0, 0, 0, 0])
    with pytest.raises(ValueError):
        curve_from_spec({"a": [0, 0, 1, -1, 0], "point": [2, 3]})


@pytest.mark.slow
def test_index8_scaled_sweep_to_1e6():
    rep = empirical_density(E153, PointQ(5, 13), 3, 10**6, scale=1, workers=4)
    assert abs(rep.frequency - 77 / 104) <= 0.005
