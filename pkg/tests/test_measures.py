from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from order_density.matgroups import (cartan, generated_subgroup, gl2_full, group_from_spec, normalizer_cartan,
                                     preimage_group, standard_cartan_params)
from order_density.measures import (FitRejected, MeasureTable, check_level_stability, fit_tail, measure_table,
                                    merge_tables, reduction_class_table, singular_mass, split_coset_tables)
from order_density.modmatrix import batch_elementary_valuations, batch_minus_identity

INDEX8 = [[[1, 1], [0, 1]], [[-1, 0], [0, 1]]]


def brute_table(group):
    """Class distribution of a materialized group, counted directly."""
    q = group.modulus
    e1, e2 = batch_elementary_valuations(batch_minus_identity(group.elements, q), group.ell, group.level)
    out = {}
    for x, y in zip(e1.tolist(), e2.tolist()):
        if y < group.level:
            out[(x, y - x)] = out.get((x, y - x), 0) + 1
    return {k: Fraction(v, group.order) for k, v in out.items()}


def test_gl2_mod2_fixed_point_free():
    t = measure_table(gl2_full(2, 1))
    assert t.mu(0, 0) == Fraction(1, 3)
    assert t.undetermined == Fraction(2, 3)


def test_index8_level3_values():
    t = measure_table(generated_subgroup(3, 1, INDEX8), 3)
    assert t.mu(0, 0) == 0
    assert t.mu(0, 1) == Fraction(5, 9)
    assert t.mu(1, 0) == Fraction(8, 81)
    assert t.total() == 1


@pytest.mark.parametrize("level", [2, 3, 4])
def test_lifted_table_equals_materialized(level):
    g = generated_subgroup(3, 1, INDEX8)
    lifted = measure_table(g, level)
    assert lifted.entries == {k: v for k, v in brute_table(preimage_group(g, level)).items()}


def test_lifted_normalizer_table_equals_materialized():
    spec = {"ell": 5, "level": 1, "mode": "normalizer", "d": 2}
    base = group_from_spec(spec)
    c_lift, n_lift = split_coset_tables(base, 3)
    full = preimage_group(base, 3)
    c_full, n_full = split_coset_tables(full)
    assert c_lift.entries == c_full.entries and n_lift.entries == n_full.entries
    assert c_lift.undetermined == c_full.undetermined


@pytest.mark.parametrize("ell", [2, 3])
def test_gl2_level_stability_exhaustive(ell):
    tables = [measure_table(gl2_full(ell, n)) for n in range(1, 5 if ell == 2 else 4)]
    check_level_stability(tables)
    for t in tables:
        assert t.total() == 1


def test_singular_mass():
    g = gl2_full(2, 3)
    assert singular_mass(g, 0) == 1
    assert singular_mass(gl2_full(2, 1), 1) == Fraction(2, 3)
    values = [singular_mass(g, k) for k in range(4)]
    assert all(x >= y for x, y in zip(values, values[1:]))
    t = measure_table(g)
    for k in range(1, 4):
        tail = sum((v for (a, b), v in t.entries.items() if a + b >= k), Fraction(0)) + t.undetermined
        assert singular_mass(g, k) >= tail


def test_fit_rejects_low_level():
    g = generated_subgroup(3, 1, INDEX8)
    with pytest.raises(FitRejected):
        fit_tail([measure_table(g, 3), measure_table(g, 4)])


def test_fit_rejects_inconsistent_levels():
    a = measure_table(generated_subgroup(3, 1, INDEX8), 5)
    b = measure_table(gl2_full(3, 1), 4)
    with pytest.raises(FitRejected):
        fit_tail([a, b])


@pytest.mark.parametrize("ell,fit_level,deep_level", [(2, 6, 8), (3, 5, 5)])
def test_gl2_tail_model_total(ell, fit_level, deep_level):
    table = measure_table(gl2_full(ell, 1), fit_level)
    model = fit_tail(table)
    assert model.total() == 1
    deep = table if deep_level == fit_level else measure_table(gl2_full(ell, 1), deep_level)
    for a, b in deep.cells():
        assert model.mu(a, b) == deep.mu(a, b)


@pytest.mark.parametrize("ell", [3, 5])
def test_nonsplit_normalizer_coset_has_no_a_positive(ell):
    d, r = standard_cartan_params(ell, split=False)
    _, star = split_coset_tables(normalizer_cartan(cartan(ell, 1, d, r)), 5)
    assert all(v == 0 for (a, b), v in star.entries.items() if a >= 1)
    model = fit_tail(star)
    assert model.mu(3, 4) == 0 and model.total() == 1


def test_split_coset_needs_normalizer():
    with pytest.raises(ValueError):
        split_coset_tables(gl2_full(3, 1))


def test_merge_recovers_whole_table():
    g = normalizer_cartan(cartan(3, 1, 1, 0))
    c, n = split_coset_tables(g, 4)
    merged = merge_tables([c, n], [Fraction(1, 2), Fraction(1, 2)])
    whole = measure_table(g, 4)
    assert merged.entries == whole.entries and merged.undetermined == whole.undetermined


def test_reduction_class_table_mod2():
    dist = reduction_class_table(gl2_full(2, 1))
    assert dist == {(0, 0): Fraction(1, 3), (0, 1): Fraction(1, 2), (1, 0): Fraction(1, 6)}


def test_json_round_trip():
    t = measure_table(generated_subgroup(3, 1, INDEX8), 4)
    back = MeasureTable.from_json(t.to_json())
    assert back.entries == t.entries and back.undetermined == t.undetermined


def test_mu_outside_grid():
    t = measure_table(gl2_full(2, 1), 2)
    with pytest.raises(KeyError):
        t.mu(1, 1)


gens_mod3 = st.lists(st.tuples(*[st.integers(0, 2)] * 4).filter(lambda m: (m[0] * m[3] - m[1] * m[2]) % 3),
                     min_size=1, max_size=2)


@settings(max_examples=15, deadline=None)
@given(gens_mod3)
def test_random_subgroups_normalized_and_lift_exact(gens):
    g = generated_subgroup(3, 1, [np.array(m).reshape(2, 2) for m in gens])
    t = measure_table(g, 3)
    assert t.total() == 1
    assert all(v >= 0 for v in t.entries.values())
    assert measure_table(g, 2).entries == brute_table(preimage_group(g, 2))
