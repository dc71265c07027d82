from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from order_density.density import (DefectRule, DensityResult, ImageType, TableRule, closed_density,
                                   denominator_audit, limit_audit, scaled_density, series_partials, sum_series)
from order_density.matgroups import generated_subgroup, gl2_full
from order_density.measures import AdmissiblePiece, TailModel, fit_tail, measure_table


@pytest.fixture(scope="module")
def index8_model():
    g = generated_subgroup(3, 1, [[[1, 1], [0, 1]], [[-1, 0], [0, 1]]])
    return fit_tail(measure_table(g, 5))


def brute_series(model, rule, cutoff):
    """Truncated double sum, cell by cell."""
    return sum((model.mu(a, b) * rule.cell_weight(model.ell, a, b)
                for a in range(cutoff) for b in range(cutoff)), Fraction(0))


def test_closed_examples():
    assert closed_density("gl2", 2, 0) == Fraction(11, 21)
    assert closed_density(ImageType.NORM_SPLIT, 5, 1) == Fraction(1081, 1152)
    assert closed_density("normnonsplit", 2, 2) == Fraction(109, 120)


def test_closed_rejects_explicit_and_bad_defect():
    with pytest.raises(ValueError):
        closed_density("explicit", 3, 0)
    with pytest.raises(ValueError):
        closed_density("gl2", 3, -1)
    with pytest.raises(ValueError):
        ImageType.parse("borel")


@pytest.mark.parametrize("d", [0, 1, 2, 3])
def test_series_matches_truncated_sum(index8_model, d):
    exact = sum_series(index8_model, DefectRule(d))
    approx = brute_series(index8_model, DefectRule(d), 40)
    assert 0 <= exact - approx < Fraction(1, 10**15)


def test_index8_partials(index8_model):
    parts = series_partials(index8_model, DefectRule(0))
    assert parts["a0"] == Fraction(5, 24)
    assert parts["b0"] == Fraction(1, 91)
    assert parts["ab"] == Fraction(1, 546)
    assert sum(parts.values()) == Fraction(23, 104)


def test_scaled_density(index8_model):
    assert scaled_density(3, 0, 1, image="gl2") == Fraction(185, 208)
    assert scaled_density(3, 0, 0, image="gl2") == closed_density("gl2", 3, 0)
    values = [scaled_density(3, 0, k, model=index8_model) for k in range(5)]
    assert values[:3] == [Fraction(23, 104), Fraction(77, 104), Fraction(95, 104)]
    assert all(x <= y for x, y in zip(values, values[1:]))


def test_table_rule_with_unit_delta_equals_defect_zero(index8_model):
    cells = {k: Fraction(1) for k in index8_model.grid}
    rule = TableRule(Fraction(1), cells, {"a0": Fraction(1), "b0": Fraction(1), "ab": Fraction(1)})
    assert sum_series(index8_model, rule) == sum_series(index8_model, DefectRule(0))


def test_defect_weight_formula():
    # 1 / #(l^d T) with T = Z/l^a x Z/l^(a+b)
    rule = DefectRule(2)
    assert rule.cell_weight(3, 1, 0) == 1
    assert rule.cell_weight(3, 3, 1) == Fraction(1, 3 ** (1 + 2))
    assert rule.failure(3) == 81


def test_denominator_audit_examples():
    assert denominator_audit(Fraction(23, 104), 3, False)
    assert denominator_audit(Fraction(16801, 18816), 13, True)
    assert denominator_audit(Fraction(1), 7, True)
    assert not denominator_audit(Fraction(1, 11), 3, False)


@pytest.mark.parametrize("image", [m for m in ImageType if m is not ImageType.EXPLICIT])
@pytest.mark.parametrize("ell", [2, 3, 5])
def test_limit_audit(image, ell):
    assert limit_audit(image, ell)


@given(st.sampled_from([2, 3, 5, 7, 11, 13]), st.integers(0, 6),
       st.sampled_from([m for m in ImageType if m is not ImageType.EXPLICIT]))
def test_closed_values_in_range_and_audited(ell, d, image):
    v = closed_density(image, ell, d)
    assert 0 < v < 1
    assert denominator_audit(v, ell, image.is_cm)


def test_result_json():
    out = DensityResult(Fraction(23, 104), "series", 3, defect=0).to_json()
    assert out["value"] == "23/104" and out["decimal"] == "0.22115" and out["method"] == "series"


def test_gl2_series_matches_closed_with_defect_rule():
    model = fit_tail(measure_table(gl2_full(2, 1), 6))
    for d in range(5):
        assert sum_series(model, DefectRule(d)) == closed_density("gl2", 2, d)


def test_finite_piece_sum():
    # a single finite piece checks the split of DefectRule at a < d and a + b < d
    piece = AdmissiblePiece("ab", a_set=frozenset({1, 2}), b_set=frozenset({1, 2, 3}), c=Fraction(1), alpha=1, beta=1)
    model = TailModel(2, {}, [piece], 4)
    for d in range(6):
        rule = DefectRule(d)
        direct = sum(piece.value(2, a, b) * rule.cell_weight(2, a, b) for a in (1, 2) for b in (1, 2, 3))
        assert sum_series(model, rule) == direct
