import itertools

import numpy as np
import pytest

from order_density.matgroups import (GL2, Ambient, ClosureError, MatrixGroupLevel, SizeGuardError, cartan,
                                     cartan_type, closure_audit, conjugate_group, generated_subgroup, gl2_full,
                                     gl2_order, gl_b, group_from_spec, lift_elements, normalizer_cartan,
                                     preimage_group, reduction_kernel_size, standard_cartan_params)
from order_density.modmatrix import batch_det


def brute_invertible(ell, n):
    q = ell**n
    rows = np.array(list(itertools.product(range(q), repeat=4)))
    return int((batch_det(rows, q) % ell != 0).sum())


@pytest.mark.parametrize("ell,n", [(2, 1), (2, 2), (3, 1), (2, 3), (5, 1)])
def test_gl2_order_matches_enumeration(ell, n):
    assert gl2_full(ell, n).order == gl2_order(ell, n) == brute_invertible(ell, n)


def test_gl_b_polynomial():
    assert gl_b(2) == 6 and gl_b(3) == 48 and gl_b(2, 3) == 168


@pytest.mark.parametrize("ell", [2, 3, 5, 7])
@pytest.mark.parametrize("split", [True, False])
def test_cartan_orders(ell, split):
    d, r = standard_cartan_params(ell, split)
    assert cartan_type(ell, d, r) == ("split" if split else "nonsplit")
    for n in (1, 2):
        c = cartan(ell, n, d, r)
        unit = (ell - 1) ** 2 if split else ell**2 - 1
        assert c.order == unit * ell ** (2 * (n - 1))
        nc = normalizer_cartan(c)
        assert nc.order == 2 * c.order
        closure_audit(nc)
        labels = nc.coset_labels()
        assert int((labels == 0).sum()) == c.order


def test_index8_image_and_preimages():
    g = generated_subgroup(3, 1, [[[1, 1], [0, 1]], [[-1, 0], [0, 1]]])
    assert g.order == 6
    for n, order in ((2, 486), (3, 39366), (4, 3188646)):
        p = preimage_group(g, n)
        assert p.order == order == 6 * 3 ** (4 * (n - 1))
        assert reduction_kernel_size(p) == 3**4
    closure_audit(preimage_group(g, 2))


def test_preimage_is_exact_inverse_image():
    g = generated_subgroup(3, 1, [[[1, 1], [0, 1]], [[-1, 0], [0, 1]]])
    p = preimage_group(g, 2)
    full = gl2_full(3, 2)
    mask = g.contains(full.elements % 3)
    assert mask.sum() == p.order
    assert p.contains(full.elements[mask]).all()


def test_normalizer13_group():
    spec = {"ell": 13, "level": 1, "mode": "generated",
            "generators": [[[2, 0], [0, 2]], [[5, 0], [0, 1]], [[0, 1], [-1, 0]]],
            "conjugate_by": [[1, 1], [1, -1]], "ambient": {"kind": "normalizer", "d": 1, "r": 0}}
    g = group_from_spec(spec)
    assert g.order == 96
    full = normalizer_cartan(cartan(13, 1, 1, 0))
    assert full.order == 288 and full.contains(g.elements).all()
    lifted = preimage_group(g, 2)
    assert lifted.order == 96 * 13**2
    assert g.contains(lifted.elements % 13).all()


def test_lifted_elements_reduce_to_parents():
    for amb, ell in ((GL2, 2), (Ambient("cartan", 1, 0), 3), (Ambient("normalizer", 2, 0), 5)):
        if amb.kind == "gl2":
            base = gl2_full(ell, 1)
        else:
            base = cartan(ell, 1, amb.d, amb.r)
            if amb.kind == "normalizer":
                base = normalizer_cartan(base)
        kids = lift_elements(base.elements, ell, 1, amb)
        assert len(kids) == base.order * ell**amb.rank
        assert (kids.reshape(base.order, -1, 4) % ell == base.elements[:, None, :]).all()
        assert amb.contains(kids, ell, 2).all()
        assert len(np.unique(kids, axis=0)) == len(kids)


def test_conjugation_preserves_order():
    g = generated_subgroup(5, 1, [[[2, 0], [0, 1]], [[0, 1], [1, 0]]])
    h = conjugate_group(g, [[1, 2], [0, 1]])
    assert h.order == g.order
    with pytest.raises(ValueError):
        conjugate_group(g, [[5, 0], [0, 1]])


def test_closure_audit_detects_non_group():
    bad = MatrixGroupLevel(3, 1, np.array([[1, 0, 0, 1], [2, 0, 0, 1], [1, 1, 0, 1]]), [], "bad")
    with pytest.raises(ClosureError):
        closure_audit(bad)


def test_size_guard(monkeypatch):
    monkeypatch.setenv("ORDER_DENSITY_SIZE_GUARD", "1000")
    with pytest.raises(SizeGuardError):
        gl2_full(3, 2)


def test_empty_generators_give_trivial_group():
    assert generated_subgroup(3, 2, []).order == 1


def test_bad_spec_mode():
    with pytest.raises(ValueError):
        group_from_spec({"ell": 3, "level": 1, "mode": "nope"})
