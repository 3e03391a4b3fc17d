from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from quantding.delta import (
    BOUND_LABEL,
    LatticePolygon,
    candidate_valuations,
    coupled_ratio,
    delta_m_toric,
    filtration_dims,
    log_discrepancy,
    orders,
    s_m,
    s_m_coupled,
    s_m_weighted,
    weight_multiplicities,
)
from quantding.polytope import NAMED_POLYTOPES, PolytopeError

P1 = NAMED_POLYTOPES["P1"]()
P2 = NAMED_POLYTOPES["P2"]()
BL = NAMED_POLYTOPES["Bl1P2"]()


def test_lattice_point_counts():
    assert len(P2.lattice_points(1)) == 10
    assert len(P1.lattice_points(2)) == 5
    assert P2.lattice_points(0) == [(0, 0)]


@pytest.mark.parametrize("m", [1, 2, 7, 20])
def test_s_m_p1(m):
    assert s_m(P1, m, (1,)) == 1
    assert s_m(P1, m, (-1,)) == 1


def test_s_m_p2_and_rejections():
    assert s_m(P2, 1, (1, 0)) == 1
    with pytest.raises(PolytopeError):
        s_m(P2, 1, (2, 0))
    with pytest.raises(PolytopeError):
        s_m(P2, 1, (1, 0, 0))
    with pytest.raises(PolytopeError):
        log_discrepancy(P2, (0, 0))


def test_log_discrepancy():
    for r in P2.normals:
        assert log_discrepancy(P2, r)[0] == 1
    A, cone = log_discrepancy(P2, (1, 1))
    assert A == 2 and len(cone) == 2
    assert log_discrepancy(BL, (1, 1))[0] == 1  # a ray of the blow-up fan


def test_delta_values():
    for m in range(1, 21):
        res = delta_m_toric(P1, m, candidates=P1.normals)
        assert res.ratio == 1
    assert delta_m_toric(P2, 1, candidates=P2.normals).ratio == 1
    res = delta_m_toric(BL, 1)
    assert res.ratio == Fraction(9, 11) and res.argmin == (1, 1)
    assert res.label == BOUND_LABEL
    d = res.to_dict()
    assert d["ratio"] == "9/11" and d["candidates"] == len(candidate_valuations(BL))


def test_candidates():
    c = candidate_valuations(P2, 1)
    assert c[:3] == [tuple(r) for r in P2.normals]
    assert len(c) == len(set(c)) == 8


def _direct_dims(P, m, v):
    # per-j counting straight from the inequality <u, v> >= j + m min_P <., v>
    lo = min(sum(a * b for a, b in zip(w, v)) for w in P.vertices)
    pts = P.lattice_points(m)
    out, j = [], 1
    while True:
        c = sum(1 for u in pts if sum(a * b for a, b in zip(u, v)) >= j + m * lo)
        if not c:
            return out
        out.append(c)
        j += 1


@given(m=st.integers(1, 6), v=st.sampled_from(candidate_valuations(P2, 3)))
def test_filtration_identity(m, v):
    dims = filtration_dims(P2, m, v)
    assert dims == _direct_dims(P2, m, v)
    assert sum(orders(P2, m, v)) == sum(dims)
    assert s_m(P2, m, v) == Fraction(sum(dims), m * len(P2.lattice_points(m)))


@given(m=st.integers(1, 4), v=st.sampled_from(candidate_valuations(BL, 2)))
def test_weighted_reduces(m, v):
    assert s_m_weighted(BL, m, v, lambda x: 1) == s_m(BL, m, v)


def test_weighted_p1_affine():
    g = lambda x: 1 + Fraction(x) / 4
    # weights -1, 0, 1 with orders 0, 1, 2: (1 * 1 + 5/4 * 2) / (3/4 + 1 + 5/4)
    assert s_m_weighted(P1, 1, (1,), g) == Fraction(7, 6)
    with pytest.raises(ValueError):
        s_m_weighted(P1, 1, (1,), lambda x: x)


def test_weight_multiplicities():
    mult = weight_multiplicities(P2, 3)
    assert sum(mult.values()) == len(P2.lattice_points(3))
    sub = weight_multiplicities(P2, 2, torus=[[1, 1]])
    assert sum(sub.values()) == len(P2.lattice_points(2))
    # a one-dimensional subtorus gives a coarser weight grading
    assert len(sub) < len(weight_multiplicities(P2, 2))


def test_coupled():
    for m in (1, 3, 8):
        assert s_m_coupled([P1], m, (1,)) == [s_m(P1, m, (1,))]
        S = s_m_coupled([[(0,), (1,)], [(0,), (1,)]], m, (1,))
        assert S == [Fraction(1, 2), Fraction(1, 2)]
        assert coupled_ratio(P1, [[(0,), (1,)], [(-1,), (0,)]], m, (1,)) == 1
    with pytest.raises(PolytopeError):
        s_m_coupled([[(0,), (1,)], [(0, 0), (1, 0), (0, 1)]], 1, (1,))


def test_lattice_polygon():
    T = LatticePolygon(((0, 0), (1, 0), (0, 1)))
    assert len(T.lattice_points(2)) == 6
    with pytest.raises(PolytopeError):
        LatticePolygon(((0, 0), (1, 1), (2, 2)))
