from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from quantding.polytope import NAMED_POLYTOPES, PolytopeError, ReflexivePolytope, is_primitive, lattice_points


def test_lattice_counts():
    assert len(lattice_points(NAMED_POLYTOPES["P2"](), 1)) == 10
    assert len(lattice_points(NAMED_POLYTOPES["P1xP1"](), 1)) == 9
    assert len(lattice_points(NAMED_POLYTOPES["P1"](), 2)) == 5
    assert lattice_points(NAMED_POLYTOPES["P2"](), 0) == [(0, 0)]


def test_rejects_non_reflexive():
    with pytest.raises(PolytopeError):
        ReflexivePolytope(((0, 0), (1, 0), (0, 1)))  # origin on the boundary
    with pytest.raises(PolytopeError):
        ReflexivePolytope(((-2, -2), (2, -2), (0, 2)))  # facet constants not -1


def test_from_text_roundtrip():
    P = NAMED_POLYTOPES["Bl1P2"]()
    Q = ReflexivePolytope.from_text("# blow-up\n" + P.to_text())
    assert Q.vertices == P.vertices and Q.normals == P.normals


def test_cone_coefficients():
    P = NAMED_POLYTOPES["P2"]()
    cone, coeffs = P.cone_containing((1, 1))
    assert set(cone) == {(1, 0), (0, 1)}
    assert sum(coeffs) == 2


@pytest.mark.parametrize("name", sorted(NAMED_POLYTOPES))
@given(m=st.integers(1, 7))
def test_ehrhart_count(name, m):
    # reflexive: N_m = vol m^n + (boundary / 2) m^(n-1) + ... ; in rank 2 via Pick
    P = NAMED_POLYTOPES[name]()
    pts = lattice_points(P, m)
    if P.rank == 1:
        assert len(pts) == 2 * m + 1
    else:
        area = P.volume()
        boundary = sum(1 for u in lattice_points(P, 1) if any(sum(a * b for a, b in zip(u, v)) == -1 for v in P.normals))
        assert len(pts) == area * m * m + Fraction(boundary, 2) * m + 1


@given(st.integers(-30, 30), st.integers(-30, 30))
def test_primitive(a, b):
    from math import gcd

    assert is_primitive((a, b)) == (gcd(a, b) == 1)
