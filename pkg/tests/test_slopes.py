import numpy as np
import pytest

from conftest import p1, toric
from quantding.bergman import GeodesicGenerator, functional_E, geodesic_potential
from quantding.hermitian import random_hermitian
from quantding.slopes import default_schedule, f_invariant, slope_E, slope_L


def test_default_schedule():
    s = default_schedule(2)
    assert s[0] == 1 and s[-1] == 64 and all(b == 2 * a for a, b in zip(s, s[1:]))


def test_identity_generator():
    M = p1(2)
    gen = GeodesicGenerator(0.6 * np.eye(M.N))
    sL, _ = slope_L(M, gen, [1.0, 2.0])
    sE, _ = slope_E(M, gen, [1.0, 2.0])
    assert abs(sL - 0.6) < 1e-14 and abs(sE - 0.6) < 1e-14


def test_rotation_generator_p1_m1():
    # generator of the rotation: Ding part vanishes
    rep = f_invariant(p1(1), GeodesicGenerator.diagonal([2, 1, 0], integral=True))
    assert abs(rep.ding_numeric) < 1e-4
    assert abs(rep.f_invariant) < 1e-4


def test_report_identities():
    M = p1(2)
    rep = f_invariant(M, GeodesicGenerator(random_hermitian(np.random.default_rng(0), M.N, 1.0)), schedule=[1, 2, 4])
    assert abs(rep.f_invariant - (rep.ding_numeric + rep.chow_numeric)) < 1e-12
    assert abs(rep.f_invariant - (rep.slope_L - rep.trace_term)) < 1e-12
    assert rep.t_schedule == [1.0, 2.0, 4.0]
    assert not rep.reduced
    lines = rep.samples_csv().splitlines()
    assert lines[0] == "t,dL_dt,dE_dt" and len(lines) == 4


def test_samples_monotone_and_sandwich():
    M = p1(2)
    gen = GeodesicGenerator(random_hermitian(np.random.default_rng(1), M.N, 1.0))
    rep = f_invariant(M, gen, schedule=[0.5, 1.0, 1.5, 2.0])
    dL = [s.dL for s in rep.samples]
    dE = [s.dE for s in rep.samples]
    assert np.all(np.diff(dL) >= -1e-8) and np.all(np.diff(dE) >= -1e-8)
    # convexity sandwich of E between sampled derivatives
    E = [functional_E(M, geodesic_potential(M, gen, t)) for t in (1.0, 1.5)]
    q = (E[1] - E[0]) / 0.5
    assert dE[1] - 1e-6 <= q <= dE[2] + 1e-6


def test_two_sided_E():
    M = p1(2)
    gen = GeodesicGenerator.diagonal([1, 0, 0, 0, 0])
    a, _ = slope_E(M, gen)
    b, _ = slope_E(M, gen.negated())
    assert a + b >= -1e-8


def test_degeneration_positive():
    rep = f_invariant(p1(2), GeodesicGenerator.diagonal([1, 0, 0, 0, 0]))
    assert rep.reduced
    assert abs(rep.f_invariant - 0.3) < 1e-6  # slope_L -> 1/2, slope_E -> 1/2
    assert rep.gap < 1e-5


def test_rejects_wrong_size():
    with pytest.raises(ValueError):
        f_invariant(p1(2), GeodesicGenerator(np.eye(3)))


def test_toric_sign_flip():
    T = toric("Bl1P2", 1)
    gen = GeodesicGenerator.diagonal(T.toric.lattice @ np.array([1, 1]))
    plus, minus = f_invariant(T, gen), f_invariant(T, gen.negated())
    assert abs(plus.f_invariant + 4 / 9) < 1e-8
    assert abs(minus.f_invariant - 4 / 9) < 1e-8
