import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import p1, toric
from quantding.bergman import GeodesicGenerator, bergman_geodesic, fs_data, moment_residual
from quantding.slopes import f_invariant
from quantding.soliton import (
    GFunction,
    dgna_slope,
    functional_Egm,
    g_moment_residual,
    g_targets,
    gbar,
    quantised_ding_g,
    solve_g_balanced,
    weight_decomposition,
)
from quantding.solver import CONVERGED, SolverConfig, solve_balanced

G_AFFINE = GFunction.make("affine", a=1.0, b=0.25)
G_QUAD = GFunction.make("quadratic", a=1.0, c=0.5, center=1.0)
G_EXP = GFunction.make("exponential", b=1.0, shift=1.0)


def test_weight_decompositions():
    dec = weight_decomposition(p1(1))
    assert dec.multiplicities == {(0,): 1, (1,): 1, (2,): 1}
    dec = weight_decomposition(toric("P1xP1", 1))
    assert sorted(dec.multiplicities) == [(i, j) for i in range(3) for j in range(3)]
    assert set(dec.multiplicities.values()) == {1}
    triv = weight_decomposition(p1(2), rank=0)
    assert len(triv.blocks) == 1 and triv.N == 5


def test_gbar():
    dec = weight_decomposition(p1(1))
    assert gbar(GFunction(), dec) == 1.0
    assert abs(gbar(G_AFFINE, dec) - 1.25) < 1e-15
    assert abs(gbar(G_AFFINE.scaled(3.0), dec) - 3.75) < 1e-15


@given(c=st.floats(-3, 3))
def test_Egm_scaling(c):
    M = p1(2)
    dec = weight_decomposition(M)
    assert abs(functional_Egm(np.exp(c) * np.eye(M.N), G_EXP, dec) + c / M.m) < 1e-12


def test_targets_sum_to_one_and_positive_g():
    dec = weight_decomposition(p1(3))
    assert abs(g_targets(G_QUAD, dec).sum() - 1) < 1e-15
    with pytest.raises(ValueError):
        g_targets(GFunction.make("affine", a=-1.0, b=0.1), dec)


def test_off_block_rejected():
    M = p1(2)
    dec = weight_decomposition(M)
    H = np.eye(M.N, dtype=complex)
    H[0, 1] = H[1, 0] = 0.1
    with pytest.raises(ValueError):
        functional_Egm(H, G_EXP, dec)
    with pytest.raises(ValueError):
        solve_g_balanced(M, G_EXP, dec, H)


def test_Egm_derivative_along_block_geodesic():
    M = p1(2)
    dec = weight_decomposition(M)
    A = np.diag([0.3, -1.0, 0.2, 0.7, 0.1])
    gen = GeodesicGenerator(A)
    h, t = 1e-5, 0.4
    fd = (functional_Egm(bergman_geodesic(gen, t + h), G_QUAD, dec) - functional_Egm(bergman_geodesic(gen, t - h), G_QUAD, dec)) / (2 * h)
    T = g_targets(G_QUAD, dec)
    assert abs(fd - 2.0 / M.m * np.sum(T * np.diag(A))) < 1e-8


def test_symmetric_g_diagonal_residual():
    M = p1(2)
    dec = weight_decomposition(M)
    R, _ = g_moment_residual(M, np.diag([1.0, 2.0, 0.5, 2.0, 1.0]), G_QUAD, dec)
    assert np.abs(R - np.diag(np.diag(R))).max() < 1e-12


@pytest.mark.parametrize("g", [G_QUAD, G_EXP], ids=["quadratic", "exponential"])
@pytest.mark.parametrize("method", ["fixed-point", "gradient"])
def test_g_balanced_converges(g, method):
    M = p1(3)
    dec = weight_decomposition(M)
    H, trace, status = solve_g_balanced(M, g, dec, np.eye(M.N), SolverConfig(method=method))
    assert status == CONVERGED
    assert g_moment_residual(M, H, g, dec)[1] < 1e-8
    d = np.sqrt(np.diag(H).real)
    C = H / np.outer(d, d)  # diagonal spans many orders of magnitude
    assert np.abs(C - np.eye(M.N)).max() < 1e-10  # stays block diagonal


def test_g_convexity():
    M = p1(2)
    dec = weight_decomposition(M)
    gen = GeodesicGenerator(np.diag([0.5, -0.3, 0.9, 0.0, -1.0]))
    ts = np.linspace(0, 3, 13)
    D = np.array([quantised_ding_g(M, bergman_geodesic(gen, t), G_EXP, dec) for t in ts])
    assert (D[2:] - 2 * D[1:-1] + D[:-2]).min() >= -1e-6


def test_g_one_reduces():
    M = p1(2)
    dec = weight_decomposition(M)
    one = GFunction.make("constant", c=1.0)
    H = np.diag([1.0, 0.7, 1.3, 2.0, 0.4]).astype(complex)
    assert abs(quantised_ding_g(M, H, one, dec) - (fs_data(M, H).L + np.log(np.linalg.det(H).real) / (M.m * M.N))) < 1e-12
    assert np.abs(g_moment_residual(M, H, one, dec)[0] - moment_residual(M, H)[0]).max() < 1e-12
    a = solve_g_balanced(M, one, dec, H).H
    b = solve_balanced(M, H).H
    assert np.abs(a - b).max() < 1e-12


def test_dgna_slope():
    M = p1(2)
    dec = weight_decomposition(M)
    one = GFunction.make("constant", c=1.0)
    gen = GeodesicGenerator.diagonal([1, 0, 0, 0, 0])
    val, gap = dgna_slope(M, gen, one, dec)
    assert abs(val - f_invariant(M, gen).f_invariant) < 1e-12
    c, _ = dgna_slope(M, GeodesicGenerator(0.8 * np.eye(M.N)), G_EXP, dec, [1.0, 2.0])
    assert abs(c) < 1e-12
    # the trace term flips sign with A
    T = g_targets(G_EXP, dec)
    plus, _ = dgna_slope(M, gen, G_EXP, dec)
    minus, _ = dgna_slope(M, gen.negated(), G_EXP, dec)
    sp, _ = f_invariant(M, gen).slope_L, None
    sm = f_invariant(M, gen.negated()).slope_L
    assert abs((sp - plus) + (sm - minus)) < 1e-12
    assert abs((sp - plus) - 2.0 / M.m * T[0]) < 1e-12


def test_tabulated_g():
    g = GFunction.make("tabulated", x=[0.0, 2.0], y=[1.0, 3.0])
    assert np.allclose(g([[0.0], [1.0], [2.0]]), [1.0, 2.0, 3.0])
