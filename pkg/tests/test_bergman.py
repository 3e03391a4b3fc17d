import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import p1
from quantding.bergman import (
    E_derivative,
    GeodesicGenerator,
    L_derivative,
    bergman_function,
    bergman_geodesic,
    ding_derivative,
    eval_fs_potential,
    fs_data,
    functional_E,
    functional_Em,
    functional_L,
    geodesic_potential,
    hilb,
    moment_residual,
    quantised_ding,
    volume_form,
)
from quantding.hermitian import cholesky, random_hermitian
from quantding.model import Potential, build_p1_model
from quantding.solver import SolverConfig, solve_balanced

seeds = st.integers(0, 10**6)


def _random_form(seed, N, norm=0.5):
    return np.eye(N) + random_hermitian(np.random.default_rng(seed), N, norm)


def test_reference_values():
    M = p1(2)
    zero = Potential.constant(M)
    assert functional_L(M, zero) == 0.0
    assert abs(functional_E(M, zero)) < 1e-15
    assert abs(quantised_ding(M, np.eye(M.N))) < 1e-15
    assert abs(np.sum(volume_form(M, zero) * M.weights) - 1) < 1e-12
    assert np.abs(hilb(M, zero) - np.eye(M.N)).max() < 1e-10
    assert moment_residual(M, np.eye(M.N))[1] < 1e-10


@given(c=st.floats(-4, 4))
def test_constant_shifts(c):
    M = p1(2)
    phi = Potential.constant(M, c)
    assert abs(np.sum(volume_form(M, phi) * M.weights) - np.exp(-c)) < 1e-12 * max(1, np.exp(-c))
    assert abs(functional_L(M, phi) - c) < 1e-12
    assert abs(functional_E(M, phi) - c) < 1e-12


@given(seed=seeds, c=st.floats(-3, 3))
def test_hilb_scaling_and_trace(seed, c):
    M = p1(2)
    phi = eval_fs_potential(M, _random_form(seed, M.N))
    G = hilb(M, phi)
    assert np.abs(hilb(M, phi.shift(c)) - np.exp(-M.m * c) * G).max() < 1e-11 * np.abs(G).max() * np.exp(-M.m * c)
    assert abs(np.trace(np.linalg.solve(np.eye(M.N), hilb(M, Potential.constant(M)))).real - M.N) < 1e-10


@given(seed=seeds, c=st.floats(-3, 3))
def test_functional_Em(seed, c):
    H = _random_form(seed, 5)
    assert abs(functional_Em(np.eye(5), 2)) < 1e-15
    assert abs(functional_Em(np.exp(c) * H, 2) - (functional_Em(H, 2) - c / 2)) < 1e-12


@given(seed=seeds, c=st.floats(-3, 3))
def test_ding_translation(seed, c):
    M = p1(3)
    H = _random_form(seed, M.N)
    assert abs(quantised_ding(M, np.exp(c) * H) - quantised_ding(M, H)) < 1e-10


@given(seed=seeds)
def test_moment_residual_is_whitened_hilb_gap(seed):
    M = p1(2)
    H = _random_form(seed, M.N)
    R, norm = moment_residual(M, H)
    C = cholesky(H)
    Ci = np.linalg.inv(C)
    G = hilb(M, eval_fs_potential(M, H))
    assert np.abs(Ci @ G @ Ci.conj().T - np.eye(M.N) - R).max() < 1e-10
    R2, norm2 = moment_residual(M, np.exp(1.7) * H)
    assert abs(norm - norm2) < 1e-12


def test_residual_linear_in_perturbation():
    M = p1(2)
    P = random_hermitian(np.random.default_rng(0), M.N, 1.0)
    r = [moment_residual(M, np.eye(M.N) + e * P)[1] for e in (1e-4, 2e-4, 4e-4)]
    assert abs(r[1] / r[0] - 2) < 1e-3 and abs(r[2] / r[1] - 2) < 1e-3


def test_hilb_refinement():
    # dmu_FS(H) mass agrees with a coarser grid
    H = _random_form(5, 7)
    fine, coarse = build_p1_model(3, 40), build_p1_model(3, 20)
    a = np.sum(volume_form(fine, eval_fs_potential(fine, H)) * fine.weights)
    b = np.sum(volume_form(coarse, eval_fs_potential(coarse, H)) * coarse.weights)
    assert abs(a - b) < 1e-9


def test_geodesic_basics():
    rng = np.random.default_rng(1)
    gen = GeodesicGenerator(random_hermitian(rng, 5, 1.0))
    assert np.allclose(bergman_geodesic(gen, 0.0), np.eye(5))
    c = GeodesicGenerator(0.3 * np.eye(5))
    assert np.allclose(bergman_geodesic(c, 2.0), np.exp(-1.2) * np.eye(5))
    t = 0.7
    assert abs(np.linalg.slogdet(bergman_geodesic(gen, t))[1] + 2 * t * gen.trace) < 1e-10
    with pytest.raises(ValueError):
        GeodesicGenerator(np.array([[0, 1], [0, 0]]))
    with pytest.raises(ValueError):
        GeodesicGenerator.diagonal([0.5, 1], integral=True)


def test_trivial_generator_derivatives():
    M = p1(2)
    gen = GeodesicGenerator(0.4 * np.eye(M.N))
    for t in (0.0, 1.0, 3.0):
        assert abs(ding_derivative(M, gen, t)) < 1e-14
        assert abs(L_derivative(M, gen, t) - 0.4) < 1e-14
        assert abs(E_derivative(M, gen, t) - 0.4) < 1e-14


def test_E_derivative_finite_difference():
    M = build_p1_model(2, 30)
    gen = GeodesicGenerator(random_hermitian(np.random.default_rng(2), M.N, 0.8))
    h, t = 1e-4, 0.6
    fd = (functional_E(M, geodesic_potential(M, gen, t + h)) - functional_E(M, geodesic_potential(M, gen, t - h))) / (2 * h)
    assert abs(fd - E_derivative(M, gen, t)) < 1e-7


def test_ding_derivative_vanishes_at_balanced():
    M = p1(3)
    H0 = _random_form(3, M.N)
    H, _, _ = solve_balanced(M, H0, SolverConfig(residual_tol=1e-11, max_iters=400))
    C = cholesky(H)
    rng = np.random.default_rng(4)
    for _ in range(5):
        B = random_hermitian(rng, M.N, 1.0)
        # geodesic through H: C e^{-2tB} C^*; derivative at 0 is -(2/(mN)) tr(B R)
        R, _ = moment_residual(M, H)
        assert abs(2.0 / (M.m * M.N) * np.trace(B @ R).real) < 1e-10
        # H_0 is balanced on P^1, so every geodesic from it is critical at t = 0
        assert abs(ding_derivative(M, GeodesicGenerator(B), 0.0)) < 1e-10


def test_bergman_function():
    M = p1(3)
    rho = bergman_function(M, np.eye(M.N)).values
    assert np.ptp(rho) < 1e-10
    H = _random_form(8, M.N)
    d = fs_data(M, H)
    rho = bergman_function(M, H).values
    assert abs(np.dot(d.mu, rho) - M.N / M.volume) < 1e-12
    assert np.ptp(rho) > 1e-3
