import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import p1, toric
from quantding.bergman import hilb
from quantding.hermitian import random_hermitian
from quantding.model import Potential, build_p1_model, build_toric_model, eval_fs_potential
from quantding.polytope import NAMED_POLYTOPES, PolytopeError, ReflexivePolytope


def test_p1_sizes_and_normalisation():
    assert build_p1_model(1, 4).N == 3
    M = build_p1_model(3, 8)
    assert abs(np.sum(M.weights * M.ref_volume) - 1) < 1e-12
    M = build_p1_model(2, 6)
    assert np.allclose(np.sum(np.abs(M.section_values) ** 2, axis=1), 1, atol=1e-14)


def test_p1_rejects_low_resolution():
    with pytest.raises(ValueError):
        build_p1_model(3, 7)


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_p1_gram_exact(m):
    # Gram integrals of the basis at H_0 are exactly I / N
    M = build_p1_model(m, 2 * m + 2)
    G = (M.section_values.T * (M.weights * M.ref_volume)) @ M.section_values.conj()
    assert np.abs(G - np.eye(M.N) / M.N).max() < 1e-12


def test_fs_potential_oracle_north_pole():
    # m = 1, H = diag(4, 1, 1): log of sum |s_k|^2 / H_kk over sum |s_k|^2
    M = build_p1_model(1, 4)
    H = np.diag([4.0, 1.0, 1.0])
    i = int(np.argmax(M.grid.points[:, 0] - 1e-9 * M.grid.points[:, 1]))
    x, psi = M.grid.points[i]
    z = np.sqrt((1 - x) / (1 + x)) * np.exp(1j * psi)
    s = np.array([1.0, np.sqrt(2) * z, z**2])
    expect = np.log(np.sum(np.abs(s) ** 2 / np.diag(H)) / np.sum(np.abs(s) ** 2))
    assert abs(eval_fs_potential(M, H).values[i] - expect) < 1e-13


@given(seed=st.integers(0, 10**6), a=st.floats(-5, 5))
def test_fs_scaling(seed, a):
    M = p1(2)
    H = np.eye(M.N) + random_hermitian(np.random.default_rng(seed), M.N, 0.5)
    diff = eval_fs_potential(M, np.exp(a) * H).values - eval_fs_potential(M, H).values
    assert np.abs(diff + a / M.m).max() < 1e-12
    assert np.abs(eval_fs_potential(M, np.eye(M.N)).values).max() < 1e-14


@given(seed=st.integers(0, 10**6))
def test_fs_frame_invariance(seed):
    M = p1(2)
    rng = np.random.default_rng(seed)
    H = np.eye(M.N) + random_hermitian(rng, M.N, 0.5)
    Q, _ = np.linalg.qr(rng.normal(size=(M.N, M.N)) + 1j * rng.normal(size=(M.N, M.N)))
    # any frame B with B B^* = H gives the same potential
    B = np.linalg.cholesky(H) @ Q
    w = np.linalg.solve(B, M.section_values.T).T
    alt = np.log(np.sum(np.abs(w) ** 2, axis=1)) / M.m
    assert np.abs(alt - eval_fs_potential(M, H).values).max() < 1e-12


@pytest.mark.parametrize("m", [2, 3])
def test_volume_conservation(m):
    # int omega_phi^n = int omega_0^n for FS potentials
    M = build_p1_model(m, 24)
    rng = np.random.default_rng(m)
    for _ in range(5):
        H = np.eye(M.N) + random_hermitian(rng, M.N, 0.5)
        g = eval_fs_potential(M, H).kahler
        vol = float(np.sum(M.weights * g[:, 0, 0].real * M.std_density))
        assert abs(vol - M.discrete_volume) < 1e-8


def test_toric_sizes():
    assert toric("P2", 1).N == 10
    assert toric("P1xP1", 1).N == 9
    T = toric("P2", 1)
    assert abs(np.sum(T.weights * T.ref_volume) - 1) < 1e-12
    assert T.meta["truncation_error"] < 1e-10
    assert np.allclose(np.sum(np.abs(T.section_values) ** 2, axis=1), 1, atol=1e-13)


def test_toric_rejects():
    with pytest.raises(PolytopeError):
        build_toric_model(((0, 0), (1, 0), (0, 1)), 1)
    with pytest.raises(ValueError):
        build_toric_model(NAMED_POLYTOPES["P2"](), 1, truncation=2.0)


def test_toric_reference_near_balanced():
    # documented accuracy of the full toric grid at default resolution
    T = toric("P1xP1", 1)
    G = hilb(T, Potential.constant(T))
    assert np.allclose(G, G.conj().T)
    assert abs(np.trace(G).real - T.N) < 1e-10
    assert abs(T.discrete_volume - T.volume) / T.volume < 1e-3


def test_summary_json_ready():
    import json

    json.dumps(p1(2).summary())
    json.dumps(toric("P2", 1).summary())
