import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from quantding.hermitian import (
    NotPositiveDefinite,
    as_hermitian,
    cholesky,
    expm_hermitian,
    gauge_normalize,
    logdet,
    random_hermitian,
    whiten,
)


def test_rejects_non_hermitian():
    with pytest.raises(ValueError):
        as_hermitian(np.array([[1, 2], [0, 1]]))


def test_cholesky_floor():
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.diag([1.0, 1e-16]))
    with pytest.raises(NotPositiveDefinite):
        cholesky(np.diag([1.0, -1.0]))


@given(seed=st.integers(0, 10**6), n=st.integers(1, 7))
def test_whiten_and_logdet(seed, n):
    rng = np.random.default_rng(seed)
    H = expm_hermitian(random_hermitian(rng, n, 1.0))
    C = cholesky(H)
    v = rng.normal(size=(4, n)) + 1j * rng.normal(size=(4, n))
    w = whiten(C, v)
    q = np.einsum("pi,ij,pj->p", v.conj(), np.linalg.inv(H), v).real
    assert np.allclose(np.sum(np.abs(w) ** 2, axis=1), q, rtol=1e-10)
    assert abs(logdet(H) - np.linalg.slogdet(H)[1]) < 1e-10
    assert abs(logdet(gauge_normalize(H))) < 1e-10


@given(seed=st.integers(0, 10**6), norm=st.floats(0.01, 3.0))
def test_random_hermitian_norm(seed, norm):
    A = random_hermitian(np.random.default_rng(seed), 5, norm)
    assert np.allclose(A, A.conj().T)
    assert abs(np.linalg.norm(A) - norm) < 1e-12
