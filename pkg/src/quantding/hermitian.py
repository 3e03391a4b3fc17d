"""Positive-definite hermitian forms on the section space.

Forms are plain complex ``numpy`` arrays, written in the reference basis (so
the reference form ``H_0`` is the identity). This module holds the validation
and factorisation helpers shared by every other module.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg as sla

HERMITIAN_TOL = 1e-14
PIVOT_FLOOR = 1e-13


class NotPositiveDefinite(np.linalg.LinAlgError):
    """Raised when a Cholesky pivot falls below the relative floor."""


def as_hermitian(H, tol: float = HERMITIAN_TOL) -> np.ndarray:
    """Validate ``H`` as a square hermitian matrix and return its symmetrised copy.

    The relative asymmetry ``|H - H^*| / |H|`` must be below ``tol``.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {H.shape}")
    scale = max(np.abs(H).max(), 1.0)
    if np.abs(H - H.conj().T).max() > tol * scale * 10:
        raise ValueError("matrix is not hermitian")
    return 0.5 * (H + H.conj().T)


def cholesky(H) -> np.ndarray:
    """Lower Cholesky factor ``C`` with ``H = C C^*``.

    Raises :class:`NotPositiveDefinite` when any pivot ``C_ii^2`` is below
    ``PIVOT_FLOOR * |H|_2``.
    """
    H = np.asarray(H, dtype=complex)
    try:
        C = np.linalg.cholesky(H)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite(str(exc)) from None
    norm = np.linalg.norm(H, 2)
    if np.min(np.abs(np.diag(C)) ** 2) < PIVOT_FLOOR * norm:
        raise NotPositiveDefinite("Cholesky pivot below floor")
    return C


def whiten(C: np.ndarray, vectors: np.ndarray) -> np.ndarray:
    """Apply ``C^{-1}`` to the last axis of ``vectors`` (rows are vectors)."""
    flat = vectors.reshape(-1, vectors.shape[-1])
    out = sla.solve_triangular(C, flat.T, lower=True, check_finite=False).T
    return out.reshape(vectors.shape)


def logdet(H) -> float:
    C = cholesky(H)
    return float(2.0 * np.sum(np.log(np.real(np.diag(C)))))


def gauge_normalize(H, H0=None) -> np.ndarray:
    """Rescale ``H`` by a positive constant so that ``det H = det H0``."""
    H = np.asarray(H, dtype=complex)
    N = H.shape[0]
    target = 0.0 if H0 is None else logdet(H0)
    return H * np.exp((target - logdet(H)) / N)


def random_hermitian(rng: np.random.Generator, N: int, norm: float = 1.0) -> np.ndarray:
    """Hermitian matrix with Frobenius norm ``norm`` (complex Gaussian entries)."""
    X = rng.standard_normal((N, N)) + 1j * rng.standard_normal((N, N))
    A = 0.5 * (X + X.conj().T)
    return A * (norm / np.linalg.norm(A))


def hermitian_power(H, t: float) -> np.ndarray:
    w, U = np.linalg.eigh(H)
    return (U * w**t) @ U.conj().T


def expm_hermitian(B, s: float = 1.0) -> np.ndarray:
    """``exp(s B)`` for hermitian ``B`` via the eigendecomposition."""
    w, U = np.linalg.eigh(B)
    return (U * np.exp(s * w)) @ U.conj().T
