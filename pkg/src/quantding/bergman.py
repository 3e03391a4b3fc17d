"""FS and Hilb maps, the functionals L, E, E_m, D_m, Bergman geodesics and moments.

Conventions (reference basis, ``H_0 = I``):

* ``FS(H) = (1/m) log q`` with ``q = v^* H^{-1} v`` in the normalised frame,
  so ``e^{-m FS(H)} = 1/q`` and ``dmu_FS(H) = q^{-1/m} dmu_0``.
* ``Hilb(phi) = N / (int dmu_phi) * int e^{-m phi} v v^* dmu_phi``.
* With ``H = C C^*`` and ``w = C^{-1} v`` the *moment matrix* is
  ``M = (int w w^* / q dmu_FS(H)) / (int dmu_FS(H))``; it has unit trace and
  ``C^{-1} Hilb(FS(H)) C^{-*} = N M``. ``H`` is balanced iff ``M = I/N``.

All integrals are plain weighted sums over the grid (numpy pairwise
summation), so results are reproducible run to run.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import logsumexp

from .hermitian import as_hermitian, logdet
from .model import ManifoldModel, Potential, _det, eval_fs_potential, fs_kahler, whitened_sections


def _log_weights(model: ManifoldModel) -> np.ndarray:
    return np.log(model.weights * model.ref_volume)


def volume_form(model: ManifoldModel, phi: Potential) -> np.ndarray:
    """Density of ``dmu_phi = e^{-phi} dmu_0`` against the quadrature weights."""
    _check(model, phi)
    return np.exp(-phi.values) * model.ref_volume


def _check(model, phi):
    if np.shape(phi.values) != (len(model.grid),):
        raise ValueError(f"potential has {np.size(phi.values)} values, grid has {len(model.grid)}")


def functional_L(model: ManifoldModel, phi: Potential) -> float:
    """``L(phi) = -log int dmu_phi``."""
    _check(model, phi)
    return float(-logsumexp(_log_weights(model) - phi.values))


def mixed_volume(g0: np.ndarray, g1: np.ndarray) -> np.ndarray:
    """Coefficient of ``omega_a ^ omega_b`` against ``std_density`` in dimension two."""
    return (
        g0[..., 0, 0] * g1[..., 1, 1]
        + g0[..., 1, 1] * g1[..., 0, 0]
        - g0[..., 0, 1] * g1[..., 1, 0]
        - g0[..., 1, 0] * g1[..., 0, 1]
    ).real


def energy_density(model: ManifoldModel, kahler: np.ndarray) -> np.ndarray:
    """``sum_j omega_0^{n-j} ^ omega_phi^j`` as a density against the weights."""
    g0 = model.ref_kahler
    if model.n == 1:
        dens = (g0[:, 0, 0] + kahler[:, 0, 0]).real
    else:
        dens = 2 * _det(g0).real + mixed_volume(g0, kahler) + 2 * _det(kahler).real
    return dens * model.std_density


def functional_E(model: ManifoldModel, phi: Potential) -> float:
    """Monge-Ampere energy ``(1/((n+1)V)) sum_j int phi omega_0^{n-j} ^ omega_phi^j``.

    ``V`` is the discrete ``int omega_0^n`` of the model, so that
    ``E(c) = c`` holds to rounding. Needs ``phi.kahler``.
    """
    _check(model, phi)
    if phi.kahler is None:
        raise ValueError("functional_E needs the Kahler form of the potential")
    dens = energy_density(model, phi.kahler)
    return float(np.sum(model.weights * phi.values * dens) / ((model.n + 1) * model.discrete_volume))


def functional_Em(H, m: int, H0=None) -> float:
    """``E_m(H) = -(1/(m N)) log det(H H_0^{-1})``."""
    H = as_hermitian(H, tol=1e-10)
    ld = logdet(H) - (0.0 if H0 is None else logdet(H0))
    return -ld / (m * H.shape[0])


def hilb(model: ManifoldModel, phi: Potential) -> np.ndarray:
    """Rescaled ``L^2`` Gram matrix of the basis for the metric ``e^{-m phi} h_0``."""
    _check(model, phi)
    la = _log_weights(model) - phi.values
    lb = la - model.m * phi.values
    shift = lb.max()
    b = np.exp(lb - shift)
    v = model.section_values
    if model.torus_averaged:
        G = np.diag(np.sum(b[:, None] * np.abs(v) ** 2, axis=0)).astype(complex)
    else:
        G = (v.T * b) @ v.conj()
    G *= model.N * np.exp(shift - logsumexp(la))
    return 0.5 * (G + G.conj().T)


@dataclass(frozen=True, eq=False)
class FSData:
    """Whitened data of ``FS(H)`` at the nodes.

    ``w`` holds the whitened basis values normalised to unit length per node
    (``w / sqrt(q)``) and ``logq = log q``; everything downstream is
    homogeneous of degree zero in ``w`` except the potential itself. ``lw``
    are log-weights of ``dmu_FS(H)`` up to the constant ``offset`` (the true
    log-weights are ``lw - offset``), nonzero for gauge-shifted data. ``lam``
    is the generator spectrum aligned with the columns of ``w`` when the data
    comes from a geodesic.
    """

    w: np.ndarray
    logq: np.ndarray
    lw: np.ndarray
    m: int
    torus_averaged: bool = False
    dw: np.ndarray | None = None
    offset: float = 0.0
    lam: np.ndarray | None = None

    @cached_property
    def mu(self) -> np.ndarray:
        """Normalised weights of ``dmu_FS(H)`` (sum to one)."""
        return np.exp(self.lw - logsumexp(self.lw))

    @cached_property
    def moment(self) -> np.ndarray:
        """Moment matrix ``M``; unit trace."""
        if self.torus_averaged:
            return np.diag(self.mu @ np.abs(self.w) ** 2).astype(complex)
        M = (self.w.T * self.mu) @ self.w.conj()
        return 0.5 * (M + M.conj().T)

    @property
    def potential_values(self) -> np.ndarray:
        return self.logq / self.m

    @property
    def L(self) -> float:
        return float(-logsumexp(self.lw)) + self.offset

    @cached_property
    def kahler(self) -> np.ndarray:
        return fs_kahler(self.w, self.dw, np.ones(len(self.logq)), self.m)


def _normalised(model, w, dw):
    q = np.sum(np.abs(w) ** 2, axis=1)
    s = 1.0 / np.sqrt(q)
    w = w * s[:, None]
    if dw is not None:
        dw = dw * s[:, None, None]
    return w, dw, np.log(q)


def _from_log_amplitudes(model, la, jets):
    """Unit-normalised real values and jets from ``log |w_i|`` on reduced models."""
    logq = logsumexp(2 * la, axis=1)
    w = np.exp(la - 0.5 * logq[:, None]).astype(complex)
    dw = None
    if jets:
        U = model.toric.lattice.T.astype(float)
        dw = U[None, :, :] * w[:, None, :]
    return w, dw, logq


def fs_data(model: ManifoldModel, H, jets: bool = False) -> FSData:
    w, dw, q = whitened_sections(model, H, jets=jets)
    w, dw, logq = _normalised(model, w, dw)
    lw = _log_weights(model) - logq / model.m
    return FSData(w, logq, lw, model.m, model.torus_averaged, dw)


def moment_matrix(model: ManifoldModel, H) -> np.ndarray:
    return fs_data(model, H).moment


def moment_residual(model: ManifoldModel, H):
    """``R = W^* (Hilb(FS(H)) - H) W`` with ``W`` the whitening factor, and ``|R|_F``.

    ``R = N M - I``; zero iff ``H`` is balanced.
    """
    R = model.N * moment_matrix(model, H) - np.eye(model.N)
    return R, float(np.linalg.norm(R))


def quantised_ding(model: ManifoldModel, H, H0=None) -> float:
    """``D_m(H) = L(FS(H)) - E_m(H)``."""
    return fs_data(model, H).L - functional_Em(H, model.m, H0)


def bergman_function(model: ManifoldModel, H) -> Potential:
    """Bergman function ``rho_m`` of ``FS(H)``.

    Sum of ``|sigma_i|^2_{h_H}`` over a basis orthonormal for
    ``(Vol/N) Hilb(FS(H))``; with unit-normalised whitened values ``w`` this
    is ``(w^* M^{-1} w) / Vol``.
    Its ``dmu_FS(H)``-mean is ``N / Vol``.
    """
    d = fs_data(model, H)
    M = d.moment
    if d.torus_averaged:
        val = np.sum(np.abs(d.w) ** 2 / np.real(np.diag(M)), axis=1)
    else:
        X = np.linalg.solve(M, d.w.T)
        val = np.real(np.sum(d.w.conj().T * X, axis=0))
    return Potential(val / model.volume)


def bergman_oscillation(model: ManifoldModel, H) -> float:
    """``sup |rho_m - mean| / mean`` with mean ``N / Vol``."""
    rho = bergman_function(model, H).values
    mean = model.N / model.volume
    return float(np.max(np.abs(rho / mean - 1.0)))


# ---------------------------------------------------------------------------
# geodesics


@dataclass(frozen=True, eq=False)
class GeodesicGenerator:
    """Hermitian generator ``A`` of the Bergman geodesic ``H_t = e^{-tA^*} e^{-tA}``.

    With ``integral=True`` the spectrum must be integral to ``1e-8`` (the
    generator of a test configuration).
    """

    A: np.ndarray
    integral: bool = False
    eig: tuple = field(init=False, repr=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("generator must be a square matrix")
        scale = max(1.0, np.abs(A).max())
        if np.abs(A - A.conj().T).max() > 1e-12 * scale:
            raise ValueError("generator is not hermitian")
        A = 0.5 * (A + A.conj().T)
        lam, U = np.linalg.eigh(A)
        if self.integral and np.abs(lam - np.round(lam)).max() > 1e-8:
            raise ValueError("generator spectrum is not integral")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "eig", (lam, U))

    @classmethod
    def diagonal(cls, entries, integral: bool = False) -> "GeodesicGenerator":
        return cls(np.diag(np.asarray(entries, dtype=complex)), integral)

    @property
    def N(self) -> int:
        return self.A.shape[0]

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.A)))

    @property
    def is_diagonal(self) -> bool:
        return bool(np.all(self.A == np.diag(np.diag(self.A))))

    def translated(self, c: float) -> "GeodesicGenerator":
        return GeodesicGenerator(self.A + c * np.eye(self.N), self.integral and float(c).is_integer())

    def negated(self) -> "GeodesicGenerator":
        return GeodesicGenerator(-self.A, self.integral)


def bergman_geodesic(gen: GeodesicGenerator, t: float, gauge: bool = False) -> np.ndarray:
    """``H_t = U e^{-2 t Lambda} U^*``.

    With ``gauge`` the generator is first translated by ``-lambda_max`` so
    entries stay bounded by 1 for large ``t``; the result is then
    ``e^{2 t lambda_max} H_t``.
    """
    if t < 0:
        raise ValueError("geodesic parameter must be non-negative")
    lam, U = gen.eig
    if gauge:
        lam = lam - lam.max()
    return (U * np.exp(-2 * t * lam)) @ U.conj().T


def geodesic_data(model: ManifoldModel, gen: GeodesicGenerator, t: float, jets: bool = False) -> FSData:
    """``FSData`` of ``H_t``, computed in the eigenframe of ``A``.

    ``w = e^{t(Lambda - lambda_max)} U^* v`` never overflows; the translation
    is recorded in ``offset`` so ``L`` is exact. On torus-reduced models the
    (diagonal) data is formed in the log domain.
    """
    if gen.N != model.N:
        raise ValueError(f"generator has size {gen.N}, model has N = {model.N}")
    lam_all = gen.eig[0]
    lmax = lam_all.max()
    offset = 2 * t * lmax / model.m
    if model.torus_averaged:
        if not gen.is_diagonal:
            raise ValueError("torus-reduced models only accept diagonal generators")
        lam = np.real(np.diag(gen.A))
        la = model.log_amplitudes + t * (lam - lmax)[None, :]
        w, dw, logq = _from_log_amplitudes(model, la, jets)
    else:
        lam, U = gen.eig
        scale = np.exp(t * (lam - lmax))
        w = (model.section_values @ U.conj()) * scale
        dw = (model.section_jets[0] @ U.conj()) * scale if jets else None
        w, dw, logq = _normalised(model, w, dw)
    lw = _log_weights(model) - logq / model.m
    return FSData(w, logq, lw, model.m, model.torus_averaged, dw, offset=offset, lam=lam)


def ding_derivative(model: ManifoldModel, gen: GeodesicGenerator, t: float) -> float:
    """``d/dt D_m(H_t) = (2/m) tr(A M_t) - 2 tr(A) / (m N)``."""
    return L_derivative(model, gen, t) - 2 * gen.trace / (model.m * model.N)


def L_derivative(model: ManifoldModel, gen: GeodesicGenerator, t: float) -> float:
    """``d/dt L(FS(H_t)) = (2/m) sum_i lambda_i M_ii`` in the eigenframe."""
    d = geodesic_data(model, gen, t)
    Mdiag = d.mu @ np.abs(d.w) ** 2
    return float(2.0 / model.m * np.dot(d.lam, Mdiag))


def E_derivative(model: ManifoldModel, gen: GeodesicGenerator, t: float) -> float:
    """``d/dt E(FS(H_t)) = int dphi/dt omega_t^n / int omega_t^n``.

    Normalising by the discrete ``int omega_t^n`` makes ``A = c Id`` give
    exactly ``2c/m``.
    """
    d = geodesic_data(model, gen, t, jets=True)
    phidot = 2.0 / model.m * (np.abs(d.w) ** 2 @ d.lam)
    g = d.kahler
    vol = (_det(g).real if model.n == 2 else g[:, 0, 0].real) * model.std_density * model.weights
    return float(np.sum(phidot * vol) / np.sum(vol))


def geodesic_potential(model: ManifoldModel, gen: GeodesicGenerator, t: float) -> Potential:
    """``FS(H_t)`` with its Kahler form."""
    d = geodesic_data(model, gen, t, jets=True)
    return Potential(d.potential_values + d.offset, d.kahler)


def ding_along(model: ManifoldModel, gen: GeodesicGenerator, t: float) -> float:
    """``D_m(H_t)``, evaluated without forming ``H_t``."""
    d = geodesic_data(model, gen, t)
    return d.L - 2 * t * gen.trace / (model.m * model.N)


__all__ = [
    "FSData",
    "GeodesicGenerator",
    "L_derivative",
    "E_derivative",
    "bergman_function",
    "bergman_geodesic",
    "bergman_oscillation",
    "ding_along",
    "ding_derivative",
    "diagonal_fs_data",
    "eval_fs_potential",
    "fs_data",
    "functional_E",
    "functional_Em",
    "functional_L",
    "geodesic_data",
    "geodesic_potential",
    "hilb",
    "moment_matrix",
    "moment_residual",
    "quantised_ding",
    "volume_form",
]


def diagonal_fs_data(model: ManifoldModel, log_h) -> FSData:
    """``FSData`` of ``H = diag(exp(log_h))`` without a Cholesky factorisation.

    Usable for arbitrarily spread diagonals (torus orbits far from ``H_0``);
    the log-scale is carried in ``offset``.
    """
    log_h = np.asarray(log_h, dtype=float)
    lo = log_h.min()
    if model.log_amplitudes is not None:
        w, dw, logq = _from_log_amplitudes(model, model.log_amplitudes - 0.5 * (log_h - lo)[None, :], False)
    else:
        w, dw, logq = _normalised(model, model.section_values * np.exp(-0.5 * (log_h - lo)), None)
    lw = _log_weights(model) - logq / model.m
    return FSData(w, logq, lw, model.m, model.torus_averaged, None, offset=-lo / model.m)
