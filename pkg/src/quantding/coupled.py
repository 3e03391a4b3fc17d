"""Coupled quantisation on P^1 for ``-K = O(d_1) + ... + O(d_k)``.

Factor ``i`` carries the basis ``sqrt(C(m d_i, j)) z^j`` of ``H^0(m L_i)``
with reference form ``H_{i,0} = I``. Products of factor sections span
``H^0(-mK)``, and the tensor form ``H_1 ⊗ ... ⊗ H_k`` defines the coupled
potential ``FS(𝐇)``. In the tensor frame

    v_𝐣^* 𝐇^{-1} v_𝐣 = e^{m phi} prod_i v_i^* H_i^{-1} v_i,

where ``phi`` is the correction with ``e^{-phi} h_0 = h_0'`` between the
reference metric ``h_0`` of ``-K`` and the product ``h_0'`` of the factor
references. For the binomial bases here ``phi`` vanishes analytically; the
model still computes it from the section data and carries it through, so the
measure identity ``e^{-sum FS_i} dmu_0' = dmu_FS(𝐇)`` is a genuine check.

All models are written in log coordinates ``rho = log|z|^2`` (and angle
``psi``): the full model reuses the nodes of :func:`build_p1_model`, the
torus-reduced one averages the angle out and supports diagonal forms only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .bergman import GeodesicGenerator
from .hermitian import NotPositiveDefinite, as_hermitian, cholesky, expm_hermitian, gauge_normalize, logdet, whiten
from .model import Potential, _graded_axis, build_p1_model
from .slopes import GAP_TOL, _check_monotone, _gap, default_schedule
from .solver import CONVERGED, DIVERGING, MAX_ITERS, SolveResult, SolverConfig, SolverError, SolverTrace, _Monitor


def _log_binom(n):
    k = np.arange(n + 1)
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def _softplus(x):
    return np.logaddexp(0.0, x)


@dataclass(frozen=True, eq=False)
class CoupledModel:
    """Factor bases, tensor data and reference measures on a P^1 grid.

    ``log_mu0`` are log-weights of ``dmu_0`` (unit mass) and ``log_mu0p``
    those of ``dmu_0' = e^{-phi} dmu_0`` (renormalised to unit mass).
    """

    m: int
    degrees: tuple
    rho: np.ndarray
    psi: np.ndarray | None
    log_mu0: np.ndarray
    factor_values: tuple
    phi: np.ndarray
    log_mu0p: np.ndarray
    meta: dict = field(default_factory=dict)
    factor_logamp: tuple | None = None

    @property
    def k(self) -> int:
        return len(self.degrees)

    @property
    def sizes(self) -> tuple:
        return tuple(v.shape[1] for v in self.factor_values)

    @property
    def torus_averaged(self) -> bool:
        return self.psi is None

    def identity_forms(self):
        return [np.eye(n, dtype=complex) for n in self.sizes]

    def with_correction(self, phi) -> "CoupledModel":
        """Copy with a replaced correction field (``dmu_0'`` rebuilt from it)."""
        phi = np.asarray(phi, dtype=float)
        lp = self.log_mu0 - phi
        return CoupledModel(self.m, self.degrees, self.rho, self.psi, self.log_mu0, self.factor_values,
                            phi, lp - logsumexp(lp), dict(self.meta), self.factor_logamp)

    def tensor_values(self) -> np.ndarray:
        """Product sections ``s_𝐣`` in the ``h_0`` frame, shape ``(P, prod N_i)``.

        Built from raw monomials and the ``-K`` reference norm, independently
        of the stored correction.
        """
        logs = []
        for d in self.degrees:
            n = self.m * d
            logs.append(_log_binom(n)[None, :] + np.arange(n + 1)[None, :] * self.rho[:, None])
        tot = np.zeros((len(self.rho), 1))
        deg = np.zeros((1, 1), dtype=int)
        for lg in logs:
            tot = (tot[:, :, None] + lg[:, None, :]).reshape(len(self.rho), -1)
            deg = (deg[:, :, None] + np.arange(lg.shape[1])[None, None, :]).reshape(1, -1)
        base = 2 * self.m * _softplus(self.rho)
        amp = np.exp(0.5 * (tot - base[:, None]))
        if self.psi is None:
            return amp.astype(complex)
        return amp * np.exp(1j * deg * self.psi[:, None])


def _factor_logamp(rho, n):
    lg = _log_binom(n)[None, :] + np.arange(n + 1)[None, :] * rho[:, None]
    return 0.5 * (lg - n * _softplus(rho)[:, None])


def _factor_values(rho, psi, n):
    amp = np.exp(_factor_logamp(rho, n))
    if psi is None:
        return amp.astype(complex)
    return amp * np.exp(1j * np.arange(n + 1)[None, :] * psi[:, None])


def _assemble(m, degrees, rho, psi, log_mu0, meta):
    degrees = tuple(int(d) for d in degrees)
    if any(d <= 0 for d in degrees):
        raise ValueError("factor degrees must be positive")
    if sum(degrees) != 2:
        raise ValueError(f"factor degrees must sum to deg(-K_P1) = 2, got {sum(degrees)}")
    vals = tuple(_factor_values(rho, psi, m * d) for d in degrees)
    # correction: (1/m) log( prod_i sum_j |raw_ij|^2 / sum_k |raw_k|^2 )
    num = sum(logsumexp(_log_binom(m * d)[None, :] + np.arange(m * d + 1)[None, :] * rho[:, None], axis=1)
              for d in degrees)
    den = logsumexp(_log_binom(2 * m)[None, :] + np.arange(2 * m + 1)[None, :] * rho[:, None], axis=1)
    phi = (num - den) / m
    lp = log_mu0 - phi
    logamp = tuple(_factor_logamp(rho, m * d) for d in degrees) if psi is None else None
    return CoupledModel(m, degrees, rho, psi, log_mu0, vals, phi, lp - logsumexp(lp), meta, logamp)


def build_coupled_p1(degrees, m: int, resolution: int, angles: int | None = None) -> CoupledModel:
    """Coupled model on the nodes of ``build_p1_model(m, resolution, angles)``."""
    base = build_p1_model(m, resolution, angles)
    x, psi = base.grid.points[:, 0], base.grid.points[:, 1]
    rho = np.log((1 - x) / (1 + x))
    log_mu0 = np.log(base.weights * base.ref_volume)
    meta = dict(resolution=resolution, angles=base.meta["angles"])
    return _assemble(m, degrees, rho, psi, log_mu0, meta)


def reduced_coupled(cm: CoupledModel, log_h: list, margin: float = 34.0) -> CoupledModel:
    """Angle-averaged coupled model with a window adapted to diagonal forms ``diag(exp(log_h_i))``."""
    corners = [0.0]
    for d, lh in zip(cm.degrees, log_h):
        n = cm.m * d
        b = _log_binom(n) - np.asarray(lh, dtype=float)
        j = np.arange(n + 1)
        for a in range(n + 1):
            for c in range(a + 1, n + 1):
                r = (b[a] - b[c]) / (c - a)
                if b[a] + a * r >= np.max(b + j * r) - 1e-9 * (1 + np.abs(b).max()):
                    corners.append(r)
    lo, hi = min(corners), max(corners)
    rho, w = _graded_axis(lo, hi, margin, 1.0, 5.0, 12)
    # angle-integrated round measure: (1/4) sech^2(rho/2) drho
    log_mu0 = np.log(w) + np.log(0.25) - 2 * np.log(np.cosh(0.5 * rho))
    meta = dict(window_lo=float(lo), window_hi=float(hi))
    return _assemble(cm.m, cm.degrees, rho, None, log_mu0, meta)


# ---------------------------------------------------------------------------
# potentials and functionals


def _whitened(cm, i, H):
    H = as_hermitian(H, tol=1e-10)
    if H.shape != (cm.sizes[i],) * 2:
        raise ValueError(f"factor {i} form has shape {H.shape}, expected N = {cm.sizes[i]}")
    C = cholesky(H)
    w = whiten(C, cm.factor_values[i])
    return C, w, np.sum(np.abs(w) ** 2, axis=1)


def fs_factor(cm: CoupledModel, i: int, H) -> Potential:
    """``FS_i(H_i) = (1/m) log(v_i^* H_i^{-1} v_i)`` in the ``h_{i,0}`` frame."""
    _, _, q = _whitened(cm, i, H)
    return Potential(np.log(q) / cm.m)


def coupled_fs(cm: CoupledModel, forms) -> Potential:
    """``FS(𝐇)`` by factorised contraction: ``phi + sum_i FS_i(H_i)``."""
    _check_forms(cm, forms)
    vals = cm.phi.copy()
    for i, H in enumerate(forms):
        vals = vals + fs_factor(cm, i, H).values
    return Potential(vals)


def coupled_fs_dense(cm: CoupledModel, forms) -> Potential:
    """``FS(𝐇)`` from the materialised Kronecker product (oracle for small sizes)."""
    _check_forms(cm, forms)
    Ht = np.ones((1, 1), dtype=complex)
    for H in forms:
        Ht = np.kron(Ht, np.asarray(H, dtype=complex))
    v = cm.tensor_values()
    w = whiten(cholesky(Ht), v)
    return Potential(np.log(np.sum(np.abs(w) ** 2, axis=1)) / cm.m)


def _check_forms(cm, forms):
    if len(forms) != cm.k:
        raise ValueError(f"expected {cm.k} forms, got {len(forms)}")


def check_measure_identity(cm: CoupledModel, forms, dense: bool | None = None) -> float:
    """Largest pointwise ``|e^{-sum FS_i} dmu_0' / dmu_FS(𝐇) - 1|``.

    Both measures are normalised by ``dmu_0`` and ``dmu_0'`` having unit
    mass; ``dmu_FS(𝐇)`` uses the dense tensor contraction when the tensor
    size is at most 100 (override with ``dense``).
    """
    _check_forms(cm, forms)
    dense = (math.prod(cm.sizes) <= 100) if dense is None else dense
    fs = coupled_fs_dense(cm, forms) if dense else coupled_fs(cm, forms)
    lhs = cm.log_mu0p - sum(fs_factor(cm, i, H).values for i, H in enumerate(forms))
    rhs = cm.log_mu0 - fs.values
    return float(np.max(np.abs(np.expm1(lhs - rhs))))


def _measure(cm, ws_qs):
    lw = cm.log_mu0 - sum(np.log(q) for _, q in ws_qs) / cm.m - cm.phi
    return lw


def _moments(cm, ws, qs, lw):
    mu = np.exp(lw - logsumexp(lw))
    out = []
    for w, q in zip(ws, qs):
        a = mu / q
        if cm.torus_averaged:
            M = np.diag(np.sum(a[:, None] * np.abs(w) ** 2, axis=0)).astype(complex)
        else:
            M = (w.T * a) @ w.conj()
            M = 0.5 * (M + M.conj().T)
        out.append(M)
    return out


def coupled_L(cm: CoupledModel, forms) -> float:
    """``L(FS(𝐇)) = -log int e^{-FS(𝐇)} dmu_0``."""
    return float(-logsumexp(cm.log_mu0 - coupled_fs(cm, forms).values))


def coupled_quantised_ding(cm: CoupledModel, forms) -> float:
    """``L(FS(𝐇)) - sum_i E_{i,m}(H_i)`` with ``E_{i,m} = -log det H_i / (m N_i)``."""
    val = coupled_L(cm, forms)
    for H in forms:
        val += logdet(H) / (cm.m * H.shape[0])
    return val


def coupled_moment_residuals(cm: CoupledModel, forms):
    """Per-factor ``N_i M_i - I`` and their Frobenius norms."""
    data = [_whitened(cm, i, H) for i, H in enumerate(forms)]
    ws, qs = [d[1] for d in data], [d[2] for d in data]
    lw = cm.log_mu0 - sum(np.log(q) for q in qs) / cm.m - cm.phi
    Ms = _moments(cm, ws, qs, lw)
    Rs = [n * M - np.eye(n) for n, M in zip(cm.sizes, Ms)]
    return Rs, [float(np.linalg.norm(R)) for R in Rs]


def solve_coupled_balanced(cm: CoupledModel, forms_init, cfg: SolverConfig | None = None):
    """Coupled balanced forms by block iteration over the factors.

    ``fixed-point`` sweeps the factors in order with
    ``H_i <- N_i int v_i v_i^* / q_i dmu_FS(𝐇)`` (normalised);
    ``gradient`` moves all factors along ``C_i exp(2 s R_i) C_i^*`` with a
    shared Armijo step. Each factor is rescaled to ``det H_i = 1``.
    Converged when every factor residual is below ``cfg.residual_tol``.
    """
    cfg = cfg or SolverConfig()
    forms = [np.asarray(H, dtype=complex) for H in forms_init]
    _check_forms(cm, forms)
    if cfg.gauge:
        forms = [gauge_normalize(H) for H in forms]
    trace = SolverTrace()
    mon = _Monitor(cfg)
    step = cfg.step_size
    prev = None
    m = cm.m
    for it in range(cfg.max_iters + 1):
        try:
            Rs, norms = coupled_moment_residuals(cm, forms)
            ding = coupled_quantised_ding(cm, forms)
        except NotPositiveDefinite as exc:
            raise SolverError(str(exc), it) from None
        res = float(max(norms))
        trace.append(ding, res, float(np.linalg.norm(norms)), step if cfg.method == "gradient" else 1 - cfg.damping)
        if res < cfg.residual_tol:
            return SolveResult(forms, trace, CONVERGED)
        if mon.update(ding, res, prev):
            return SolveResult(forms, trace, DIVERGING)
        if it == cfg.max_iters:
            break
        prev = ding
        if cfg.method == "fixed-point":
            for i in range(cm.k):
                Rs, _ = coupled_moment_residuals(cm, forms)
                C = cholesky(forms[i])
                G = C @ (np.eye(cm.sizes[i]) + Rs[i]) @ C.conj().T
                H = (1 - cfg.damping) * G + cfg.damping * forms[i]
                H = 0.5 * (H + H.conj().T)
                forms[i] = gauge_normalize(H) if cfg.gauge else H
        else:
            slope = sum(2.0 / (m * n) * float(np.real(np.vdot(R, R))) for n, R in zip(cm.sizes, Rs))
            Cs = [cholesky(H) for H in forms]
            s = step
            for _ in range(40):
                cand = []
                try:
                    for C, R in zip(Cs, Rs):
                        H = C @ expm_hermitian(R, 2 * s) @ C.conj().T
                        H = 0.5 * (H + H.conj().T)
                        cand.append(gauge_normalize(H) if cfg.gauge else H)
                    val = coupled_quantised_ding(cm, cand)
                except NotPositiveDefinite:
                    val = math.inf
                if val <= ding - 1e-4 * s * slope + 1e-12 * max(1.0, abs(ding)):
                    break
                s *= 0.5
            else:
                raise SolverError("line search failed to decrease the coupled functional", it)
            ratio = (ding - val) / (s * slope) if slope > 0 else 0.0
            step = min(2 * s if ratio > 0.9 else (0.5 * s if ratio < 0.3 else s), cfg.max_step * cfg.step_size)
            forms = cand
    return SolveResult(forms, trace, MAX_ITERS)


# ---------------------------------------------------------------------------
# slopes


@dataclass
class CoupledSlopeReport:
    slope_L: float
    trace_terms: list
    pairing: float
    gap: float
    t_schedule: list
    samples: list
    reduced: bool

    def to_dict(self):
        from dataclasses import asdict

        return asdict(self)


def _coupled_dL(cm, gens, t):
    """``d/dt L`` along ``H_{i,t} = e^{-2tA_i}``: ``(2/m) sum_i tr(A_i M_i(t))``."""
    # unit-normalised |w_i|^2 per factor and log q_i, in the log domain when reduced
    ps, logqs, lams = [], [], []
    for i, gen in enumerate(gens):
        if cm.factor_logamp is not None:
            lam = np.real(np.diag(gen.A))
            la2 = 2 * cm.factor_logamp[i] + 2 * t * (lam - lam.max())[None, :]
        else:
            lam, U = gen.eig
            w = (cm.factor_values[i] @ U.conj()) * np.exp(t * (lam - lam.max()))
            la2 = np.log(np.abs(w) ** 2)
        lq = logsumexp(la2, axis=1)
        ps.append(np.exp(la2 - lq[:, None]))
        logqs.append(lq)
        lams.append(lam)
    lw = cm.log_mu0 - sum(logqs) / cm.m - cm.phi
    mu = np.exp(lw - logsumexp(lw))
    total = sum(float(np.dot(lam, mu @ p)) for p, lam in zip(ps, lams))
    return 2.0 / cm.m * total


def coupled_slope(cm: CoupledModel, gens, schedule=None, reduce=None, tol: float = GAP_TOL) -> CoupledSlopeReport:
    """Slope of ``L`` along the tensor geodesic and the coupled pairing.

    ``pairing = slope_L - sum_i 2 tr(A_i) / (m N_i)`` is the asymptotic slope
    of the coupled quantised Ding functional.
    """
    gens = [g if isinstance(g, GeodesicGenerator) else GeodesicGenerator(np.asarray(g)) for g in gens]
    _check_forms(cm, gens)
    for g, n in zip(gens, cm.sizes):
        if g.N != n:
            raise ValueError("generator size does not match factor basis")
    diag = all(g.is_diagonal for g in gens)
    reduce = diag and not cm.torus_averaged if reduce is None else reduce
    if reduce and not diag:
        raise ValueError("torus reduction needs diagonal generators")
    adaptive = schedule is None
    schedule = default_schedule(cm.m) if adaptive else [float(t) for t in schedule]
    samples = []
    for t in schedule:
        sub = cm
        if reduce:
            sub = reduced_coupled(cm, [-2 * t * np.real(np.diag(g.A)) for g in gens])
        samples.append((float(t), _coupled_dL(sub, gens, t)))
        if adaptive and len(samples) > 1 and abs(samples[-1][1] - samples[-2][1]) < tol:
            break
    vals = [s[1] for s in samples]
    _check_monotone(vals, "dL/dt")
    terms = [2 * g.trace / (cm.m * n) for g, n in zip(gens, cm.sizes)]
    return CoupledSlopeReport(
        slope_L=vals[-1],
        trace_terms=terms,
        pairing=vals[-1] - sum(terms),
        gap=_gap(vals),
        t_schedule=[s[0] for s in samples],
        samples=samples,
        reduced=bool(reduce),
    )
