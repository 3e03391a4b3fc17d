"""Balanced metrics by fixed-point iteration of Hilb∘FS or geodesic gradient descent.

Both methods work in the whitened frame of the current iterate ``H = C C^*``,
where the moment residual ``R = N M - I`` is the (scaled) gradient of
``D_m``: along ``H_s = C e^{-2sB} C^*`` one has
``dD_m/ds = (2/(mN)) tr(B R)``.

* fixed point: ``H <- (1-d) C (I + R) C^* + d H``, i.e. ``Hilb(FS(H))``;
* gradient: ``H <- C exp(2 s R) C^*`` with Armijo backtracking on ``D_m``.

Iterates are rescaled to ``det H = 1`` after every step. With
``torus_reduce`` the iteration is restricted to diagonal forms on a toric
model and runs on torus-reduced quadrature that follows the iterate, which is
what makes runs along destabilising torus orbits (``D_m -> -inf``) feasible.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .bergman import (
    bergman_oscillation,
    diagonal_fs_data,
    fs_data,
    functional_Em,
)
from .hermitian import NotPositiveDefinite, cholesky, expm_hermitian, gauge_normalize, logdet
from .model import ManifoldModel, reduced_model_for

CONVERGED = "converged"
MAX_ITERS = "max_iters"
DIVERGING = "diverging"


class SolverError(RuntimeError):
    """Loss of positive definiteness during iteration."""

    def __init__(self, message: str, iteration: int):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration


@dataclass
class SolverConfig:
    """Solver settings.

    ``divergence_floor`` and ``stall_window`` drive the ``diverging`` status:
    ``D_m`` below the floor, or ``stall_window`` consecutive iterations in
    which ``D_m`` decreased while the residual failed to improve by the
    relative amount ``stall_ratio``.
    """

    method: str = "fixed-point"
    max_iters: int = 200
    residual_tol: float = 1e-8
    step_size: float = 0.5
    damping: float = 0.0
    gauge: bool = True
    seed: int = 0
    divergence_floor: float = -50.0
    stall_window: int = 20
    stall_ratio: float = 1e-3
    max_step: float = 64.0
    torus_reduce: bool = False

    def __post_init__(self):
        if self.method not in ("fixed-point", "gradient"):
            raise ValueError(f"unknown method {self.method!r}")
        if not self.residual_tol > 0:
            raise ValueError("residual_tol must be positive")
        if not 0 <= self.damping < 1:
            raise ValueError("damping must lie in [0, 1)")
        if self.max_iters < 1 or self.step_size <= 0:
            raise ValueError("max_iters and step_size must be positive")


@dataclass
class SolverTrace:
    ding: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    oscillation: list = field(default_factory=list)
    step: list = field(default_factory=list)

    def append(self, ding, residual, oscillation, step):
        self.ding.append(float(ding))
        self.residual.append(float(residual))
        self.oscillation.append(float(oscillation))
        self.step.append(float(step))

    def __len__(self):
        return len(self.ding)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["iteration", "ding", "residual", "oscillation", "step"])
        for i, row in enumerate(zip(self.ding, self.residual, self.oscillation, self.step)):
            wr.writerow([i, *(repr(x) for x in row)])
        return buf.getvalue()

    def to_dict(self):
        return asdict(self)


class SolveResult(NamedTuple):
    H: np.ndarray
    trace: SolverTrace
    status: str


class _Monitor:
    """Divergence bookkeeping shared by the dense and torus-reduced loops."""

    def __init__(self, cfg: SolverConfig):
        self.cfg = cfg
        self.best = math.inf
        self.stalled = 0

    def update(self, ding, res, prev_ding) -> bool:
        cfg = self.cfg
        if ding < cfg.divergence_floor:
            return True
        if res < self.best * (1 - cfg.stall_ratio):
            self.best = res
            self.stalled = 0
        elif prev_ding is not None and ding < prev_ding:
            self.stalled += 1
        else:
            self.stalled = 0
        return self.stalled >= cfg.stall_window


def solve_balanced(model: ManifoldModel, H_init, cfg: SolverConfig | None = None) -> SolveResult:
    """Iterate towards ``Hilb(FS(H)) = H``.

    Returns ``(H, trace, status)`` with status ``converged`` (moment residual
    below ``cfg.residual_tol``), ``max_iters`` or ``diverging``. Raises
    :class:`SolverError` if an iterate stops being positive definite.
    """
    cfg = cfg or SolverConfig()
    if cfg.torus_reduce:
        return _solve_torus(model, H_init, cfg)
    return solve_moment_problem(model, H_init, cfg)


def weighted_energy(H, m: int, targets, blocks) -> float:
    """``-(1/m) sum_blocks T_block log det H_block``; ``E_m`` for uniform targets."""
    total = 0.0
    for idx in blocks:
        total += targets[idx[0]] * logdet(H[np.ix_(idx, idx)])
    return -total / m


def solve_moment_problem(model: ManifoldModel, H_init, cfg: SolverConfig, targets=None, blocks=None) -> SolveResult:
    """Drive the moment matrix to ``diag(targets)`` (default ``I/N``).

    ``targets`` must be constant on each index block of ``blocks`` and sum to
    one; ``H`` is then kept block diagonal and the functional minimised is
    ``L(FS(H)) - (-(1/m) sum T_b log det H_b)``. Its gradient in the whitened
    frame is ``R = N (M - T)``; the fixed-point map is
    ``H <- C T^{-1/2} M T^{-1/2} C^*``, which is ``Hilb(FS(H))`` for ``T = I/N``.
    """
    N, m = model.N, model.m
    uniform = targets is None
    T = np.full(N, 1.0 / N) if uniform else np.asarray(targets, dtype=float)
    blocks = [np.arange(N)] if blocks is None else [np.asarray(b) for b in blocks]

    def energy(H):
        return functional_Em(H, m) if uniform else weighted_energy(H, m, T, blocks)

    H = np.asarray(H_init, dtype=complex)
    H = 0.5 * (H + H.conj().T)
    if cfg.gauge:
        H = gauge_normalize(H)
    scale = 1.0 / np.sqrt(N * T)
    trace = SolverTrace()
    mon = _Monitor(cfg)
    step = cfg.step_size
    prev = None
    for it in range(cfg.max_iters + 1):
        try:
            C = cholesky(H)
            d = fs_data(model, H)
            ding = d.L - energy(H)
        except NotPositiveDefinite as exc:
            raise SolverError(str(exc), it) from None
        R = N * (d.moment - np.diag(T))
        res = float(np.linalg.norm(R))
        osc = bergman_oscillation(model, H) if uniform else float(np.abs(R).max())
        trace.append(ding, res, osc, step if cfg.method == "gradient" else 1 - cfg.damping)
        if res < cfg.residual_tol:
            return SolveResult(H, trace, CONVERGED)
        if mon.update(ding, res, prev):
            return SolveResult(H, trace, DIVERGING)
        if it == cfg.max_iters:
            break
        prev = ding
        if cfg.method == "fixed-point":
            G = C @ (scale[:, None] * (N * d.moment) * scale[None, :]) @ C.conj().T
            H = (1 - cfg.damping) * G + cfg.damping * H
        else:
            H, step = _gradient_step(model, C, R, ding, step, cfg, it, energy)
        H = 0.5 * (H + H.conj().T)
        if cfg.gauge:
            try:
                H = gauge_normalize(H)
            except NotPositiveDefinite as exc:
                raise SolverError(str(exc), it + 1) from None
    return SolveResult(H, trace, MAX_ITERS)


def _armijo(value, ding, s, slope):
    return value <= ding - 1e-4 * s * slope + 1e-12 * max(1.0, abs(ding))


def _next_step(value, ding, s, slope, cfg):
    # grow only when the first-order model is accurate, shrink when it is poor;
    # once the predicted decrease is at round-off level the ratio is noise
    if s * slope < 1e-10 * max(1.0, abs(ding)):
        return s
    ratio = (ding - value) / (s * slope) if slope > 0 else 0.0
    if ratio > 0.9:
        s = 2 * s
    elif ratio < 0.3:
        s = 0.5 * s
    return min(s, cfg.max_step * cfg.step_size)


def _gradient_step(model, C, R, ding, step, cfg, it, energy):
    N, m = model.N, model.m
    slope = 2.0 / (m * N) * float(np.real(np.vdot(R, R)))
    s = step
    for _ in range(40):
        Hn = C @ expm_hermitian(R, 2 * s) @ C.conj().T
        try:
            Hn = gauge_normalize(0.5 * (Hn + Hn.conj().T))
            val = fs_data(model, Hn).L - energy(Hn)
        except NotPositiveDefinite:
            val = math.inf
        if _armijo(val, ding, s, slope):
            return Hn, _next_step(val, ding, s, slope, cfg)
        s *= 0.5
    raise SolverError("line search failed to decrease D_m", it)


def _solve_torus(model: ManifoldModel, H_init, cfg: SolverConfig) -> SolveResult:
    if model.toric is None:
        raise ValueError("torus_reduce needs a model with toric structure")
    H = np.asarray(H_init, dtype=complex)
    if np.abs(H - np.diag(np.diag(H))).max() > 1e-10 * np.abs(H).max():
        raise ValueError("torus_reduce needs a diagonal initial form")
    h = np.real(np.diag(H))
    if np.any(h <= 0):
        raise SolverError("diagonal entry not positive", 0)
    eta = np.log(h)
    N, m = model.N, model.m

    def evaluate(eta):
        sub = reduced_model_for(model, eta)
        d = diagonal_fs_data(sub, eta)
        Md = np.real(np.diag(d.moment))
        return d.L + eta.sum() / (m * N), Md

    if cfg.gauge:
        eta = eta - eta.mean()
    trace = SolverTrace()
    mon = _Monitor(cfg)
    step = cfg.step_size
    prev = None
    status = MAX_ITERS
    ding, Md = evaluate(eta)
    for it in range(cfg.max_iters + 1):
        r = N * Md - 1.0
        res = float(np.linalg.norm(r))
        # on diagonal forms the oscillation certificate is bounded by |R|_2
        trace.append(ding, res, float(np.abs(r).max()), step if cfg.method == "gradient" else 1 - cfg.damping)
        if res < cfg.residual_tol:
            status = CONVERGED
            break
        if mon.update(ding, res, prev):
            status = DIVERGING
            break
        if it == cfg.max_iters:
            break
        prev = ding
        if cfg.method == "fixed-point":
            eta = eta + (1 - cfg.damping) * np.log(N * Md)
            if cfg.gauge:
                eta = eta - eta.mean()
            ding, Md = evaluate(eta)
        else:
            slope = 2.0 / (m * N) * float(r @ r)
            s = step
            for _ in range(40):
                cand = eta + 2 * s * r
                if cfg.gauge:
                    cand = cand - cand.mean()
                val, Mc = evaluate(cand)
                if _armijo(val, ding, s, slope):
                    break
                s *= 0.5
            else:
                raise SolverError("line search failed to decrease D_m", it)
            step = _next_step(val, ding, s, slope, cfg)
            eta, ding, Md = cand, val, Mc
    return SolveResult(np.diag(np.exp(eta)).astype(complex), trace, status)


# ---------------------------------------------------------------------------
# certification


@dataclass
class Certificate:
    """Residuals of the four equivalent characterisations of balanced metrics."""

    moment_norm: float
    bergman_oscillation: float
    fixed_point_gap: float
    max_ding_derivative: float
    tol: float
    balanced: bool

    def to_dict(self):
        return asdict(self)


def probe_directions(N: int):
    """Orthonormal basis of hermitian ``N x N`` matrices (Frobenius inner product)."""
    out = []
    for i in range(N):
        E = np.zeros((N, N), dtype=complex)
        E[i, i] = 1.0
        out.append(E)
    for i in range(N):
        for j in range(i + 1, N):
            S = np.zeros((N, N), dtype=complex)
            S[i, j] = S[j, i] = 1 / math.sqrt(2)
            out.append(S)
            T = np.zeros((N, N), dtype=complex)
            T[i, j], T[j, i] = 1j / math.sqrt(2), -1j / math.sqrt(2)
            out.append(T)
    return out


def certify(model: ManifoldModel, H, tol: float = 1e-8, probes=None) -> Certificate:
    """Evaluate every balanced-metric certificate at ``H``.

    (i) ``|N M - I|_F``; (ii) relative oscillation of ``rho_m``;
    (iii) ``|Hilb(FS(H)) - H|_F / |H|_F``; (iv) the largest ``|dD_m/ds|`` at
    ``s = 0`` along ``C e^{-2sB} C^*`` over unit probe directions ``B``
    (default: an orthonormal basis of hermitian matrices).
    """
    H = np.asarray(H, dtype=complex)
    N, m = model.N, model.m
    C = cholesky(H)
    d = fs_data(model, H)
    R = N * d.moment - np.eye(N)
    gap = C @ R @ C.conj().T
    probes = probe_directions(N) if probes is None else probes
    deriv = max(abs(2.0 / (m * N) * float(np.real(np.trace(B @ R)))) for B in probes)
    vals = (
        float(np.linalg.norm(R)),
        bergman_oscillation(model, H),
        float(np.linalg.norm(gap) / np.linalg.norm(H)),
        deriv,
    )
    return Certificate(*vals, tol=tol, balanced=all(v < tol for v in vals))
