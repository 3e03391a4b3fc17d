"""Asymptotic slopes of L, E and D_m along Bergman geodesic rays.

For a hermitian generator ``A`` and ``H_t = e^{-2tA}``:

* ``dL/dt = (2/m) tr(A M_t)`` (``M_t`` the moment matrix of ``H_t``),
* ``dE/dt = int (dphi_t/dt) omega_t^n / int omega_t^n``,
* ``dE_m/dt = 2 tr(A) / (m N)``.

Both derivatives are non-decreasing in ``t`` (convexity), and their limits
give the Ding invariant ``slope_L - slope_E`` and the Chow weight
``slope_E - 2 tr(A)/(mN)`` of the associated test configuration. Their sum,
``f_invariant``, is the asymptotic slope of ``D_m``.

Diagonal generators on models with toric structure are evaluated on
torus-reduced quadrature placed where the measures of ``FS(H_t)`` live, which
keeps large ``t`` accurate; other generators use the model grid as is.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .bergman import E_derivative, GeodesicGenerator, L_derivative, geodesic_data
from .model import ManifoldModel, _det, reduced_model_for

GAP_TOL = 1e-5
MONOTONE_TOL = 1e-8


class SlopeError(RuntimeError):
    """Derivative samples violate convexity beyond tolerance."""


def default_schedule(m: int, t0: float = 1.0, t_max: float | None = None) -> list[float]:
    """Doubling schedule ``t0, 2 t0, ...`` up to ``t_max`` (default ``160/m``)."""
    t_max = 160.0 / m if t_max is None else t_max
    out = [float(t0)]
    while 2 * out[-1] <= t_max:
        out.append(2 * out[-1])
    return out


@dataclass
class SlopeSample:
    t: float
    dL: float
    dE: float
    volume_ratio: float


@dataclass
class SlopeReport:
    """Slope data of a generator. ``gap`` is the larger of the two final sample gaps."""

    slope_L: float
    slope_E: float
    ding_numeric: float
    chow_numeric: float
    f_invariant: float
    trace_term: float
    gap_L: float
    gap_E: float
    gap: float
    t_schedule: list
    overflow_shift: float
    reduced: bool
    samples: list = field(default_factory=list)

    def to_dict(self):
        return asdict(self)

    def samples_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["t", "dL_dt", "dE_dt"])
        for s in self.samples:
            wr.writerow([repr(s.t), repr(s.dL), repr(s.dE)])
        return buf.getvalue()


def _uses_reduction(model, gen, reduce):
    ok = model.toric is not None and gen.is_diagonal and not model.torus_averaged
    if reduce is None:
        return ok
    if reduce and not ok:
        raise ValueError("torus reduction needs a diagonal generator and a toric model")
    return reduce


def _sample(model, gen, t, reduce, want_E=True) -> SlopeSample:
    sub = model
    if reduce:
        lam = np.real(np.diag(gen.A))
        sub = reduced_model_for(model, -2 * t * lam)
    dL = L_derivative(sub, gen, t)
    dE, ratio = np.nan, np.nan
    if want_E:
        dE = E_derivative(sub, gen, t)
        ratio = _volume_ratio(sub, gen, t)
    return SlopeSample(float(t), float(dL), float(dE), ratio)


def _volume_ratio(sub, gen, t):
    g = geodesic_data(sub, gen, t, jets=True).kahler
    dens = _det(g).real if sub.n == 2 else g[:, 0, 0].real
    total = float(np.sum(dens * sub.std_density * sub.weights))
    return total * math.factorial(sub.n) / sub.volume


def _run(model, gen, schedule, reduce, want_E, tol):
    if gen.N != model.N:
        raise ValueError(f"generator has size {gen.N}, model has N = {model.N}")
    reduce = _uses_reduction(model, gen, reduce)
    adaptive = schedule is None
    schedule = default_schedule(model.m) if adaptive else [float(t) for t in schedule]
    if any(b <= a for a, b in zip(schedule, schedule[1:])) or schedule[0] < 0:
        raise ValueError("schedule must be increasing and non-negative")
    samples = []
    for t in schedule:
        samples.append(_sample(model, gen, t, reduce, want_E))
        if adaptive and len(samples) >= 2:
            a, b = samples[-2], samples[-1]
            gap = abs(b.dL - a.dL)
            if want_E:
                gap = max(gap, abs(b.dE - a.dE))
            if gap < tol:
                break
    _check_monotone([s.dL for s in samples], "dL/dt")
    if want_E:
        _check_monotone([s.dE for s in samples], "dE/dt")
    return samples, reduce


def _check_monotone(vals, name):
    d = np.diff(vals)
    if d.size and d.min() < -MONOTONE_TOL * max(1.0, np.abs(vals).max()):
        raise SlopeError(f"{name} samples decrease by {-d.min():.2e}: quadrature breakdown at large t")


def _gap(vals):
    return float(abs(vals[-1] - vals[-2])) if len(vals) > 1 else float("inf")


def slope_L(model: ManifoldModel, gen: GeodesicGenerator, schedule=None, reduce=None, tol: float = GAP_TOL):
    """``d/dt L(FS(H_t))`` at the last scheduled ``t``, with the last sample gap."""
    samples, _ = _run(model, gen, schedule, reduce, False, tol)
    vals = [s.dL for s in samples]
    return vals[-1], _gap(vals)


def slope_E(model: ManifoldModel, gen: GeodesicGenerator, schedule=None, reduce=None, tol: float = GAP_TOL):
    """``d/dt E(FS(H_t))`` at the last scheduled ``t``, with the last sample gap."""
    samples, _ = _run(model, gen, schedule, reduce, True, tol)
    vals = [s.dE for s in samples]
    return vals[-1], _gap(vals)


def f_invariant(
    model: ManifoldModel,
    gen: GeodesicGenerator,
    schedule=None,
    reduce=None,
    tol: float = GAP_TOL,
) -> SlopeReport:
    """Ding and Chow slopes of ``gen`` and their sum.

    With ``schedule=None`` the doubling schedule stops once both derivative
    gaps drop below ``tol`` or ``t`` passes ``160/m``; the final gap is
    reported either way.
    """
    samples, reduced = _run(model, gen, schedule, reduce, True, tol)
    sL, sE = samples[-1].dL, samples[-1].dE
    trace_term = 2 * gen.trace / (model.m * model.N)
    gap_L, gap_E = _gap([s.dL for s in samples]), _gap([s.dE for s in samples])
    ding = sL - sE
    chow = sE - trace_term
    return SlopeReport(
        slope_L=sL,
        slope_E=sE,
        ding_numeric=ding,
        chow_numeric=chow,
        f_invariant=ding + chow,
        trace_term=trace_term,
        gap_L=gap_L,
        gap_E=gap_E,
        gap=max(gap_L, gap_E),
        t_schedule=[s.t for s in samples],
        overflow_shift=float(gen.eig[0].max()),
        reduced=bool(reduced),
        samples=samples,
    )
