"""Discrete models of Fano manifolds with anticanonical section bases.

Two families are supported:

* ``projective-line``: X = P^1 with -mK = O(2m), binomial-weighted monomial
  basis, Gauss-Legendre nodes in the polar cosine times uniform angles.
* ``toric-1d`` / ``toric-2d``: a reflexive polytope P, basis indexed by the
  lattice points of mP, Gauss-Legendre nodes in logarithmic coordinates
  ``rho = log|z|^2`` on a truncated box times uniform angles.

Every model stores the basis values in a local frame normalised so that
``v(p)^* v(p) = 1`` at every node. With the reference form ``H_0 = I`` this is
the statement that the reference metric ``h_0`` is the Fubini-Study metric of
``H_0``, so all downstream formulas are chart free.

Toric structure is also recorded for P^1 (as the segment [-1, 1]); it is used
to build *torus-reduced* models, in which the angles are integrated out
analytically. Those only support torus-invariant (diagonal) forms and are what
make large-``t`` slope computations and long solver runs along torus orbits
tractable: their log-coordinate window is placed where the measure lives.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from itertools import combinations

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.optimize import minimize
from scipy.special import gammaln, logsumexp

from .hermitian import as_hermitian, cholesky, whiten
from .polytope import ReflexivePolytope, lattice_points, projective_line

TRUNCATION_MAX = 1e-8
TRUNCATION_TARGET = 1e-10


@dataclass(frozen=True, eq=False)
class QuadratureGrid:
    """Quadrature nodes in local coordinates.

    ``points`` are ``(x, psi)`` on the sphere model and ``(rho..., theta...)``
    on toric models; ``weights`` integrate against ``dx dpsi`` and
    ``drho (dtheta / 2pi)^n`` respectively.
    """

    points: np.ndarray
    weights: np.ndarray
    chart_id: np.ndarray

    def __post_init__(self):
        if np.any(self.weights <= 0):
            raise ValueError("quadrature weights must be positive")

    def __len__(self):
        return len(self.weights)


@dataclass(frozen=True, eq=False)
class ToricData:
    """Monomial structure: ``|v_u|^2 = c_u e^{<u, rho>} / S(rho)``.

    ``log_norm`` is the constant with
    ``dmu_0 = exp(-log S / m - log_norm) drho (dtheta/2pi)^n``.
    """

    polytope: ReflexivePolytope
    lattice: np.ndarray
    log_coeffs: np.ndarray
    log_norm: float
    rho: np.ndarray

    @cached_property
    def decay_rate(self) -> float:
        return decay_rate(self.polytope)


@dataclass(frozen=True, eq=False)
class ManifoldModel:
    """A discretised Fano manifold ``(X, -K_X)`` at level ``m``.

    Attributes
    ----------
    section_values : (P, N) complex
        Basis values in the normalised frame (``sum |v|^2 = 1`` per node).
    section_jets : tuple of arrays
        First ``(P, n, N)`` and second ``(P, n, n, N)`` holomorphic derivatives
        of the basis in chart coordinates, scaled by the same frame factor as
        ``section_values``. Toric models store ``None`` for the second jets
        and rebuild them on demand (see :meth:`second_jets`).
    ref_volume : (P,)
        Density of ``dmu_0`` against the quadrature weights; unit mass.
    ref_kahler : (P, n, n)
        Components of ``omega_0`` in chart coordinates.
    std_density : (P,)
        Density of the chart volume ``prod (i/2pi) dz ^ dzbar`` against the
        weights, so ``omega^n / n! = det(g) * std_density``.
    torus_averaged : bool
        True for torus-reduced models, whose integrals are angle averages and
        which only accept forms diagonal in the basis.
    log_amplitudes : (P, N) or None
        ``log |v_i|`` on torus-reduced models, so diagonal data can be formed
        in the log domain far out along torus orbits.
    """

    kind: str
    m: int
    n: int
    grid: QuadratureGrid
    section_values: np.ndarray
    section_jets: tuple
    ref_volume: np.ndarray
    ref_kahler: np.ndarray
    std_density: np.ndarray
    volume: float
    torus_weights: np.ndarray | None = None
    toric: ToricData | None = None
    torus_averaged: bool = False
    meta: dict = field(default_factory=dict)
    log_amplitudes: np.ndarray | None = None

    def __post_init__(self):
        v = self.section_values
        if np.any(np.linalg.norm(v, axis=1) == 0):
            raise ValueError("basis vanishes at a node")

    @property
    def N(self) -> int:
        return self.section_values.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    @cached_property
    def ref_mass(self) -> np.ndarray:
        """Density of ``omega_0^n / n!`` against the weights."""
        return np.real(_det(self.ref_kahler)) * self.std_density

    @cached_property
    def discrete_volume(self) -> float:
        """``int omega_0^n`` on this grid (``n!`` times the integral of ``ref_mass``)."""
        return math.factorial(self.n) * float(np.sum(self.weights * self.ref_mass))

    def second_jets(self) -> np.ndarray:
        d2 = self.section_jets[1]
        if d2 is None:
            U = self.toric.lattice.T.astype(float)
            d2 = (U[:, None, :] * U[None, :, :])[None] * self.section_values[:, None, None, :]
        return d2

    def identity(self) -> np.ndarray:
        return np.eye(self.N, dtype=complex)

    def summary(self) -> dict:
        """JSON-ready metadata: level, basis size, grid, normalisation, truncation."""
        out = {
            "kind": self.kind,
            "m": self.m,
            "n": self.n,
            "N": self.N,
            "grid_points": len(self.grid),
            "volume": self.volume,
            "discrete_volume": self.discrete_volume,
            "torus_averaged": self.torus_averaged,
        }
        out.update(self.meta)
        return out


@dataclass(frozen=True, eq=False)
class Potential:
    """A real function on the grid, optionally with its Kahler form ``omega_phi``.

    ``kahler`` holds the components of ``omega_phi`` in chart coordinates; it
    is present for Fubini-Study potentials and is carried along by shifts.
    """

    values: np.ndarray
    kahler: np.ndarray | None = None

    def __post_init__(self):
        if not np.all(np.isfinite(self.values)):
            raise ValueError("potential has non-finite values")

    def shift(self, c: float) -> "Potential":
        return Potential(self.values + c, self.kahler)

    @classmethod
    def constant(cls, model: ManifoldModel, c: float = 0.0) -> "Potential":
        return cls(np.full(len(model.grid), float(c)), model.ref_kahler)


def _det(g: np.ndarray) -> np.ndarray:
    if g.shape[-1] == 1:
        return g[..., 0, 0]
    return g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] * g[..., 1, 0]


def fs_kahler(w: np.ndarray, dw: np.ndarray, q: np.ndarray, m: int) -> np.ndarray:
    """Components of ``(1/m) i ddbar log |w|^2`` from whitened values and jets.

    ``w`` is ``(P, N)``, ``dw`` is ``(P, n, N)``, ``q = |w|^2``.
    """
    a = np.einsum("pki,pji->pjk", dw.conj(), dw)
    b = np.einsum("pi,pji->pj", w.conj(), dw)
    g = (a * q[:, None, None] - b[:, :, None] * b[:, None, :].conj()) / q[:, None, None] ** 2
    return g / m


def whitened_sections(model: ManifoldModel, H, jets: bool = False):
    """Return ``(w, dw, q)`` with ``w = C^{-1} v``, ``H = C C^*``, ``q = v^* H^{-1} v``.

    ``dw`` is ``None`` unless ``jets`` is set.
    """
    H = as_hermitian(H, tol=1e-10)
    if H.shape != (model.N, model.N):
        raise ValueError(f"form has shape {H.shape}, model has N = {model.N}")
    if model.torus_averaged:
        offdiag = H - np.diag(np.diag(H))
        if np.abs(offdiag).max() > 1e-10 * np.abs(H).max():
            raise ValueError("torus-reduced models only accept diagonal forms")
    C = cholesky(H)
    w = whiten(C, model.section_values)
    q = np.sum(np.abs(w) ** 2, axis=1)
    dw = whiten(C, model.section_jets[0]) if jets else None
    return w, dw, q


def eval_fs_potential(model: ManifoldModel, H) -> Potential:
    """Fubini-Study potential ``FS(H) = (1/m) log(v^* H^{-1} v / v^* v)``.

    Computed by whitening with the Cholesky factor of ``H``; the result does
    not depend on which ``H``-orthonormal basis is used.
    """
    w, dw, q = whitened_sections(model, H, jets=True)
    return Potential(np.log(q) / model.m, fs_kahler(w, dw, q, model.m))


# ---------------------------------------------------------------------------
# P^1


def build_p1_model(m: int, resolution: int, angles: int | None = None) -> ManifoldModel:
    """Model of ``P^1`` with ``-mK = O(2m)`` and ``N = 2m + 1``.

    Nodes are ``resolution`` Gauss-Legendre points in ``x = cos(theta)`` times
    ``angles`` (default ``2 * resolution``) uniform azimuths. With
    ``resolution >= 2m + 2`` the rule is exact for polynomials in ``x`` of
    degree ``4m + 3``, which covers every Gram integral at ``H_0``.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    if resolution < 2 * m + 2:
        raise ValueError(f"resolution {resolution} below exactness threshold {2 * m + 2}")
    angles = 2 * resolution if angles is None else angles
    if angles < 2 * m + 2:
        raise ValueError(f"angles {angles} below exactness threshold {2 * m + 2}")
    N = 2 * m + 1
    k = np.arange(N)
    log_binom = gammaln(2 * m + 1) - gammaln(k + 1) - gammaln(2 * m - k + 1)
    sq = np.exp(0.5 * log_binom)

    x, wx = leggauss(resolution)
    psi = 2 * np.pi * (np.arange(angles) + 0.5) / angles
    X, PSI = np.meshgrid(x, psi, indexing="ij")
    X, PSI = X.ravel(), PSI.ravel()
    weights = np.repeat(wx, angles) * (2 * np.pi / angles)
    north = X >= 0
    # chart 0: z with |z| <= 1; chart 1: zeta = 1/z with |zeta| < 1
    r = np.where(north, np.sqrt((1 - X) / (1 + X)), np.sqrt((1 + X) / (1 - X)))
    phase = np.where(north, 1.0, -1.0) * PSI
    coord = r * np.exp(1j * phase)
    power = np.where(north[:, None], k[None, :], 2 * m - k[None, :])

    def mono(p):
        # coord**p with zero for negative powers (derivatives of constants)
        safe = np.where(p >= 0, p, 0)
        return np.where(p >= 0, coord[:, None] ** safe, 0.0)

    norm = (1 + r**2) ** m
    f = sq * mono(power) / norm[:, None]
    df = sq * power * mono(power - 1) / norm[:, None]
    d2f = sq * power * (power - 1) * mono(power - 2) / norm[:, None]

    std = np.where(north, 1.0 / (np.pi * (1 + X) ** 2), 1.0 / (np.pi * (1 - X) ** 2))
    ref_volume = np.full(len(X), 1.0 / (4 * np.pi))
    total = float(np.sum(weights * ref_volume))
    ref_volume = ref_volume / total

    q = np.sum(np.abs(f) ** 2, axis=1)
    g0 = fs_kahler(f, df[:, None, :], q, m)
    rho = np.log((1 - X) / (1 + X))[:, None]
    toric = ToricData(
        polytope=projective_line(),
        lattice=(k - m)[:, None],
        log_coeffs=log_binom,
        log_norm=0.0,
        rho=rho,
    )
    grid = QuadratureGrid(np.column_stack([X, PSI]), weights, np.where(north, 0, 1))
    meta = {
        "resolution": resolution,
        "angles": angles,
        "exactness_degree": 2 * resolution - 1,
        "ref_volume_rescale": total,
        "truncation_error": 0.0,
    }
    return ManifoldModel(
        kind="projective-line",
        m=m,
        n=1,
        grid=grid,
        section_values=f,
        section_jets=(df[:, None, :], d2f[:, None, None, :]),
        ref_volume=ref_volume,
        ref_kahler=g0,
        std_density=std,
        volume=2.0,
        torus_weights=k[:, None],
        toric=toric,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# toric


def decay_rate(P: ReflexivePolytope) -> float:
    """``min h_P(d)`` over ``|d|_inf = 1``, with ``h_P`` the support function.

    ``exp(-h_P(rho))`` bounds the reference density, so this is the
    exponential decay rate used for truncation estimates.
    """
    verts = np.array(P.vertices, dtype=float)
    if P.rank == 1:
        return float(min(verts.max(), -verts.min()))
    cands = []
    for fixed_axis in (0, 1):
        for sign in (-1.0, 1.0):
            ss = [-1.0, 1.0]
            for a, b in combinations(range(len(verts)), 2):
                diff = verts[a] - verts[b]
                free = 1 - fixed_axis
                if diff[free] != 0:
                    s = -sign * diff[fixed_axis] / diff[free]
                    if -1 <= s <= 1:
                        ss.append(s)
            for s in ss:
                d = np.zeros(2)
                d[fixed_axis], d[1 - fixed_axis] = sign, s
                cands.append(np.max(verts @ d))
    return float(min(cands))


def truncation_bound(P: ReflexivePolytope, R: float, log_norm: float, log_cmin: float, m: int) -> float:
    """Upper bound for the ``dmu_0`` mass outside ``[-R, R]^n``."""
    kappa = decay_rate(P)
    pref = math.exp(-log_cmin / m - log_norm)
    if P.rank == 1:
        return pref * 2 * math.exp(-kappa * R) / kappa
    return pref * 8 * math.exp(-kappa * R) * (R / kappa + 1 / kappa**2)


def _toric_values(lattice, log_coeffs, rho, theta, m):
    """Frame-normalised values, first jets, and ``log S`` at nodes."""
    U = lattice.astype(float)
    expo = log_coeffs[None, :] + rho @ U.T
    logS = logsumexp(expo, axis=1)
    amp = np.exp(0.5 * (expo - logS[:, None]))
    if theta is None:
        v = amp.astype(complex)
    else:
        v = amp * np.exp(1j * (theta @ U.T))
    d1 = U.T[None, :, :] * v[:, None, :]
    return v, d1, logS


def _gauss_box(lo, hi, nodes):
    """Tensor Gauss-Legendre rule on a box; ``nodes`` per axis."""
    x, w = leggauss(nodes)
    axes, wts = [], []
    for a, b in zip(lo, hi):
        axes.append(0.5 * (b - a) * x + 0.5 * (b + a))
        wts.append(0.5 * (b - a) * w)
    return _tensor(axes, wts)


def _graded_axis(lo, hi, pad, h0, grow, order):
    """Composite Gauss-Legendre nodes on ``[lo - pad, hi + pad]``.

    Panels have width ``h0`` on the core ``[lo, hi]`` and widen linearly,
    ``h0 (1 + r / grow)`` at distance ``r``, in the padding where integrands
    decay exponentially.
    """
    x, w = leggauss(order)
    k = max(1, int(math.ceil((hi - lo) / h0)))
    core = list(np.linspace(lo, hi, k + 1))
    out = [0.0]
    while out[-1] < pad:
        out.append(out[-1] + h0 * (1 + out[-1] / grow))
    tail = np.array(out[1:])
    edges = np.concatenate([lo - tail[::-1], core, hi + tail])
    mid = 0.5 * (edges[1:] + edges[:-1])
    h = np.diff(edges)
    return (mid[:, None] + 0.5 * h[:, None] * x).ravel(), (0.5 * h[:, None] * w).ravel()


def _tensor(axes, wts):
    mesh = np.meshgrid(*axes, indexing="ij")
    wmesh = np.meshgrid(*wts, indexing="ij")
    pts = np.column_stack([g.ravel() for g in mesh])
    w = np.prod(np.column_stack([g.ravel() for g in wmesh]), axis=1)
    return pts, w


def build_toric_model(
    P: ReflexivePolytope,
    m: int,
    resolution: int | None = None,
    truncation: float | None = None,
    angles: int | None = None,
    coefficients=None,
) -> ManifoldModel:
    """Toric model: basis ``{z^u : u in mP ∩ M}`` with ``|s_u|^2_{h_0} = c_u |z^u|^2 / S``.

    Parameters
    ----------
    P
        Reflexive polytope of rank 1 or 2.
    resolution
        Gauss-Legendre nodes per log-coordinate axis on ``[-R, R]``; default
        192 in rank 1 and 96 in rank 2 (volume error about 1e-4 at R = 29).
    truncation
        The half-width ``R``. By default the smallest integer with estimated
        truncated mass below ``1e-10``.
    angles
        Uniform angles per torus factor; default ``width(mP) + 2`` which
        integrates every Gram entry at ``H_0`` exactly.
    coefficients
        Optional mapping from lattice point to ``c_u > 0`` (default all 1).
    """
    if not isinstance(P, ReflexivePolytope):
        P = ReflexivePolytope(tuple(P))
    n = P.rank
    if m < 1:
        raise ValueError("m must be a positive integer")
    pts = lattice_points(P, m)
    lattice = np.array(pts, dtype=int)
    N = len(pts)
    if coefficients is None:
        log_c = np.zeros(N)
    else:
        log_c = np.log(np.array([float(coefficients[tuple(u)]) for u in pts]))
    widths = lattice.max(axis=0) - lattice.min(axis=0)
    angles = int(widths.max()) + 2 if angles is None else angles
    if angles <= widths.max():
        raise ValueError("too few angles to resolve the monomial basis")

    # log_norm estimated on a generous box first, then used for the bound
    kappa = decay_rate(P)
    probe_R = 40.0 / kappa
    rp, wp = _gauss_box([-probe_R] * n, [probe_R] * n, 200 if n == 1 else 120)
    log_norm_est = float(logsumexp(-logsumexp(log_c[None, :] + rp @ lattice.T, axis=1) / m, b=wp))
    if truncation is None:
        R = 4.0
        while truncation_bound(P, R, log_norm_est, log_c.min(), m) > TRUNCATION_TARGET:
            R += 1.0
    else:
        R = float(truncation)
    bound = truncation_bound(P, R, log_norm_est, log_c.min(), m)
    if bound > TRUNCATION_MAX:
        raise ValueError(f"truncation error estimate {bound:.2e} exceeds {TRUNCATION_MAX:.0e}")

    if resolution is None:
        resolution = 192 if n == 1 else 96
    rho_pts, rho_w = _gauss_box([-R] * n, [R] * n, resolution)
    th = 2 * np.pi * (np.arange(angles) + 0.5) / angles
    th_pts, _ = _tensor([th] * n, [np.ones(angles)] * n)
    P_r, P_t = len(rho_w), len(th_pts)
    rho = np.repeat(rho_pts, P_t, axis=0)
    theta = np.tile(th_pts, (P_r, 1))
    weights = np.repeat(rho_w, P_t) / P_t

    v, d1, logS = _toric_values(lattice, log_c, rho, theta, m)
    dens = np.exp(-logS / m)
    Z = float(np.sum(weights * dens))
    toric = ToricData(P, lattice, log_c, math.log(Z), rho)
    g0 = fs_kahler(v, d1, np.ones(len(v)), m)
    grid = QuadratureGrid(np.column_stack([rho, theta]), weights, np.zeros(len(weights), dtype=int))
    umin = np.array([min(vx[i] for vx in P.vertices) for i in range(n)])
    meta = {
        "resolution": resolution,
        "angles": angles,
        "truncation_R": R,
        "truncation_error": bound,
        "ref_volume_rescale": Z,
    }
    return ManifoldModel(
        kind=f"toric-{n}d",
        m=m,
        n=n,
        grid=grid,
        section_values=v,
        section_jets=(d1, None),
        ref_volume=dens / Z,
        ref_kahler=g0,
        std_density=np.ones(len(weights)),
        volume=float(math.factorial(n) * P.volume()),
        torus_weights=lattice - m * umin[None, :],
        toric=toric,
        meta=meta,
    )


# ---------------------------------------------------------------------------
# torus reduction


def _tropical_vertices(U: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Corner points of ``rho -> max_u (b_u + <u, rho>)``."""
    n = U.shape[1]
    out = []
    scale = 1e-9 * (1 + np.abs(b).max())
    for idx in combinations(range(len(b)), n + 1):
        idx = list(idx)
        D = U[idx[1:]] - U[idx[0]]
        if abs(np.linalg.det(D)) < 0.5:
            continue
        rho = np.linalg.solve(D, b[idx[0]] - b[idx[1:]])
        val = b[idx[0]] + U[idx[0]] @ rho
        if val >= np.max(b + U @ rho) - scale:
            out.append(rho)
    return np.array(out).reshape(-1, n)


def reduction_window(model: ManifoldModel, log_hinv: np.ndarray):
    """Core box in log coordinates for the measures of ``FS(diag(h))``.

    ``log_hinv`` is ``log`` of the diagonal of ``H^{-1}``. The box is the
    bounding box of the minimiser of the potential's log-density and every
    corner of its tropical limit; outside it the measures decay at least like
    ``exp(-kappa * distance)``.
    """
    tor = model.toric
    U = tor.lattice.astype(float)
    b = tor.log_coeffs + np.asarray(log_hinv, dtype=float)
    b = b - b.max()

    def psi(r):
        e = b + U @ r
        s = logsumexp(e)
        p = np.exp(e - s)
        return s / model.m, (p @ U) / model.m

    res = minimize(psi, np.zeros(U.shape[1]), jac=True, method="BFGS", options={"gtol": 1e-10})
    corners = np.vstack([_tropical_vertices(U, b), res.x[None, :]])
    return corners.min(axis=0), corners.max(axis=0)


def torus_reduced_model(
    model: ManifoldModel,
    lo,
    hi,
    margin: float = 34.0,
    panel: float = 1.0,
    grow: float = 5.0,
    order: int = 12,
) -> ManifoldModel:
    """Angle-averaged model on the box ``[lo, hi]`` padded by ``margin / kappa``.

    Integrals over the torus fibres are done analytically, so only forms
    diagonal in the monomial basis are accepted. Normalisation of ``dmu_0``
    is inherited from ``model`` so values are comparable across windows.
    With the defaults, integrals of the Fubini-Study data agree with a
    four-times finer rule to about ``1e-12``.
    """
    tor = model.toric
    if tor is None:
        raise ValueError("model has no toric structure")
    m = model.m
    U = tor.lattice
    lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
    pad = margin / tor.decay_rate
    axes, wts = zip(*(_graded_axis(a, b, pad, panel, grow, order) for a, b in zip(lo, hi)))
    rho, w = _tensor(list(axes), list(wts))
    v, d1, logS = _toric_values(U, tor.log_coeffs, rho, None, m)
    log_amp = 0.5 * (tor.log_coeffs[None, :] + rho @ U.T - logS[:, None])
    dens = np.exp(-logS / m - tor.log_norm)
    g0 = fs_kahler(v, d1, np.ones(len(v)), m)
    sub = ToricData(tor.polytope, U, tor.log_coeffs, tor.log_norm, rho)
    meta = {
        "window_lo": [float(x) for x in lo],
        "window_hi": [float(x) for x in hi],
        "window_pad": pad,
        "panel": panel,
        "order": order,
    }
    return ManifoldModel(
        kind=model.kind + "-reduced",
        m=m,
        n=model.n,
        grid=QuadratureGrid(rho, w, np.zeros(len(w), dtype=int)),
        section_values=v.astype(complex),
        section_jets=(d1.astype(complex), None),
        ref_volume=dens,
        ref_kahler=g0,
        std_density=np.ones(len(w)),
        volume=model.volume,
        torus_weights=model.torus_weights,
        toric=sub,
        torus_averaged=True,
        meta=meta,
        log_amplitudes=log_amp,
    )


def reduced_model_for(model: ManifoldModel, log_h, **kw) -> ManifoldModel:
    """Torus-reduced model adapted to ``H = diag(exp(log_h))``."""
    lo, hi = reduction_window(model, -np.asarray(log_h, dtype=float))
    return torus_reduced_model(model, lo, hi, **kw)
