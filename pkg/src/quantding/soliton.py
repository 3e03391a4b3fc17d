"""Torus-weighted (g-soliton) quantisation.

The basis splits into torus weight blocks ``R_lambda`` of size ``N_lambda``.
For a positive function ``g`` on the moment polytope,

* ``gbar = (1/N) sum_lambda g(lambda/m) N_lambda``,
* ``E^g_m(H) = -(1/(m N gbar)) sum_lambda g(lambda/m) log det H_lambda``,
* the g-balanced condition is ``M = T`` with per-index targets
  ``T_i = g(lambda_i/m) / (N gbar)``, normalised so that ``sum T_i = 1`` and
  ``g = 1`` gives the plain condition ``M = I/N``.

Weights are fed to ``g`` as ``lambda / m`` with ``lambda`` the model's torus
weights; any affine identification with the moment polytope belongs in ``g``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bergman import GeodesicGenerator, fs_data
from .hermitian import as_hermitian
from .model import ManifoldModel
from .slopes import slope_L
from .solver import SolveResult, SolverConfig, solve_moment_problem, weighted_energy

BLOCK_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class WeightDecomposition:
    """Torus weights per basis index and their blocks (weight -> indices)."""

    weights: np.ndarray
    m: int
    blocks: dict = field(init=False)

    def __post_init__(self):
        W = np.asarray(self.weights, dtype=int)
        if W.ndim == 1:
            W = W[:, None]
        blocks: dict = {}
        for i, lam in enumerate(map(tuple, W)):
            blocks.setdefault(lam, []).append(i)
        object.__setattr__(self, "weights", W)
        object.__setattr__(self, "blocks", {k: np.array(v) for k, v in sorted(blocks.items())})

    @property
    def N(self) -> int:
        return self.weights.shape[0]

    @property
    def rank(self) -> int:
        return self.weights.shape[1]

    @property
    def multiplicities(self) -> dict:
        return {k: len(v) for k, v in self.blocks.items()}

    def block_list(self) -> list:
        return list(self.blocks.values())

    def index_weights(self) -> np.ndarray:
        """``lambda_i / m`` per basis index, shape ``(N, rank)``."""
        return self.weights / self.m


def weight_decomposition(model: ManifoldModel, rank: int | None = None) -> WeightDecomposition:
    """Group the basis by torus weight.

    ``rank=0`` requests the trivial torus (one block of size ``N``); otherwise
    the model's ``torus_weights`` are used.
    """
    if rank == 0:
        return WeightDecomposition(np.zeros((model.N, 0), dtype=int), model.m)
    if model.torus_weights is None:
        raise ValueError("model carries no torus weights")
    return WeightDecomposition(model.torus_weights, model.m)


@dataclass(frozen=True)
class GFunction:
    """Positive weight function ``g`` on the moment polytope.

    Built-in kinds (``params`` in brackets):

    * ``constant`` [c]: ``c``
    * ``affine`` [a, b]: ``a + <b, x>``
    * ``exponential`` [b, shift]: ``exp(<b, x - shift>)``
    * ``quadratic`` [a, c, center]: ``a + c |x - center|^2``
    * ``tabulated`` [x, y]: piecewise-linear interpolation (rank one only)
    """

    kind: str = "constant"
    params: tuple = ()
    scale: float = 1.0

    def __call__(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        p = dict(self.params)
        if self.kind == "constant":
            out = np.full(len(x), float(p.get("c", 1.0)))
        elif self.kind == "affine":
            out = float(p.get("a", 1.0)) + x @ _vec(p.get("b", 0.0), x.shape[1])
        elif self.kind == "exponential":
            out = np.exp((x - _vec(p.get("shift", 0.0), x.shape[1])) @ _vec(p.get("b", 1.0), x.shape[1]))
        elif self.kind == "quadratic":
            d = x - _vec(p.get("center", 1.0), x.shape[1])
            out = float(p.get("a", 1.0)) + float(p.get("c", 1.0)) * np.sum(d * d, axis=1)
        elif self.kind == "tabulated":
            if x.shape[1] != 1:
                raise ValueError("tabulated g is only supported on rank-one tori")
            out = np.interp(x[:, 0], np.asarray(p["x"], float), np.asarray(p["y"], float))
        else:
            raise ValueError(f"unknown g kind {self.kind!r}")
        return self.scale * out

    @classmethod
    def make(cls, kind: str, **params) -> "GFunction":
        frozen = tuple(sorted((k, tuple(v) if isinstance(v, (list, np.ndarray)) else v) for k, v in params.items()))
        return cls(kind, frozen)

    def scaled(self, c: float) -> "GFunction":
        return GFunction(self.kind, self.params, self.scale * float(c))


def _vec(v, n):
    a = np.atleast_1d(np.asarray(v, dtype=float))
    return np.full(n, a[0]) if a.size == 1 else a


def g_values(g: GFunction, dec: WeightDecomposition) -> np.ndarray:
    """``g(lambda_i / m)`` per basis index; must be positive."""
    if dec.rank == 0:
        vals = np.asarray(g(np.zeros((dec.N, 1))), dtype=float)
    else:
        vals = np.asarray(g(dec.index_weights()), dtype=float)
    if np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise ValueError("g must be positive at every weight")
    return vals


def gbar(g: GFunction, dec: WeightDecomposition) -> float:
    """``(1/N) sum_lambda g(lambda/m) N_lambda``."""
    return float(np.mean(g_values(g, dec)))


def g_targets(g: GFunction, dec: WeightDecomposition) -> np.ndarray:
    """Per-index moment targets ``g(lambda_i/m) / (N gbar)``; they sum to one."""
    vals = g_values(g, dec)
    return vals / vals.sum()


def _check_blocks(H, dec, tol=BLOCK_TOL):
    H = np.asarray(H, dtype=complex)
    mask = np.ones(H.shape, dtype=bool)
    for idx in dec.blocks.values():
        mask[np.ix_(idx, idx)] = False
    off = float(np.abs(H[mask]).max()) if mask.any() else 0.0
    if off > tol * max(1.0, float(np.abs(H).max())):
        raise ValueError(f"form is not block diagonal for the weight decomposition (off-block {off:.2e})")


def functional_Egm(H, g: GFunction, dec: WeightDecomposition, m: int | None = None) -> float:
    """``E^g_m(H)``; equals ``E_m(H)`` for ``g = 1``."""
    H = as_hermitian(H, tol=1e-10)
    _check_blocks(H, dec)
    return weighted_energy(H, m or dec.m, g_targets(g, dec), dec.block_list())


def quantised_ding_g(model: ManifoldModel, H, g: GFunction, dec: WeightDecomposition) -> float:
    """``D^g_m(H) = L(FS(H)) - E^g_m(H)``."""
    return fs_data(model, H).L - functional_Egm(H, g, dec, model.m)


def g_moment_residual(model: ManifoldModel, H, g: GFunction, dec: WeightDecomposition):
    """``N (M - T)`` and its Frobenius norm; the plain moment residual for ``g = 1``."""
    _check_blocks(H, dec)
    R = model.N * (fs_data(model, H).moment - np.diag(g_targets(g, dec)))
    return R, float(np.linalg.norm(R))


def solve_g_balanced(
    model: ManifoldModel,
    g: GFunction,
    dec: WeightDecomposition,
    H_init,
    cfg: SolverConfig | None = None,
) -> SolveResult:
    """Critical point of ``D^g_m`` on block-diagonal forms."""
    cfg = cfg or SolverConfig()
    _check_blocks(H_init, dec)
    return solve_moment_problem(model, H_init, cfg, targets=g_targets(g, dec), blocks=dec.block_list())


def dgna_slope(model: ManifoldModel, gen: GeodesicGenerator, g: GFunction, dec: WeightDecomposition, schedule=None, **kw):
    """``slope_L(A) - (1/(m N gbar)) sum_lambda g(lambda/m) tr((A + A^*)|_lambda)``.

    Returns ``(value, gap)`` where ``gap`` is the ``slope_L`` sample gap.
    """
    _check_blocks(gen.A, dec)
    sL, gap = slope_L(model, gen, schedule, **kw)
    T = g_targets(g, dec)
    term = 2.0 / model.m * float(np.real(np.sum(T * np.diag(gen.A))))
    return sL - term, gap
