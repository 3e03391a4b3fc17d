"""Toric delta_m-type invariants by exact lattice counting.

For a primitive ``v`` in the cocharacter lattice and a lattice point ``u`` of
``mP`` the vanishing order of the monomial ``u`` along the toric valuation
``v`` is

    ord_v(u) = <u, v> - m min_{P} <., v>,

so ``S_m(v) = (1/(m N_m)) sum_u ord_v(u)``. The log discrepancy ``A(v)`` is the
piecewise-linear function on the normal fan equal to 1 on every primitive ray.
Everything is exact (``Fraction``) unless ``g`` returns floats.

The minimum of ``A/S_m`` over a finite candidate set is only an upper bound
for the infimum over all toric valuations, and results say so.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

from .polytope import PolytopeError, ReflexivePolytope, _convex_hull_2d, _dot, _primitive, is_primitive

BOUND_LABEL = "toric upper bound"


def _check_v(v, rank) -> tuple:
    v = tuple(int(x) for x in v)
    if len(v) != rank:
        raise PolytopeError(f"valuation has rank {len(v)}, polytope has rank {rank}")
    if not is_primitive(v):
        raise PolytopeError(f"valuation {v} is not primitive")
    return v


@dataclass(frozen=True)
class LatticePolygon:
    """Lattice polytope of rank 1 or 2 given by vertices, no reflexivity required.

    Used for the factor polytopes ``P_i`` of a splitting ``-K = sum L_i``.
    """

    vertices: tuple
    halfspaces: tuple = field(init=False)

    def __post_init__(self):
        verts = [tuple(int(x) for x in v) for v in self.vertices]
        if not verts:
            raise PolytopeError("empty vertex list")
        n = len(verts[0])
        if any(len(v) != n for v in verts):
            raise PolytopeError("mismatched vertex dimensions")
        if n == 1:
            lo, hi = min(v[0] for v in verts), max(v[0] for v in verts)
            verts = [(lo,), (hi,)]
            hs = [((1,), lo), ((-1,), -hi)]
        elif n == 2:
            verts = _convex_hull_2d(verts)
            if len(verts) < 3:
                raise PolytopeError("polygon is degenerate")
            hs = []
            for a, b in zip(verts, verts[1:] + verts[:1]):
                nrm = _primitive((a[1] - b[1], b[0] - a[0]))
                hs.append((nrm, _dot(a, nrm)))
        else:
            raise PolytopeError(f"rank {n} polytopes are not supported")
        object.__setattr__(self, "vertices", tuple(verts))
        object.__setattr__(self, "halfspaces", tuple(hs))

    @property
    def rank(self) -> int:
        return len(self.vertices[0])

    def support_min(self, v) -> int:
        return min(_dot(u, v) for u in self.vertices)

    def lattice_points(self, m: int = 1) -> list:
        if m < 0:
            raise ValueError("m must be non-negative")
        lo = [m * min(v[i] for v in self.vertices) for i in range(self.rank)]
        hi = [m * max(v[i] for v in self.vertices) for i in range(self.rank)]
        return [u for u in itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi)))
                if all(_dot(u, nrm) >= m * c for nrm, c in self.halfspaces)]


def _as_polytope(P):
    if isinstance(P, (ReflexivePolytope, LatticePolygon)):
        return P
    return LatticePolygon(tuple(tuple(v) for v in P))


def ord_v(P, m: int, v, u) -> int:
    """Vanishing order of the monomial ``u`` of ``mP`` along ``v``."""
    return _dot(u, v) - m * P.support_min(v)


def orders(P, m: int, v) -> list[int]:
    P = _as_polytope(P)
    v = _check_v(v, P.rank)
    return [ord_v(P, m, v, u) for u in P.lattice_points(m)]


def s_m(P, m: int, v) -> Fraction:
    """``S_m(v) = (1/(m N_m)) sum_{u in mP} ord_v(u)``, exact."""
    if m < 1:
        raise ValueError("m must be positive")
    o = orders(P, m, v)
    return Fraction(sum(o), m * len(o))


def filtration_dims(P, m: int, v) -> list[int]:
    """``dim F^{>=j}`` for ``j = 1, 2, ...`` until it vanishes."""
    o = orders(P, m, v)
    out, j = [], 1
    while True:
        c = sum(1 for x in o if x >= j)
        if c == 0:
            return out
        out.append(c)
        j += 1


def log_discrepancy(P: ReflexivePolytope, v) -> tuple[Fraction, tuple]:
    """``A(v)``: the fan-PL function with value 1 on rays, and the cone used."""
    v = tuple(int(x) for x in v)
    if not any(v):
        raise PolytopeError("the zero vector is not a valuation")
    cone, coeffs = P.cone_containing(v)
    return sum(coeffs, Fraction(0)), cone


def candidate_valuations(P: ReflexivePolytope, bound: int = 3) -> list[tuple]:
    """Fan rays plus all primitive vectors of sup-norm at most ``bound``."""
    rays = [tuple(r) for r in P.normals]
    box = [v for v in itertools.product(range(-bound, bound + 1), repeat=P.rank) if is_primitive(v)]
    seen, out = set(), []
    for v in rays + sorted(box):
        if v not in seen:
            seen.add(v)
            out.append(v)
    return out


@dataclass
class DeltaResult:
    """Minimum of ``A/S_m`` over candidates with the rows it was taken over."""

    m: int
    ratio: Fraction
    argmin: tuple
    rows: list
    label: str = BOUND_LABEL

    def to_dict(self):
        return {
            "m": self.m,
            "ratio": str(self.ratio),
            "ratio_float": float(self.ratio),
            "argmin": list(self.argmin),
            "label": self.label,
            "candidates": len(self.rows),
        }


def delta_m_toric(P: ReflexivePolytope, m: int, candidates=None, bound: int = 3) -> DeltaResult:
    """``min A(v)/S_m(v)`` over ``candidates`` (default :func:`candidate_valuations`).

    Ties are broken by candidate order, so rays win over interior vectors.
    Each row is ``(v, A, S_m, ratio, cone)``.
    """
    cands = candidate_valuations(P, bound) if candidates is None else [_check_v(v, P.rank) for v in candidates]
    if not cands:
        raise ValueError("empty candidate set")
    rows = []
    for v in cands:
        A, cone = log_discrepancy(P, v)
        S = s_m(P, m, v)
        rows.append((v, A, S, A / S, cone))
    best = min(rows, key=lambda r: r[3])
    return DeltaResult(m, best[3], best[0], rows)


def s_m_weighted(P, m: int, v, g: Callable, torus: Sequence[Sequence[int]] | None = None):
    """Torus-weighted ``S^g_m(v)``.

    ``torus`` is an integer ``r x n`` matrix selecting a subtorus; the weight
    of the monomial ``u`` is ``lambda = torus @ u`` (default: the full torus,
    ``lambda = u``). Per weight fiber ``R_{m,lambda}`` the filtration
    dimensions are counted directly, then

        S^g_m = (1/(m N_m gbar_m)) sum_lambda g(lambda/m) sum_a dim F^{>=a} R_{m,lambda}.

    Exact when ``g`` returns ints or Fractions on Fraction input.
    """
    P = _as_polytope(P)
    v = _check_v(v, P.rank)
    pts = P.lattice_points(m)
    T = [list(row) for row in torus] if torus is not None else [[int(i == j) for j in range(P.rank)] for i in range(P.rank)]
    fibers: dict = {}
    for u in pts:
        lam = tuple(_dot(row, u) for row in T)
        fibers.setdefault(lam, []).append(ord_v(P, m, v, u))
    N = len(pts)
    if sum(len(f) for f in fibers.values()) != N:  # pragma: no cover - partition by construction
        raise AssertionError("weight fibers do not partition the basis")
    total, gsum = 0, 0
    for lam, o in fibers.items():
        x = tuple(Fraction(l, m) for l in lam)
        gv = g(x[0] if len(x) == 1 else x)
        if gv <= 0:
            raise ValueError("g must be positive on the polytope")
        gsum += gv * len(o)
        # sum_a dim F^{>=a} on the fiber equals sum of orders there
        total += gv * sum(sum(1 for x in o if x >= j) for j in range(1, max(o, default=0) + 1))
    if isinstance(total, (int, Fraction)) and isinstance(gsum, (int, Fraction)):
        return Fraction(total) / (m * gsum)
    return total / (m * gsum)


def weight_multiplicities(P, m: int, torus=None) -> dict:
    """``N_{m,lambda}`` per weight; the values sum to ``N_m``."""
    P = _as_polytope(P)
    T = [list(row) for row in torus] if torus is not None else [[int(i == j) for j in range(P.rank)] for i in range(P.rank)]
    out: dict = {}
    for u in P.lattice_points(m):
        lam = tuple(_dot(row, u) for row in T)
        out[lam] = out.get(lam, 0) + 1
    return dict(sorted(out.items()))


def s_m_coupled(factors: Sequence, m: int, v) -> list[Fraction]:
    """``S_m(L_i; v)`` for each factor polytope ``P_i``."""
    facs = [_as_polytope(F) for F in factors]
    if not facs:
        raise ValueError("need at least one factor")
    ranks = {F.rank for F in facs}
    if len(ranks) != 1:
        raise PolytopeError(f"factor polytopes have mismatched ranks {sorted(ranks)}")
    return [s_m(F, m, v) for F in facs]


def coupled_ratio(P: ReflexivePolytope, factors: Sequence, m: int, v) -> Fraction:
    """``A(v) / sum_i S_m(L_i; v)``; ``A`` is taken on the fan of ``P``."""
    S = s_m_coupled(factors, m, v)
    if P.rank != _as_polytope(factors[0]).rank:
        raise PolytopeError("factor polytopes and P have different ranks")
    return log_discrepancy(P, v)[0] / sum(S, Fraction(0))
