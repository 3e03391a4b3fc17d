"""Reflexive lattice polytopes in rank 1 and 2, with their normal fans.

All data here is exact: vertices, facet normals and lattice points are Python
integers, and cone decompositions use :class:`fractions.Fraction`.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

Vector = tuple[int, ...]


class PolytopeError(ValueError):
    """Raised for polytopes that are not reflexive or otherwise malformed."""


def _dot(a: Sequence[int], b: Sequence[int]) -> int:
    return sum(x * y for x, y in zip(a, b))


def _primitive(v: Sequence[int]) -> Vector:
    g = 0
    for x in v:
        g = math.gcd(g, abs(x))
    if g == 0:
        raise PolytopeError("zero vector has no primitive direction")
    return tuple(x // g for x in v)


def is_primitive(v: Sequence[int]) -> bool:
    if not any(v):
        return False
    g = 0
    for x in v:
        g = math.gcd(g, abs(int(x)))
    return g == 1


def _convex_hull_2d(points: Iterable[Vector]) -> list[Vector]:
    # Andrew's monotone chain, counter-clockwise, collinear points dropped.
    pts = sorted(set(points))
    if len(pts) < 3:
        return pts

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower: list[Vector] = []
    for p in pts:
        while len(lower) >= 2 and cross(lower[-2], lower[-1], p) <= 0:
            lower.pop()
        lower.append(p)
    upper: list[Vector] = []
    for p in reversed(pts):
        while len(upper) >= 2 and cross(upper[-2], upper[-1], p) <= 0:
            upper.pop()
        upper.append(p)
    return lower[:-1] + upper[:-1]


@dataclass(frozen=True)
class ReflexivePolytope:
    """A reflexive lattice polytope ``P = {u : <u, v_F> >= -1 for all facets F}``.

    Parameters
    ----------
    vertices
        Integer vertices. In rank 2 they are reordered counter-clockwise.

    Attributes
    ----------
    normals
        Primitive inward facet normals ``v_F``; these are the rays of the
        normal fan, i.e. the toric prime divisors.
    """

    vertices: tuple[Vector, ...]
    normals: tuple[Vector, ...] = field(init=False)
    name: str = ""

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
            normals = [(1,), (-1,)]
            consts = [lo, -hi]
        elif n == 2:
            verts = _convex_hull_2d(verts)
            if len(verts) < 3:
                raise PolytopeError("polygon is degenerate")
            normals, consts = [], []
            for a, b in zip(verts, verts[1:] + verts[:1]):
                edge = (b[0] - a[0], b[1] - a[1])
                # inward normal of a ccw edge
                nrm = _primitive((-edge[1], edge[0]))
                normals.append(nrm)
                consts.append(_dot(a, nrm))
        else:
            raise PolytopeError(f"rank {n} polytopes are not supported")
        for c in consts:
            if c >= 0:
                raise PolytopeError("origin is not strictly interior")
            if c != -1:
                raise PolytopeError(f"facet constant {c} != -1: polytope is not reflexive")
        object.__setattr__(self, "vertices", tuple(verts))
        object.__setattr__(self, "normals", tuple(normals))

    @property
    def rank(self) -> int:
        return len(self.vertices[0])

    def support_min(self, v: Sequence[int]) -> int:
        """``min_{u in P} <u, v>``, attained at a vertex."""
        return min(_dot(u, v) for u in self.vertices)

    def support_max(self, v: Sequence[float]) -> float:
        return max(_dot(u, v) for u in self.vertices)

    def lattice_points(self, m: int = 1) -> list[Vector]:
        return lattice_points(self, m)

    def volume(self) -> Fraction:
        """Euclidean volume of ``P`` (length in rank 1, area in rank 2)."""
        if self.rank == 1:
            return Fraction(self.vertices[1][0] - self.vertices[0][0])
        twice = 0
        vs = self.vertices
        for a, b in zip(vs, vs[1:] + vs[:1]):
            twice += a[0] * b[1] - a[1] * b[0]
        return Fraction(abs(twice), 2)

    def fan_cones(self) -> list[tuple[Vector, ...]]:
        """Maximal cones of the normal fan as tuples of ray generators.

        In rank 2 consecutive inward normals of a ccw polygon are also ccw, so
        each vertex of ``P`` contributes the cone spanned by the normals of its
        two adjacent edges.
        """
        if self.rank == 1:
            return [((1,),), ((-1,),)]
        nr = self.normals
        return [(nr[i - 1], nr[i]) for i in range(len(nr))]

    def cone_containing(self, v: Sequence[int]) -> tuple[tuple[Vector, ...], tuple[Fraction, ...]]:
        """Return the fan cone containing ``v`` and the coefficients of ``v`` in its rays."""
        v = tuple(int(x) for x in v)
        if not any(v):
            raise PolytopeError("zero vector lies in every cone")
        if self.rank == 1:
            ray = (1,) if v[0] > 0 else (-1,)
            return (ray,), (Fraction(abs(v[0])),)
        for r1, r2 in self.fan_cones():
            det = r1[0] * r2[1] - r1[1] * r2[0]
            a = Fraction(v[0] * r2[1] - v[1] * r2[0], det)
            b = Fraction(r1[0] * v[1] - r1[1] * v[0], det)
            if a >= 0 and b >= 0:
                return (r1, r2), (a, b)
        raise PolytopeError(f"no fan cone contains {v}")  # pragma: no cover - complete fan

    def to_text(self) -> str:
        return "\n".join(" ".join(str(x) for x in v) for v in self.vertices) + "\n"

    @classmethod
    def from_text(cls, text: str, name: str = "") -> "ReflexivePolytope":
        verts = []
        for line in text.splitlines():
            line = line.split("#", 1)[0].strip().replace(",", " ")
            if not line:
                continue
            verts.append(tuple(int(tok) for tok in line.split()))
        return cls(tuple(verts), name=name)

    @classmethod
    def from_file(cls, path: str | Path) -> "ReflexivePolytope":
        path = Path(path)
        return cls.from_text(path.read_text(), name=path.stem)


def lattice_points(P: ReflexivePolytope, m: int = 1) -> list[Vector]:
    """All ``u`` in ``mP ∩ Z^n``, sorted lexicographically."""
    if m < 0:
        raise ValueError("m must be non-negative")
    if m == 0:
        return [tuple(0 for _ in range(P.rank))]
    lo = [m * min(v[i] for v in P.vertices) for i in range(P.rank)]
    hi = [m * max(v[i] for v in P.vertices) for i in range(P.rank)]
    pts = []
    for u in itertools.product(*(range(a, b + 1) for a, b in zip(lo, hi))):
        if all(_dot(u, nrm) >= -m for nrm in P.normals):
            pts.append(tuple(u))
    return pts


# Standard examples. Rays of the fans: P^1 {±1}; P^2 {e1, e2, -e1-e2};
# P^1 x P^1 {±e1, ±e2}; Bl_1 P^2 adds e1+e2 to the P^2 fan.
def projective_line() -> ReflexivePolytope:
    return ReflexivePolytope(((-1,), (1,)), name="P1")


def projective_plane() -> ReflexivePolytope:
    return ReflexivePolytope(((-1, -1), (2, -1), (-1, 2)), name="P2")


def p1xp1() -> ReflexivePolytope:
    return ReflexivePolytope(((-1, -1), (1, -1), (1, 1), (-1, 1)), name="P1xP1")


def blowup_p2() -> ReflexivePolytope:
    return ReflexivePolytope(((-1, 0), (0, -1), (2, -1), (-1, 2)), name="Bl1P2")


NAMED_POLYTOPES = {
    "P1": projective_line,
    "P2": projective_plane,
    "P1xP1": p1xp1,
    "Bl1P2": blowup_p2,
}
