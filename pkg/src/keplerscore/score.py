"""The score ``f = vol(Voronoi cell) + eps`` and its correction term.

``eps`` at a center is a sum over triangles through that center:

* every triangle ``T`` with all edges at most ``r`` contributes
  ``2 L(c) - L(a) - L(b)``, where ``c`` is the edge opposite the center;
* every S-triangle contributes ``M * mu * (sqrt(8) - w)``, where ``w`` is the
  length of its distinguished edge and ``mu`` is -1 when the center is an
  endpoint of that edge and 2 otherwise.

Both contributions sum to zero over the three vertices of a triangle, which is
what makes the correction cancel when summed over a periodic packing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np

from .interval import FOUR_SQRT2, SQRT8, Interval, iv_sum
from .packing import (
    DEFAULT_S_RULE,
    Lattice,
    PackingPatch,
    SRule,
    Triangle,
    classify_S,
    get_rule,
    length_interval,
    triangles_S,
    triangles_T,
)
from .voronoi import DEFAULT_CUTOFF, NonInteriorError, cell_volume, voronoi_cell

NU0 = FOUR_SQRT2


@dataclass(frozen=True)
class QuadPoly:
    """``L(x) = q2 x^2 + q1 x + q0``."""

    q2: float = 0.0
    q1: float = 0.0
    q0: float = 0.0

    def __post_init__(self):
        for name in ("q2", "q1", "q0"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)

    def __add__(self, other: "QuadPoly") -> "QuadPoly":
        return QuadPoly(self.q2 + other.q2, self.q1 + other.q1, self.q0 + other.q0)

    def __call__(self, x: float) -> float:
        return (self.q2 * x + self.q1) * x + self.q0


@dataclass(frozen=True)
class ScoreParams:
    L: QuadPoly = field(default_factory=lambda: QuadPoly(0.0, -1.0, SQRT8.mid))
    M: float = 1.0
    r: float = 2.51
    s_rule: str | SRule = DEFAULT_S_RULE

    def __post_init__(self):
        if not (2.0 <= self.r <= SQRT8.hi):
            raise ValueError(f"r = {self.r!r} outside [2, sqrt(8)]")
        if not math.isfinite(self.M):
            raise ValueError("M must be finite")
        get_rule(self.s_rule)

    def to_dict(self) -> dict:
        return {"q2": self.L.q2, "q1": self.L.q1, "q0": self.L.q0, "M": self.M, "r": self.r, "s_rule": getattr(self.s_rule, "name", self.s_rule)}


@dataclass(frozen=True)
class ScoreReport:
    center: int
    voronoi_volume: Interval
    t_term: Interval
    s_term: Interval
    epsilon: Interval
    f: Interval
    margin: Interval

    FIELDS = ("voronoi_volume", "t_term", "s_term", "epsilon", "f", "margin")

    def to_record(self) -> dict:
        rec: dict = {"center": self.center}
        for name in self.FIELDS:
            iv = getattr(self, name)
            rec[f"{name}_lo"] = repr(iv.lo)
            rec[f"{name}_hi"] = repr(iv.hi)
        return rec

    @classmethod
    def csv_header(cls) -> list[str]:
        return ["center"] + [f"{n}_{s}" for n in cls.FIELDS for s in ("lo", "hi")]


def eval_L(L: QuadPoly, x: Interval) -> Interval:
    """Horner evaluation; encloses the range, not necessarily tightly."""
    return (x * L.q2 + L.q1) * x + L.q0


def delta_T(L: QuadPoly, tri: Triangle) -> Interval:
    if not tri.anchored:
        raise ValueError("delta_T needs an anchored triangle")
    return 2.0 * eval_L(L, tri.c) - eval_L(L, tri.a) - eval_L(L, tri.b)


def mu(s_tri: Triangle, i: Hashable) -> int:
    if i not in s_tri.vertices:
        raise ValueError(f"{i} is not a vertex of {s_tri.vertices}")
    if s_tri.distinguished_edge is None:
        raise ValueError("triangle has no distinguished edge")
    return -1 if i in s_tri.distinguished_edge else 2


def triangle_cancellation_residual(L: QuadPoly, tri: Triangle) -> Interval:
    """Sum of the three anchored deltas of ``tri``; zero in exact arithmetic."""
    return iv_sum(delta_T(L, tri.anchored_at(v)) for v in tri.vertices)


def _terms(anchor, t_tris: Iterable[Triangle], s_tris: Iterable[Triangle], params: ScoreParams):
    t_term = iv_sum(delta_T(params.L, t) for t in t_tris)
    if params.M == 0.0:
        return t_term, Interval(0.0)
    s_sum = iv_sum(mu(s, anchor) * (SQRT8 - s.w) for s in s_tris)
    return t_term, s_sum * params.M


def epsilon(p: PackingPatch, i: int, params: ScoreParams) -> tuple[Interval, Interval]:
    """``(t_term, s_term)`` at center ``i``; ``eps = t_term + s_term``."""
    t_tris = triangles_T(p, i, params.r)
    s_tris = triangles_S(p, i, params.r, params.s_rule) if params.M != 0.0 else []
    return _terms(i, t_tris, s_tris, params)


def f_score(
    p: PackingPatch, i: int, params: ScoreParams, cutoff: float = DEFAULT_CUTOFF, volume: Interval | None = None
) -> ScoreReport:
    """Score of center ``i``.  Raises :class:`NonInteriorError` off the interior.

    ``volume`` may carry a precomputed cell volume (it depends only on the
    patch, not on ``params``).
    """
    if volume is None:
        cell = voronoi_cell(p, i, cutoff)
        if not cell.interior:
            raise NonInteriorError(f"center {i} is not interior at cutoff {cutoff}")
        volume = cell_volume(cell)
    t, s = epsilon(p, i, params)
    eps = t + s
    f = volume + eps
    return ScoreReport(i, volume, t, s, eps, f, f - NU0)


def verify_nu0() -> Interval:
    """Cross-check the stored 4 sqrt(2) against a computed FCC cell volume."""
    from .packing import gen_fcc

    # the first shell alone determines the cell; drop the sampling radius so
    # the interior test relies only on the cutoff criterion
    shell = gen_fcc(2.0)
    cell = voronoi_cell(PackingPatch(shell.centers, coord_tol=shell.coord_tol), 0)
    vol = cell_volume(cell)
    if not vol.overlaps(NU0):
        raise AssertionError(f"FCC cell volume {vol} disagrees with 4 sqrt(2) = {NU0}")
    return vol


# ---------------------------------------------------------------------------
# Periodic census
# ---------------------------------------------------------------------------


class PeriodicCensus:
    """Triangles of a periodic packing, with vertices labeled ``(site, shift)``.

    The vector between ``(t1, n1)`` and ``(t2, n2)`` is evaluated as
    ``offsets[t2] - offsets[t1] + basis.T @ (n2 - n1)`` in high precision and
    rounded once, so translated copies of a triangle get bit-identical edge
    intervals and the same membership verdicts at every anchor.
    """

    def __init__(self, lattice: Lattice):
        self.lattice = lattice
        self._edges: dict = {}
        self._nbrs: dict = {}

    def edge(self, u: tuple, v: tuple) -> Interval:
        (t1, n1), (t2, n2) = u, v
        shift = tuple(b - a for a, b in zip(n1, n2))
        key = (t1, t2, shift)
        rkey = (t2, t1, tuple(-x for x in shift))
        if rkey < key:
            key = rkey
        iv = self._edges.get(key)
        if iv is None:
            vec = self.lattice.exact_vector(key[0], key[1], key[2])
            floats = [float(x) for x in vec]
            tol = max(math.ulp(abs(x)) for x in floats)
            iv = length_interval(floats, tol)
            self._edges[key] = iv
        return iv

    def neighbors(self, site: int, cutoff: float) -> list[tuple]:
        key = (site, cutoff)
        if key not in self._nbrs:
            lat = self.lattice
            n = lat.shift_range(cutoff)
            rng = np.arange(-n, n + 1)
            shifts = np.array(np.meshgrid(rng, rng, rng, indexing="ij")).reshape(3, -1).T
            base = shifts @ lat.basis
            anchor = (site, (0, 0, 0))
            out = []
            for t in range(len(lat.offsets)):
                d = np.linalg.norm(base + (lat.offsets[t] - lat.offsets[site]), axis=1)
                for k in np.nonzero(d <= cutoff + 1e-6)[0]:
                    v = (t, tuple(int(x) for x in shifts[k]))
                    if v != anchor:
                        out.append(v)
            out.sort()
            self._nbrs[key] = out
        return self._nbrs[key]

    def _triangle(self, anchor, j, k) -> Triangle:
        j, k = sorted((j, k))
        return Triangle(anchor, j, k, self.edge(anchor, j), self.edge(anchor, k), self.edge(j, k))

    def triangles_T(self, site: int, r: float) -> list[Triangle]:
        anchor = (site, (0, 0, 0))
        cand = [v for v in self.neighbors(site, r) if self.edge(anchor, v).lo <= r]
        out = []
        for x in range(len(cand)):
            for y in range(x + 1, len(cand)):
                if self.edge(cand[x], cand[y]).lo <= r:
                    out.append(self._triangle(anchor, cand[x], cand[y]))
        return out

    def triangles_S(self, site: int, r: float, rule: str | SRule = DEFAULT_S_RULE) -> list[Triangle]:
        anchor = (site, (0, 0, 0))
        reach = SQRT8.hi + 1e-6
        cand = [v for v in self.neighbors(site, reach) if self.edge(anchor, v).lo <= reach]
        out = []
        for x in range(len(cand)):
            for y in range(x + 1, len(cand)):
                if self.edge(cand[x], cand[y]).lo > reach:
                    continue
                s = classify_S(self._triangle(anchor, cand[x], cand[y]), r, rule)
                if s is not None:
                    out.append(s)
        return out

    def epsilon(self, site: int, params: ScoreParams) -> tuple[Interval, Interval]:
        t_tris = self.triangles_T(site, params.r)
        s_tris = self.triangles_S(site, params.r, params.s_rule) if params.M != 0.0 else []
        return _terms((site, (0, 0, 0)), t_tris, s_tris, params)

    def epsilon_sum(self, params: ScoreParams) -> Interval:
        """Sum of ``eps`` over the sites of one fundamental domain."""
        total = []
        for site in range(len(self.lattice.offsets)):
            t, s = self.epsilon(site, params)
            total.extend((t, s))
        return iv_sum(total)


def periodic_epsilon_sum(lattice: Lattice, params: ScoreParams) -> Interval:
    return PeriodicCensus(lattice).epsilon_sum(params)
