"""Finite patches of unit-ball packings, neighbor queries and triangle censuses.

Centers are stored in units of the ball radius, so touching balls sit at
distance 2.  Edge lengths are carried as :class:`Interval` values: a patch may
declare a per-coordinate uncertainty ``coord_tol`` (generated lattices set it
to one ulp of the largest coordinate, because their ideal coordinates are
irrational), and every edge interval encloses the distance between any two
points within that tolerance of the stored centers.

Comparisons of an edge against a cutoff ``r`` are closed and use the edge's
lower bound, so an ideal lattice distance equal to ``r`` is admitted
deterministically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Hashable, Iterable, Sequence, TextIO

import mpmath
import numpy as np
from scipy.spatial import cKDTree

from .interval import SQRT8, Interval, add_down, add_up, iv_sqrt

TOL_GEOM = 1e-12
_PREC_BITS = 200


class PatchError(ValueError):
    """Malformed patch document or invalid patch."""


class MinDistanceError(PatchError):
    def __init__(self, i: int, j: int, dist: float):
        super().__init__(f"centers {i} and {j} are at distance {dist!r} < 2")
        self.pair = (i, j)
        self.distance = dist


# ---------------------------------------------------------------------------
# Lattices
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Lattice:
    """Periodic structure: ``offsets[k] + basis.T @ n`` for integer ``n``.

    ``basis`` rows are the lattice vectors.  ``exact`` optionally holds
    high-precision versions (mpmath matrices) used to round generated
    coordinates correctly; it defaults to the float values themselves.
    """

    basis: np.ndarray
    offsets: np.ndarray
    exact: tuple | None = None

    def __post_init__(self):
        basis = np.array(self.basis, dtype=float).reshape(3, 3)
        offsets = np.array(self.offsets, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "basis", basis)
        object.__setattr__(self, "offsets", offsets)
        if abs(np.linalg.det(basis)) < 1e-12:
            raise PatchError("lattice basis is singular")

    @property
    def cell_volume(self) -> float:
        return abs(float(np.linalg.det(self.basis)))

    def exact_parts(self):
        if self.exact is not None:
            return self.exact
        with mpmath.workprec(_PREC_BITS):
            b = mpmath.matrix([[mpmath.mpf(float(x)) for x in row] for row in self.basis])
            o = [mpmath.matrix([mpmath.mpf(float(x)) for x in row]) for row in self.offsets]
        return b, o

    def exact_vector(self, site_from: int, site_to: int, shift: Sequence[int]) -> list:
        """High-precision ``offsets[to] - offsets[from] + basis.T @ shift``."""
        b, o = self.exact_parts()
        with mpmath.workprec(_PREC_BITS):
            v = o[site_to] - o[site_from]
            for k in range(3):
                if shift[k]:
                    v = v + shift[k] * b[k, :].T
            return [v[0], v[1], v[2]]

    def shift_range(self, radius: float) -> int:
        smin = float(np.linalg.svd(self.basis, compute_uv=False)[-1])
        reach = radius + float(np.max(np.linalg.norm(self.offsets, axis=1)))
        return int(math.ceil(reach / smin)) + 1

    def to_dict(self) -> dict:
        return {"basis": self.basis.tolist(), "offsets": self.offsets.tolist()}


def _round_with_tol(values) -> tuple[list[float], float]:
    """Round mpf values to nearest floats; return them and an error bound."""
    out = [float(v) for v in values]
    tol = max((math.ulp(abs(x)) for x in out), default=0.0)
    return out, tol


def fcc_lattice() -> Lattice:
    """Conventional cubic cell of the FCC packing, 4 sites, edge 2*sqrt(2)."""
    with mpmath.workprec(_PREC_BITS):
        s = mpmath.sqrt(2)
        b = mpmath.matrix([[2 * s, 0, 0], [0, 2 * s, 0], [0, 0, 2 * s]])
        o = [
            mpmath.matrix([0, 0, 0]),
            mpmath.matrix([s, s, 0]),
            mpmath.matrix([s, 0, s]),
            mpmath.matrix([0, s, s]),
        ]
    return _lattice_from_exact(b, o)


def hcp_lattice() -> Lattice:
    """Hexagonal close packing: ABAB stacking, 2 sites per cell."""
    with mpmath.workprec(_PREC_BITS):
        h = mpmath.sqrt(mpmath.mpf(8) / 3)
        r3 = mpmath.sqrt(3)
        b = mpmath.matrix([[2, 0, 0], [1, r3, 0], [0, 0, 2 * h]])
        o = [mpmath.matrix([0, 0, 0]), mpmath.matrix([1, 1 / r3, h])]
    return _lattice_from_exact(b, o)


def _lattice_from_exact(b, o) -> Lattice:
    basis = [[float(b[i, j]) for j in range(3)] for i in range(3)]
    offsets = [[float(v[k]) for k in range(3)] for v in o]
    return Lattice(np.array(basis), np.array(offsets), exact=(b, o))


# ---------------------------------------------------------------------------
# Patches
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PackingPatch:
    centers: np.ndarray
    lattice: Lattice | None = None
    coord_tol: float = 0.0
    radius: float | None = None
    interior_flags: tuple[bool, ...] | None = None
    tol_geom: float = TOL_GEOM
    _edge_cache: dict = field(default_factory=dict, repr=False, compare=False)
    _tri_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        c = np.array(self.centers, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(c)):
            raise PatchError("center coordinates must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "centers", c)
        if self.coord_tol < 0:
            raise PatchError("coord_tol must be nonnegative")
        if self.interior_flags is not None and len(self.interior_flags) != len(c):
            raise PatchError("interior_flags length does not match centers")
        _check_min_distance(c, self.tol_geom)

    def __len__(self) -> int:
        return len(self.centers)

    def with_interior_flags(self, flags: Iterable[bool]) -> "PackingPatch":
        return PackingPatch(
            self.centers, self.lattice, self.coord_tol, self.radius, tuple(bool(f) for f in flags), self.tol_geom
        )

    def distance(self, i: int, j: int) -> float:
        return float(np.linalg.norm(self.centers[j] - self.centers[i]))

    def edge(self, i: int, j: int) -> Interval:
        """Rigorous enclosure of the distance between centers ``i`` and ``j``."""
        key = (i, j) if i < j else (j, i)
        iv = self._edge_cache.get(key)
        if iv is None:
            p, q = self.centers[key[0]], self.centers[key[1]]
            diffs = [
                Interval(add_down(float(q[k]), -float(p[k])), add_up(float(q[k]), -float(p[k])))
                for k in range(3)
            ]
            iv = length_interval(diffs, 2.0 * self.coord_tol)
            self._edge_cache[key] = iv
        return iv


def length_interval(diffs: Sequence[Interval | float], tol: float = 0.0) -> Interval:
    """Enclosure of the norm of a vector known componentwise up to ``tol``."""
    sq = Interval(0.0)
    for d in diffs:
        if not isinstance(d, Interval):
            d = Interval(d)
        if tol:
            d = Interval(add_down(d.lo, -tol), add_up(d.hi, tol))
        sq = sq + d**2
    return iv_sqrt(sq)


def _check_min_distance(c: np.ndarray, tol: float = TOL_GEOM) -> None:
    if len(c) < 2:
        return
    tree = cKDTree(c)
    pairs = tree.query_pairs(2.0 - tol, output_type="ndarray")
    if len(pairs):
        d = np.linalg.norm(c[pairs[:, 0]] - c[pairs[:, 1]], axis=1)
        k = int(np.argmin(d))
        i, j = sorted(int(x) for x in pairs[k])
        raise MinDistanceError(i, j, float(d[k]))


def _ulp_norm_tol(coords: list[float]) -> float:
    return max((math.ulp(abs(x)) for x in coords), default=0.0)


def gen_lattice_patch(lattice: Lattice, patch_radius: float) -> PackingPatch:
    """All points of ``lattice`` within ``patch_radius`` of the origin.

    Points are ordered by distance from the origin, then by coordinates, so
    the origin (always a lattice point here) is index 0.  Coordinates are
    rounded to nearest from a high-precision evaluation, and the patch records
    a ``coord_tol`` covering that rounding.
    """
    b, o = lattice.exact_parts()
    n = lattice.shift_range(patch_radius)
    rng = range(-n, n + 1)
    pts = []
    with mpmath.workprec(_PREC_BITS):
        r2 = mpmath.mpf(Fraction(patch_radius).numerator) / Fraction(patch_radius).denominator
        r2 = r2 * r2 * (1 + mpmath.mpf(2) ** -120)
        for site in range(len(o)):
            for n0 in rng:
                for n1 in rng:
                    for n2 in rng:
                        v = o[site] + n0 * b[0, :].T + n1 * b[1, :].T + n2 * b[2, :].T
                        nn = v[0] ** 2 + v[1] ** 2 + v[2] ** 2
                        if nn <= r2:
                            pts.append((nn, [v[0], v[1], v[2]]))
    pts.sort(key=lambda t: (t[0], [float(x) for x in t[1]]))
    coords = []
    tol = 0.0
    for _, v in pts:
        xs, t = _round_with_tol(v)
        coords.append(xs)
        tol = max(tol, t)
    centers = np.array(coords, dtype=float).reshape(-1, 3)
    return PackingPatch(centers, lattice=lattice, coord_tol=tol, radius=float(patch_radius))


def gen_fcc(patch_radius: float) -> PackingPatch:
    return gen_lattice_patch(fcc_lattice(), patch_radius)


def gen_hcp(patch_radius: float) -> PackingPatch:
    return gen_lattice_patch(hcp_lattice(), patch_radius)


def neighbors(p: PackingPatch, i: int, cutoff: float) -> list[int]:
    """Indices within ``cutoff`` of center ``i``, nearest first (ties by index)."""
    if not 0 <= i < len(p):
        raise IndexError(f"center index {i} out of range for patch of {len(p)}")
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    d = np.linalg.norm(p.centers - p.centers[i], axis=1)
    idx = np.nonzero(d <= cutoff)[0]
    idx = idx[idx != i]
    order = np.lexsort((idx, d[idx]))
    return [int(j) for j in idx[order]]


# ---------------------------------------------------------------------------
# Triangles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Triangle:
    """Triangle on three centers.

    ``a = |v0 v1|``, ``b = |v0 v2|`` and ``c = |v1 v2|``, so when the triangle
    is anchored ``v0`` is the anchor and ``c`` the edge opposite it.  Vertex
    ids are any hashable, orderable labels (center indices for patches,
    ``(site, shift)`` pairs for periodic censuses).
    """

    v0: Hashable
    v1: Hashable
    v2: Hashable
    a: Interval
    b: Interval
    c: Interval
    anchored: bool = True
    distinguished_edge: tuple | None = None
    w: Interval | None = None

    @property
    def vertices(self) -> tuple:
        return (self.v0, self.v1, self.v2)

    @property
    def key(self) -> tuple:
        return tuple(sorted(self.vertices))

    def edge(self, u, v) -> Interval:
        pair = {u, v}
        if pair == {self.v0, self.v1}:
            return self.a
        if pair == {self.v0, self.v2}:
            return self.b
        if pair == {self.v1, self.v2}:
            return self.c
        raise KeyError(f"({u}, {v}) is not an edge of {self.vertices}")

    def edges(self) -> list[tuple[tuple, Interval]]:
        return [((self.v0, self.v1), self.a), ((self.v0, self.v2), self.b), ((self.v1, self.v2), self.c)]

    def anchored_at(self, v) -> "Triangle":
        if v not in self.vertices:
            raise ValueError(f"{v} is not a vertex of {self.vertices}")
        x, y = sorted(u for u in self.vertices if u != v)
        return Triangle(
            v, x, y, self.edge(v, x), self.edge(v, y), self.edge(x, y),
            True, self.distinguished_edge, self.w,
        )


def make_triangle(p: PackingPatch, anchor: int, j: int, k: int) -> Triangle:
    j, k = sorted((j, k))
    return Triangle(anchor, j, k, p.edge(anchor, j), p.edge(anchor, k), p.edge(j, k))


def _check_r(r: float) -> None:
    if not (2.0 <= r <= SQRT8.hi):
        raise ValueError(f"r = {r!r} outside [2, sqrt(8)]")


def _le(edge: Interval, bound: float) -> bool:
    return edge.lo <= bound


_REACH = add_up(SQRT8.hi, 1e-6)


def candidate_triangles(p: PackingPatch, i: int) -> list[Triangle]:
    """Every triangle through ``i`` whose edges could be at most sqrt(8).

    Cached on the patch; T- and S-censuses for any ``r`` are filters of it.
    """
    cached = p._tri_cache.get(i)
    if cached is not None:
        return cached
    cand = sorted(j for j in neighbors(p, i, _REACH) if _le(p.edge(i, j), _REACH))
    out = []
    for x in range(len(cand)):
        for y in range(x + 1, len(cand)):
            j, k = cand[x], cand[y]
            if _le(p.edge(j, k), _REACH):
                out.append(make_triangle(p, i, j, k))
    out.sort(key=lambda t: t.key)
    p._tri_cache[i] = out
    return out


def triangles_T(p: PackingPatch, i: int, r: float) -> list[Triangle]:
    """Triangles with a vertex at ``i`` and every edge of length at most ``r``."""
    _check_r(r)
    return [t for t in candidate_triangles(p, i) if _le(t.a, r) and _le(t.b, r) and _le(t.c, r)]


# -- S-triangle rules -------------------------------------------------------

SRule = Callable[[Triangle, float], "tuple | None"]


class LongestEdgeRule:
    """Accept a triangle whose unique longest edge lies in ``(r, sqrt 8]``.

    The two remaining edges must be at most ``r``; the longest edge is the
    distinguished one.  Membership depends only on the edge lengths, so the
    rule gives the same verdict whichever vertex anchors the triangle.
    """

    name = "longest-edge"

    def __init__(self, tol_geom: float = TOL_GEOM):
        self.upper = add_up(SQRT8.hi, tol_geom)

    def __call__(self, tri: Triangle, r: float):
        edges = tri.edges()
        edges.sort(key=lambda e: (e[1].mid, e[1].hi))
        (_, e0), (_, e1), (uv, w) = edges
        if not (w.lo > r and w.lo <= self.upper):
            return None
        if not (_le(e0, r) and _le(e1, r)):
            return None
        if w.lo <= max(e0.hi, e1.hi):
            return None
        return tuple(sorted(uv))


S_RULES: dict[str, SRule] = {LongestEdgeRule.name: LongestEdgeRule()}
DEFAULT_S_RULE = LongestEdgeRule.name


def get_rule(rule: str | SRule) -> SRule:
    if callable(rule):
        return rule
    try:
        return S_RULES[rule]
    except KeyError:
        raise ValueError(f"unknown S-rule {rule!r}; known: {sorted(S_RULES)}") from None


def classify_S(tri: Triangle, r: float, rule: str | SRule = DEFAULT_S_RULE) -> Triangle | None:
    de = get_rule(rule)(tri, r)
    if de is None:
        return None
    return Triangle(tri.v0, tri.v1, tri.v2, tri.a, tri.b, tri.c, tri.anchored, de, tri.edge(*de))


def triangles_S(
    p: PackingPatch, i: int, r: float, rule: str | SRule = DEFAULT_S_RULE
) -> list[Triangle]:
    """S-triangles through center ``i`` under ``rule``, anchored at ``i``."""
    _check_r(r)
    out = []
    for t in candidate_triangles(p, i):
        s = classify_S(t, r, rule)
        if s is not None:
            out.append(s)
    return out


# ---------------------------------------------------------------------------
# Documents
# ---------------------------------------------------------------------------


def patch_to_dict(p: PackingPatch) -> dict:
    doc: dict = {"radius_unit": "ball_radius", "centers": p.centers.tolist()}
    if p.lattice is not None:
        doc["lattice"] = p.lattice.to_dict()
    if p.coord_tol:
        doc["coord_tol"] = p.coord_tol
    if p.radius is not None:
        doc["patch_radius"] = p.radius
    return doc


def save_patch(p: PackingPatch, stream: TextIO) -> None:
    json.dump(patch_to_dict(p), stream, indent=1)
    stream.write("\n")


def _num(x) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float, str)):
        raise PatchError(f"expected a decimal number, got {x!r}")
    try:
        return float(x)
    except ValueError:
        raise PatchError(f"not a decimal number: {x!r}") from None


def patch_from_dict(doc, tol_geom: float = TOL_GEOM) -> PackingPatch:
    if not isinstance(doc, dict):
        raise PatchError("patch document must be an object")
    unit = doc.get("radius_unit", "ball_radius")
    if unit != "ball_radius":
        raise PatchError(f"unsupported radius_unit {unit!r}")
    raw = doc.get("centers")
    if not isinstance(raw, list):
        raise PatchError("'centers' must be an array of [x, y, z] triples")
    centers = []
    for n, c in enumerate(raw):
        if not isinstance(c, list) or len(c) != 3:
            raise PatchError(f"center {n} is not an [x, y, z] triple")
        centers.append([_num(x) for x in c])
    lattice = None
    if doc.get("lattice") is not None:
        lat = doc["lattice"]
        try:
            basis = [[_num(x) for x in row] for row in lat["basis"]]
            offsets = [[_num(x) for x in row] for row in lat["offsets"]]
            if len(basis) != 3 or any(len(r) != 3 for r in basis + offsets) or not offsets:
                raise PatchError("lattice basis must be 3x3 and offsets nonempty triples")
        except (KeyError, TypeError) as exc:
            raise PatchError(f"malformed lattice: {exc}") from None
        lattice = Lattice(np.array(basis), np.array(offsets))
    radius = doc.get("patch_radius")
    return PackingPatch(
        np.array(centers, dtype=float).reshape(-1, 3),
        lattice=lattice,
        coord_tol=_num(doc.get("coord_tol", 0.0)),
        radius=None if radius is None else _num(radius),
        tol_geom=tol_geom,
    )


def load_patch(stream: TextIO, tol_geom: float = TOL_GEOM) -> PackingPatch:
    try:
        doc = json.load(stream)
    except json.JSONDecodeError as exc:
        raise PatchError(f"malformed patch document: {exc}") from None
    return patch_from_dict(doc, tol_geom)


def perturbed_lattice(lattice: Lattice, jitter: float, seed: int = 0, scale: float = 1.0) -> Lattice:
    """Scale a lattice, then move each site by up to ``jitter`` per coordinate."""
    rng = np.random.default_rng(seed)
    offsets = lattice.offsets * scale + rng.uniform(-jitter, jitter, lattice.offsets.shape)
    return Lattice(lattice.basis * scale, offsets)
