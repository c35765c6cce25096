"""Voronoi cells by half-space clipping, with interval volumes.

A cell starts as an axis-aligned box of half-width ``cutoff`` around the
anchor and is clipped by the bisector planes of all neighbors within
``cutoff``, nearest first.  Vertices live in floating point; for volumes each
coordinate is inflated to ``[x - h, x + h]`` and the cell is fanned from an
interior point into tetrahedra evaluated in interval arithmetic.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .interval import Interval, add_down, add_up, iv_sqrt, iv_sum
from .packing import PackingPatch, neighbors

DEFAULT_CUTOFF = 6.0
VERTEX_HALFWIDTH = 1e-10
MERGE_TOL = 1e-9
_PLANE_EPS = 1e-10
_TRIANGLE_REACH = 2.8284271247461903 + 1e-6


class NonInteriorError(ValueError):
    """Volume requested for a cell not certified by its patch."""


class NonRealizableError(ValueError):
    """Six lengths that cannot be the edges of a Euclidean tetrahedron."""


@dataclass(frozen=True, eq=False)
class VoronoiCell:
    anchor: int
    halfspaces: list  # (unit normal, offset) in coordinates relative to the anchor
    vertices: np.ndarray  # relative to the anchor center
    faces: list  # vertex-index cycles, counterclockwise seen from outside
    face_planes: list  # plane id per face; -1..-6 are the bounding box sides
    interior: bool
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))
    vertex_halfwidths: np.ndarray | None = None

    @property
    def volume(self) -> Interval:
        return cell_volume(self)

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    def to_dict(self) -> dict:
        vol = polytope_volume(self.vertices, self.faces, self.vertex_halfwidths)
        return {
            "anchor": self.anchor,
            "vertices": (self.vertices + self.origin).tolist(),
            "faces": [list(f) for f in self.faces],
            "volume_lo": repr(vol.lo),
            "volume_hi": repr(vol.hi),
        }


# ---------------------------------------------------------------------------
# Polytope clipping
# ---------------------------------------------------------------------------


def _box_faces(h: float) -> list[tuple[int, list[np.ndarray]]]:
    c = [np.array([sx * h, sy * h, sz * h]) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)]
    # index = 4*(x>0) + 2*(y>0) + (z>0); cycles are ccw seen from outside
    quads = [
        (-1, [0, 1, 3, 2]),  # x = -h
        (-2, [4, 6, 7, 5]),  # x = +h
        (-3, [0, 4, 5, 1]),  # y = -h
        (-4, [2, 3, 7, 6]),  # y = +h
        (-5, [0, 2, 6, 4]),  # z = -h
        (-6, [1, 5, 7, 3]),  # z = +h
    ]
    return [(pid, [c[k] for k in idx]) for pid, idx in quads]


def _canonical_cut(p: np.ndarray, q: np.ndarray, sp: float, sq: float) -> np.ndarray:
    # Same edge seen from two faces must give bit-identical points.
    if tuple(q) < tuple(p):
        p, q, sp, sq = q, p, sq, sp
    t = sp / (sp - sq)
    return p + t * (q - p)


def _order_on_plane(points: list[np.ndarray], normal: np.ndarray) -> list[np.ndarray]:
    pts = _dedupe(points)
    if len(pts) < 3:
        return pts
    g = np.mean(pts, axis=0)
    u = pts[0] - g
    if np.linalg.norm(u) < 1e-15:
        u = pts[1] - g
    u = u / np.linalg.norm(u)
    v = np.cross(normal, u)
    ang = [math.atan2(float(np.dot(x - g, v)), float(np.dot(x - g, u))) for x in pts]
    order = sorted(range(len(pts)), key=lambda k: (ang[k], tuple(pts[k])))
    return [pts[k] for k in order]


def _dedupe(points: list[np.ndarray]) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for p in points:
        if all(np.max(np.abs(p - q)) > MERGE_TOL for q in out):
            out.append(p)
    return out


def clip(faces, normal: np.ndarray, offset: float, plane_id: int):
    """Intersect a convex polytope (face list) with ``normal . x <= offset``.

    Returns ``(faces, cut)`` where ``cut`` tells whether the plane removed
    anything.  Vertices within ``_PLANE_EPS`` of the plane count as on it,
    which merges near-degenerate vertices instead of creating sliver edges.
    """
    scale = max(1.0, abs(offset))
    eps = _PLANE_EPS * scale
    if all(float(np.dot(normal, v)) - offset <= eps for _, poly in faces for v in poly):
        return faces, False
    new_faces = []
    cap: list[np.ndarray] = []
    for pid, poly in faces:
        s = [float(np.dot(normal, v)) - offset for v in poly]
        s = [0.0 if abs(x) <= eps else x for x in s]
        out: list[np.ndarray] = []
        n = len(poly)
        for k in range(n):
            p, q = poly[k], poly[(k + 1) % n]
            sp, sq = s[k], s[(k + 1) % n]
            if sp <= 0.0:
                out.append(p)
                if sp == 0.0:
                    cap.append(p)
            if (sp < 0.0 < sq) or (sq < 0.0 < sp):
                x = _canonical_cut(p, q, sp, sq)
                out.append(x)
                cap.append(x)
        out = _dedupe_cycle(out)
        if len(out) >= 3:
            new_faces.append((pid, out))
    cap_poly = _order_on_plane(cap, normal)
    if len(cap_poly) >= 3:
        new_faces.append((plane_id, cap_poly))
    return new_faces, True


def _dedupe_cycle(cycle: list[np.ndarray]) -> list[np.ndarray]:
    out: list[np.ndarray] = []
    for p in cycle:
        if not out or np.max(np.abs(p - out[-1])) > MERGE_TOL:
            out.append(p)
    while len(out) > 1 and np.max(np.abs(out[0] - out[-1])) <= MERGE_TOL:
        out.pop()
    return out


def _index_faces(faces) -> tuple[np.ndarray, list[list[int]], list[int]]:
    verts: list[np.ndarray] = []
    cycles, pids = [], []
    for pid, poly in faces:
        cyc: list[int] = []
        for p in poly:
            for k, q in enumerate(verts):
                if np.max(np.abs(p - q)) <= MERGE_TOL:
                    break
            else:
                verts.append(p)
                k = len(verts) - 1
            if not cyc or cyc[-1] != k:
                cyc.append(k)
        while len(cyc) > 1 and cyc[0] == cyc[-1]:
            cyc.pop()
        if len(set(cyc)) >= 3:
            cycles.append(cyc)
            pids.append(pid)
    return np.array(verts, dtype=float).reshape(-1, 3), cycles, pids


_BOX_NORMALS = {
    -1: (-1.0, 0.0, 0.0), -2: (1.0, 0.0, 0.0),
    -3: (0.0, -1.0, 0.0), -4: (0.0, 1.0, 0.0),
    -5: (0.0, 0.0, -1.0), -6: (0.0, 0.0, 1.0),
}


def _vertex_halfwidths(verts, cycles, pids, planes, floor: float, data_tol: float) -> np.ndarray:
    """Per-vertex bound on the distance to the exact vertex, at least ``floor``.

    For each vertex we take the best-conditioned triple of incident planes
    and bound the displacement by ``||N^-1||_inf * max residual``, with the
    residual padded by float evaluation error and by ``data_tol`` (plane data
    uncertainty).  A factor 4 covers the float evaluation of the bound itself.
    """
    incident: list[list[int]] = [[] for _ in range(len(verts))]
    for cyc, pid in zip(cycles, pids):
        for k in cyc:
            if pid not in incident[k]:
                incident[k].append(pid)
    out = np.full(len(verts), floor)
    for k, v in enumerate(verts):
        rows, res = [], []
        for pid in incident[k]:
            n, off = planes[pid]
            rows.append(n)
            slop = 4e-16 * (abs(off) + float(np.dot(np.abs(n), np.abs(v)))) + data_tol * (1.0 + float(np.sum(np.abs(v))))
            res.append(abs(float(np.dot(n, v)) - off) + slop)
        best = None
        m = len(rows)
        for a in range(m):
            for b in range(a + 1, m):
                for c in range(b + 1, m):
                    mat = np.array([rows[a], rows[b], rows[c]])
                    det = abs(float(np.linalg.det(mat)))
                    if det > 1e-6 and (best is None or det > best[0]):
                        best = (det, mat, max(res[a], res[b], res[c]))
        if best is None:
            out[k] = np.inf
            continue
        inv_norm = float(np.max(np.sum(np.abs(np.linalg.inv(best[1])), axis=1)))
        out[k] = max(floor, 4.0 * inv_norm * best[2])
    return out


def _make_cell(anchor, faces, planes, used, interior_fn, origin, floor, data_tol) -> VoronoiCell:
    verts, cycles, pids = _index_faces(faces)
    hw = _vertex_halfwidths(verts, cycles, pids, planes, floor, data_tol)
    interior = len(verts) > 0 and all(pid >= 0 for pid in pids) and interior_fn(verts)
    return VoronoiCell(anchor, used, verts, cycles, pids, interior, origin, hw)


def cell_from_halfspaces(
    halfspaces: Sequence[tuple[Sequence[float], float]],
    bound: float,
    anchor: int = -1,
    vertex_halfwidth: float = VERTEX_HALFWIDTH,
) -> VoronoiCell:
    """Polytope ``{x : n . x <= d}`` intersected with the box ``|x|_inf <= bound``.

    Normals must be unit vectors.  Half-spaces are used in the given order;
    ``interior`` is true when no face of the bounding box survives.
    """
    faces = _box_faces(bound)
    planes = {pid: (np.array(n), bound) for pid, n in _BOX_NORMALS.items()}
    used = []
    for k, (n, d) in enumerate(halfspaces):
        n = np.asarray(n, dtype=float)
        faces, _ = clip(faces, n, float(d), k)
        planes[k] = (n, float(d))
        used.append((n, float(d)))
    return _make_cell(anchor, faces, planes, used, lambda v: True, np.zeros(3), vertex_halfwidth, 0.0)


def voronoi_cell(
    p: PackingPatch,
    i: int,
    cutoff: float = DEFAULT_CUTOFF,
    vertex_halfwidth: float = VERTEX_HALFWIDTH,
) -> VoronoiCell:
    """Voronoi cell of center ``i`` restricted to neighbors within ``cutoff``.

    ``vertex_halfwidth`` is the minimum inflation applied to every vertex
    coordinate before volumes are taken; vertices whose incident planes
    certify a larger error get a larger one.
    """
    if cutoff < 4.0:
        raise ValueError("cutoff must be at least 4")
    c = p.centers[i]
    faces = _box_faces(cutoff)
    planes = {pid: (np.array(n), cutoff) for pid, n in _BOX_NORMALS.items()}
    used = []
    radius = math.sqrt(3.0) * cutoff
    for j in neighbors(p, i, cutoff):  # nearest first, ties by index
        d = p.centers[j] - c
        dist = float(np.linalg.norm(d))
        if dist / 2.0 > radius + MERGE_TOL:
            break
        n = d / dist
        off = dist / 2.0
        faces, cut = clip(faces, n, off, j)
        if cut:
            planes[j] = (n, off)
            used.append((n, off))
            radius = max(float(np.linalg.norm(v)) for _, poly in faces for v in poly)
    limit = cutoff / 2.0 - 0.1

    def within(verts):
        dist = np.linalg.norm(verts, axis=1)
        if float(np.max(dist)) >= limit:
            return False
        if p.radius is None:
            return True
        # sampled region is the ball of radius p.radius: each vertex's empty
        # sphere, and the triangle reach of the center, must stay inside it
        far = np.linalg.norm(verts + c, axis=1) + dist
        return float(np.max(far)) <= p.radius - MERGE_TOL and float(np.linalg.norm(c)) + _TRIANGLE_REACH <= p.radius

    return _make_cell(i, faces, planes, used, within, c.copy(), vertex_halfwidth, 2.0 * p.coord_tol)


def is_interior(p: PackingPatch, i: int, cutoff: float = DEFAULT_CUTOFF) -> bool:
    """True iff every cell vertex lies within ``cutoff/2 - 0.1`` of center ``i``.

    Any center farther than ``cutoff`` has its bisector beyond ``cutoff/2``,
    so it cannot cut such a cell.  When the patch records the radius of the
    ball it was sampled from, the cell must also be certified against points
    outside that ball: every vertex's empty sphere lies inside it, and so do
    all triangles through the center.
    """
    return voronoi_cell(p, i, cutoff).interior


def mark_interior(p: PackingPatch, cutoff: float = DEFAULT_CUTOFF) -> PackingPatch:
    return p.with_interior_flags(is_interior(p, i, cutoff) for i in range(len(p)))


# ---------------------------------------------------------------------------
# Volumes
# ---------------------------------------------------------------------------


def _det3(u, v, w) -> Interval:
    return (
        u[0] * (v[1] * w[2] - v[2] * w[1])
        - u[1] * (v[0] * w[2] - v[2] * w[0])
        + u[2] * (v[0] * w[1] - v[1] * w[0])
    )


def _ivec(x: Sequence[float], h: float = 0.0) -> list[Interval]:
    return [Interval(add_down(float(t), -h), add_up(float(t), h)) for t in x]


def _abs_iv(x: Interval) -> Interval:
    if x.lo >= 0:
        return x
    if x.hi <= 0:
        return -x
    return Interval(0.0, max(-x.lo, x.hi))


def tetra_volume(p0, p1, p2, p3) -> Interval:
    """Interval containing ``|det(p1-p0, p2-p0, p3-p0)| / 6``.

    Points may be float triples or triples of :class:`Interval`.
    """
    pts = [[t if isinstance(t, Interval) else Interval(float(t)) for t in pt] for pt in (p0, p1, p2, p3)]
    u, v, w = ([pts[k][m] - pts[0][m] for m in range(3)] for k in (1, 2, 3))
    return _abs_iv(_det3(u, v, w)) / 6.0


def cayley_menger_det(d01, d02, d03, d12, d13, d23):
    """``288 V^2`` of a tetrahedron from its six edge lengths.

    Works on any numeric type closed under ``+ - *`` (floats, Fractions,
    Intervals, dual numbers).  With vertex 0 at the origin the Gram matrix of
    the other three vertices has entries ``(d0i^2 + d0j^2 - dij^2) / 2``; we
    use ``288 V^2 = 8 det(G) = det(2 G)``.
    """
    a, b, c = d01 * d01, d02 * d02, d03 * d03
    g11, g22, g33 = a + a, b + b, c + c
    g12 = a + b - d12 * d12
    g13 = a + c - d13 * d13
    g23 = b + c - d23 * d23
    det = g11 * (g22 * g33 - g23 * g23) - g12 * (g12 * g33 - g23 * g13) + g13 * (g12 * g23 - g22 * g13)
    return det


def cayley_menger_volume(d01, d02, d03, d12, d13, d23) -> Interval:
    """Interval volume of the tetrahedron with the given edge lengths."""
    ls = [d if isinstance(d, Interval) else Interval(float(d)) for d in (d01, d02, d03, d12, d13, d23)]
    det = cayley_menger_det(*ls)
    if det.hi < 0.0:
        raise NonRealizableError(f"Cayley-Menger determinant {det} is negative")
    det = Interval(max(det.lo, 0.0), det.hi)
    return iv_sqrt(det / 288.0)


def polytope_volume(vertices: np.ndarray, faces: list[list[int]], halfwidth=0.0) -> Interval:
    """Volume of a closed polytope with outward-oriented face cycles.

    Signed tetrahedra from the vertex centroid to every fan triangle; vertex
    ``k``'s coordinates are widened by ``halfwidth`` (scalar or per-vertex).
    """
    hw = np.broadcast_to(np.asarray(0.0 if halfwidth is None else halfwidth, dtype=float), (len(vertices),))
    if not np.all(np.isfinite(hw)):
        return Interval.entire()
    if len(faces) == 0:
        return Interval(0.0)
    g = [float(x) for x in np.mean(vertices, axis=0)]
    gi = _ivec(g)
    iverts = [_ivec(v, float(h)) for v, h in zip(vertices, hw)]
    rel = [[x[m] - gi[m] for m in range(3)] for x in iverts]
    terms = []
    for cyc in faces:
        a = rel[cyc[0]]
        for k in range(1, len(cyc) - 1):
            terms.append(_det3(a, rel[cyc[k]], rel[cyc[k + 1]]))
    return iv_sum(terms) / 6.0


def cell_volume(cell: VoronoiCell) -> Interval:
    if not cell.interior:
        raise NonInteriorError(f"cell of center {cell.anchor} is not interior")
    return polytope_volume(cell.vertices, cell.faces, cell.vertex_halfwidths)
