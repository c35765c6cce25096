import io
import itertools
import json
import math

import numpy as np
import pytest

from keplerscore.interval import SQRT8, Interval
from keplerscore.packing import (
    DEFAULT_S_RULE,
    LongestEdgeRule,
    MinDistanceError,
    PackingPatch,
    PatchError,
    Triangle,
    classify_S,
    fcc_lattice,
    gen_fcc,
    gen_hcp,
    gen_lattice_patch,
    get_rule,
    hcp_lattice,
    load_patch,
    make_triangle,
    neighbors,
    patch_from_dict,
    perturbed_lattice,
    save_patch,
    triangles_S,
    triangles_T,
)

from oracles import brute_triangles, fcc_points, random_rotation


def _dists(p, i):
    return np.linalg.norm(p.centers - p.centers[i], axis=1)


# -- generation ----------------------------------------------------------------


def test_gen_fcc_small_patches():
    p = gen_fcc(2.1)
    assert len(p) == 13
    d = _dists(p, 0)
    assert np.allclose(np.sort(d)[1:], 2.0)
    assert len(gen_fcc(2.0)) == 13
    assert len(gen_fcc(1.5)) == 1
    assert np.all(gen_fcc(1.5).centers == 0)


def test_gen_fcc_matches_bruteforce_oracle(fcc6):
    want = {tuple(np.round(v, 9)) for v in fcc_points(6.0)}
    got = {tuple(np.round(v, 9)) for v in fcc6.centers}
    assert got == want
    assert len(fcc6) == 177
    assert np.all(fcc6.centers[0] == 0)


def test_gen_hcp_first_shell():
    p = gen_hcp(2.1)
    assert len(p) == 13
    assert np.allclose(np.sort(_dists(p, 0))[1:], 2.0)
    assert len(gen_hcp(1.0)) == 1


def test_hcp_and_fcc_not_congruent():
    def multiset(p):
        c = p.centers
        d = np.linalg.norm(c[:, None] - c[None, :], axis=2)
        return np.sort(d[np.triu_indices(len(c), 1)])

    f, h = gen_fcc(2.1), gen_hcp(2.1)
    assert len(f) == len(h)
    assert not np.allclose(multiset(f), multiset(h))


def test_min_distance_and_lattice_membership(hcp6):
    c = hcp6.centers
    d = np.linalg.norm(c[:, None] - c[None, :], axis=2) + np.eye(len(c)) * 10
    assert d.min() >= 2 - 1e-12
    lat = hcp6.lattice
    inv = np.linalg.inv(lat.basis.T)
    for v in c:
        coeffs = [inv @ (v - o) for o in lat.offsets]
        assert any(np.allclose(k, np.round(k), atol=1e-9) for k in coeffs)


def test_generated_edges_contain_exact_lengths(fcc6):
    # coordinates are irrational; edge intervals still contain 2 and sqrt(8)
    for j in neighbors(fcc6, 0, 2.0 + 1e-9):
        assert fcc6.edge(0, j).contains(2.0)
    for j in neighbors(fcc6, 0, 2.9)[12:]:
        assert fcc6.edge(0, j).overlaps(SQRT8)


# -- neighbors -----------------------------------------------------------------


def test_neighbors_examples(fcc6):
    assert len(neighbors(fcc6, 0, 2 + 1e-9)) == 12
    assert len(neighbors(fcc6, 0, math.sqrt(8) + 1e-9)) == 18
    assert neighbors(fcc6, 0, 1.0) == []
    nb = neighbors(fcc6, 5, 4.0)
    d = _dists(fcc6, 5)
    keys = [(d[j], j) for j in nb]
    assert keys == sorted(keys)
    assert set(nb) == {j for j in range(len(fcc6)) if j != 5 and d[j] <= 4.0}


def test_neighbors_errors(fcc6):
    with pytest.raises(IndexError):
        neighbors(fcc6, len(fcc6), 3.0)
    with pytest.raises(ValueError):
        neighbors(fcc6, 0, 0.0)


# -- triangles_T ---------------------------------------------------------------


@pytest.mark.parametrize("r", [2.0, 2.5])
def test_triangles_T_fcc_origin(fcc6, r):
    tris = triangles_T(fcc6, 0, r)
    assert len(tris) == 24
    for t in tris:
        assert t.v0 == 0
        for e in (t.a, t.b, t.c):
            assert e.contains(2.0)
    assert {frozenset(t.vertices) for t in tris} == brute_triangles(fcc6.centers, 0, r)


def test_triangles_T_bruteforce_other_centers(hcp6):
    for i in (0, 3, 17):
        for r in (2.0, 2.4, 2.82):
            got = {frozenset(t.vertices) for t in triangles_T(hcp6, i, r)}
            assert got == brute_triangles(hcp6.centers, i, r)


def test_triangles_T_anchoring_order_and_determinism(hcp6):
    tris = triangles_T(hcp6, 4, 2.82)
    keys = [t.key for t in tris]
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)
    for t in tris:
        assert t.v0 == 4 and 4 not in (t.v1, t.v2)
        assert t.c == hcp6.edge(t.v1, t.v2)
        assert t.a == hcp6.edge(4, t.v1) and t.b == hcp6.edge(4, t.v2)
    assert [t.key for t in triangles_T(hcp6, 4, 2.82)] == keys


def test_triangles_T_symmetry_between_vertices(fcc6):
    r = 2.82
    for t in triangles_T(fcc6, 0, r)[:10]:
        for v in t.vertices:
            others = {frozenset(s.vertices) for s in triangles_T(fcc6, v, r)}
            assert frozenset(t.vertices) in others


def test_triangles_T_edge_cases(fcc6):
    single = gen_fcc(1.0)
    assert triangles_T(single, 0, 2.5) == []
    with pytest.raises(ValueError):
        triangles_T(fcc6, 0, 1.9)
    with pytest.raises(ValueError):
        triangles_T(fcc6, 0, 2.9)
    assert len(triangles_T(fcc6, 0, SQRT8.hi)) == 60


# -- triangles_S ---------------------------------------------------------------


def _tri_patch(a, b, c):
    """Three centers with |v0 v1| = a, |v0 v2| = b, |v1 v2| = c."""
    x = (a * a + b * b - c * c) / (2 * a)
    return PackingPatch(np.array([[0.0, 0.0, 0.0], [a, 0.0, 0.0], [x, math.sqrt(b * b - x * x), 0.0]]))


def _isolated(c):
    return _tri_patch(2.0, 2.0, c)


def test_triangles_S_fcc_origin(fcc6):
    tris = triangles_S(fcc6, 0, 2.5)
    # brute force: triangles at the origin with sides (2, 2, sqrt 8)
    c = fcc6.centers
    d = np.linalg.norm(c[:, None] - c[None, :], axis=2)
    want = set()
    for j, k in itertools.combinations(range(1, len(c)), 2):
        sides = sorted((d[0, j], d[0, k], d[j, k]))
        if np.allclose(sides, [2, 2, math.sqrt(8)], atol=1e-9):
            want.add(frozenset((0, j, k)))
    assert {frozenset(t.vertices) for t in tris} == want
    assert len(want) == 36
    for t in tris:
        assert t.w.overlaps(SQRT8)
        assert (SQRT8 - t.w).contains(0.0)
        u, v = t.distinguished_edge
        assert t.w == fcc6.edge(u, v)


def test_S_rule_examples():
    p = _isolated(2.6)
    s = triangles_S(p, 0, 2.5)
    assert len(s) == 1
    assert s[0].w.contains(2.6) or abs(s[0].w.mid - 2.6) < 1e-12
    assert set(s[0].distinguished_edge) == {1, 2}
    assert s[0].w == p.edge(1, 2)
    assert triangles_S(_isolated(2.0), 0, 2.5) == []
    # longest edge beyond sqrt 8: rejected
    assert triangles_S(_isolated(2.9), 0, 2.5) == []
    # two other edges must be at most r
    assert triangles_S(_tri_patch(2.0, 2.3, 2.6), 0, 2.2) == []
    assert len(triangles_S(_tri_patch(2.0, 2.3, 2.6), 0, 2.3)) == 1


def test_S_rule_rejects_tied_longest_edges():
    # edges (2, 2.5, 2.5): longest length attained twice
    p = _tri_patch(2.5, 2.5, 2.0)
    assert triangles_S(p, 0, 2.1) == []


def test_S_rule_is_vertex_symmetric(hcp6):
    for t in triangles_S(hcp6, 0, 2.3):
        for v in t.vertices:
            again = classify_S(t.anchored_at(v), 2.3)
            assert again is not None
            assert set(again.distinguished_edge) == set(t.distinguished_edge)


def test_rule_registry():
    assert get_rule(DEFAULT_S_RULE).name == "longest-edge"
    custom = LongestEdgeRule(1e-9)
    assert get_rule(custom) is custom
    with pytest.raises(ValueError):
        get_rule("no-such-rule")


# -- rigid motions ---------------------------------------------------------------


def test_rigid_motion_invariance():
    p = gen_fcc(4.5)
    rng = np.random.default_rng(7)
    for _ in range(3):
        R = random_rotation(rng)
        t = rng.uniform(-10, 10, 3)
        q = PackingPatch(p.centers @ R.T + t, coord_tol=1e-13)
        for i in (0, 1, 2):
            for r in (2.3, 2.5):
                assert len(triangles_T(q, i, r)) == len(triangles_T(p, i, r))
                sp, sq = triangles_S(p, i, r), triangles_S(q, i, r)
                assert [s.key for s in sp] == [s.key for s in sq]
                for a, b in zip(sp, sq):
                    assert abs(a.w.mid - b.w.mid) < 1e-9
        for j in range(1, 12):
            assert abs(p.edge(0, j).mid - q.edge(0, j).mid) < 1e-9


# -- I/O -------------------------------------------------------------------------


def test_save_load_roundtrip():
    p = gen_fcc(3.0)
    buf = io.StringIO()
    save_patch(p, buf)
    doc = json.loads(buf.getvalue())
    assert doc["radius_unit"] == "ball_radius"
    q = load_patch(io.StringIO(buf.getvalue()))
    assert np.array_equal(p.centers, q.centers)
    assert q.coord_tol == p.coord_tol and q.radius == p.radius
    assert np.array_equal(q.lattice.basis, p.lattice.basis)


def test_load_rejects_close_pair():
    doc = {"radius_unit": "ball_radius", "centers": [[0, 0, 0], [5, 0, 0], [1.9, 0, 0]]}
    with pytest.raises(MinDistanceError) as err:
        patch_from_dict(doc)
    assert err.value.pair == (0, 2)
    assert abs(err.value.distance - 1.9) < 1e-12
    assert "0" in str(err.value) and "2" in str(err.value)


def test_load_accepts_empty_and_decimal_strings():
    assert len(patch_from_dict({"radius_unit": "ball_radius", "centers": []})) == 0
    p = patch_from_dict({"centers": [["0", "0", "0"], ["2.0", "0", "0"]]})
    assert p.edge(0, 1) == Interval(2.0)


@pytest.mark.parametrize(
    "doc",
    [
        [],
        {"centers": "x"},
        {"centers": [[0, 0]]},
        {"centers": [[0, 0, "a"]]},
        {"centers": [[0, 0, True]]},
        {"radius_unit": "angstrom", "centers": []},
        {"centers": [], "lattice": {"basis": [[1, 0, 0]], "offsets": [[0, 0, 0]]}},
        {"centers": [[0, 0, float("nan")]]},
    ],
)
def test_malformed_documents(doc):
    with pytest.raises(PatchError):
        patch_from_dict(doc)


def test_load_rejects_bad_json():
    with pytest.raises(PatchError):
        load_patch(io.StringIO("{not json"))


# -- lattices and helpers ----------------------------------------------------------


def test_lattice_cell_volumes():
    assert abs(fcc_lattice().cell_volume - 16 * math.sqrt(2)) < 1e-12
    # 2 balls per HCP cell, same density as FCC: 8 sqrt 2
    assert abs(hcp_lattice().cell_volume - 8 * math.sqrt(2)) < 1e-12


def test_perturbed_lattice_keeps_min_distance():
    lat = perturbed_lattice(fcc_lattice(), 0.01, seed=4, scale=1.01)
    p = gen_lattice_patch(lat, 4.0)
    assert len(p) > 13
    assert not np.allclose(lat.offsets, fcc_lattice().offsets * 1.01)


def test_make_triangle_anchoring():
    p = gen_fcc(2.1)
    t = make_triangle(p, 0, 2, 1)
    assert isinstance(t, Triangle) and t.v0 == 0
    u = t.anchored_at(t.v2)
    assert u.v0 == t.v2 and set(u.vertices) == set(t.vertices)
    assert u.c == p.edge(t.v0, t.v1)
