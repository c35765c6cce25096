"""Acceptance criteria 1-10, one PASS/FAIL line each.

Every test records its verdict line and then asserts it.  The lines are
printed as an "acceptance criteria" section at the end of the pytest run
(see ``conftest.py``), so they also show under output capture.
"""

from __future__ import annotations

import io
import json
import math
import random
import sys
import time

import pytest

from keplerscore.cli import main as cli_main
from keplerscore.harness import Config
from keplerscore.harness.runs import mu_residuals
from keplerscore.interval import SQRT8, Interval
from keplerscore.packing import (
    Triangle,
    fcc_lattice,
    gen_fcc,
    gen_hcp,
    gen_lattice_patch,
    perturbed_lattice,
    triangles_T,
)
from keplerscore.prover import (
    FailureReport,
    ProofCertificate,
    ProverOptions,
    box,
    parse,
    prove_lower_bound,
    replay_certificate,
)
from keplerscore.score import (
    PeriodicCensus,
    QuadPoly,
    ScoreParams,
    f_score,
    triangle_cancellation_residual,
)
from keplerscore.voronoi import cayley_menger_volume

from oracles import (
    brute_triangles,
    containment_suite,
    random_box,
    random_expr,
    sampled_min,
    tampered,
)

FOUR_SQRT2 = 5.65685424949238019520
DENSITY_5DP = 0.74048  # pi / sqrt(18) to five places


VERDICTS: dict[int, str] = {}


def verdict(n: int, ok: bool, detail: str) -> None:
    VERDICTS[n] = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"


def cli(*argv) -> tuple[int, str]:
    out, err = io.StringIO(), io.StringIO()
    code = cli_main([str(a) for a in argv], out, err)
    return code, out.getvalue()


def _origin_volume(tmp_path, kind: str) -> tuple[Interval, float, int]:
    t = time.perf_counter()
    path = tmp_path / f"{kind}6.json"
    code_gen, _ = cli("gen", kind, 6, "-o", path)
    code, out = cli("score", path, "--json")
    elapsed = time.perf_counter() - t
    rec = next(r for r in json.loads(out)["reports"] if r["center"] == 0)
    vol = Interval(float(rec["voronoi_volume_lo"]), float(rec["voronoi_volume_hi"]))
    return vol, elapsed, max(code_gen, code)


def test_c01_fcc_voronoi_volume(tmp_path):
    vol, elapsed, code = _origin_volume(tmp_path, "fcc")
    density = (4.0 * math.pi / 3.0) / vol.mid
    ok = (
        code == 0
        and vol.contains(FOUR_SQRT2)
        and vol.width <= 1e-8
        and abs(density - DENSITY_5DP) <= 1e-5
        and elapsed <= 5.0
    )
    verdict(1, ok, f"volume {vol} width {vol.width:.2e} density {density:.7f} time {elapsed:.2f}s")
    assert ok


def test_c02_hcp_voronoi_volume(tmp_path):
    vol, elapsed, code = _origin_volume(tmp_path, "hcp")
    ok = code == 0 and vol.contains(FOUR_SQRT2) and vol.width <= 1e-8
    verdict(2, ok, f"volume {vol} width {vol.width:.2e} time {elapsed:.2f}s")
    assert ok


def test_c03_fcc_equality_case():
    p = gen_fcc(6.0)
    params = Config().params()
    assert params.r == 2.51
    rep = f_score(p, 0, params)
    ok = (
        rep.margin.contains(0.0)
        and rep.margin.width <= 1e-7
        and all(t.contains(0.0) and t.width <= 1e-10 for t in (rep.t_term, rep.s_term))
    )
    verdict(
        3,
        ok,
        f"margin {rep.margin} (width {rep.margin.width:.2e}); "
        f"t_term width {rep.t_term.width:.1e}; s_term width {rep.s_term.width:.1e}",
    )
    assert ok


def _random_triangle(rng: random.Random) -> tuple[float, float, float]:
    while True:
        a, b, c = (rng.uniform(2.0, 2.83) for _ in range(3))
        if a < b + c and b < a + c and c < a + b:
            return a, b, c


def test_c04_delta_cancellation():
    rng = random.Random(4)
    tris = [_random_triangle(rng) for _ in range(1000)]
    Ls = [QuadPoly(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(-10, 10)) for _ in range(100)]
    worst = 0.0
    bad = 0
    for a, b, c in tris:
        t = Triangle(0, 1, 2, Interval(a), Interval(b), Interval(c), True)
        for L in Ls:
            res = triangle_cancellation_residual(L, t)
            worst = max(worst, res.width)
            if not (res.contains(0.0) and res.width <= 1e-10):
                bad += 1
    ok = bad == 0
    verdict(4, ok, f"{len(tris) * len(Ls)} residuals, {bad} bad, max width {worst:.2e}")
    assert ok


def test_c05_mu_cancellation():
    patches = {
        "fcc": gen_fcc(6.0),
        "hcp": gen_hcp(6.0),
        "jittered": gen_lattice_patch(perturbed_lattice(fcc_lattice(), 0.08, seed=9, scale=1.1), 5.0),
    }
    counts, bad = {}, 0
    for name, p in patches.items():
        for r in (2.3, 2.51, 2.8):
            res, problems = mu_residuals(p, ScoreParams(r=r))
            counts[name] = counts.get(name, 0) + len(res)
            bad += len(problems) + sum(1 for _, iv in res if iv != Interval(0.0))
    ok = bad == 0 and all(counts.values())
    verdict(5, ok, f"S-triangles checked {counts}, nonzero sums {bad}")
    assert ok


def test_c06_periodic_epsilon_sum():
    census = PeriodicCensus(fcc_lattice())
    rng = random.Random(6)
    worst = 0.0
    ok = len(census.lattice.offsets) == 4
    for _ in range(20):
        params = ScoreParams(
            QuadPoly(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)),
            rng.uniform(-5, 5),
            rng.uniform(2.0, SQRT8.lo),
        )
        total = census.epsilon_sum(params)
        worst = max(worst, abs(total.lo), abs(total.hi))
        ok = ok and -1e-8 <= total.lo and total.hi <= 1e-8
    verdict(6, ok, f"20 draws on the 4-center cell, max |bound| {worst:.2e}")
    assert ok


def test_c07_prover_soundness():
    rng = random.Random(2024)
    n_cert = n_undecided = n_leaves = n_tamper = n_rejected = 0
    worst_gap = math.inf
    ok = True
    for k in range(50):
        dim = rng.randint(1, 4)
        e, d = random_expr(rng, dim, 4), random_box(rng, dim)
        m, _ = sampled_min(e, d, 5000, seed=k)
        target = m - 0.01 * (abs(m) + 1)
        res = prove_lower_bound(e, d, target, ProverOptions(max_leaves=3000))
        if isinstance(res, FailureReport):
            n_undecided += 1
            continue
        n_cert += 1
        n_leaves += res.n_leaves
        low, _ = sampled_min(e, d, 100_000, seed=1000 + k)
        worst_gap = min(worst_gap, low - res.goal)
        ok = ok and low >= res.goal - 1e-12
        ok = ok and bool(replay_certificate(e, res))
        for path, _ in res.root.leaves():
            for how in ("bound", "box"):
                n_tamper += 1
                n_rejected += not replay_certificate(e, tampered(res, path, how))
    ok = ok and n_cert > 0 and n_rejected == n_tamper
    verdict(
        7,
        ok,
        f"{n_cert} certificates ({n_leaves} leaves), {n_undecided} undecided; "
        f"min sample-minus-bound {worst_gap:.3g}; {n_rejected}/{n_tamper} tamperings rejected",
    )
    assert ok


def test_c08_prover_sharpness():
    e = parse("(sub (mul 2 (var 2)) (add (var 0) (var 1)))")
    d = box((2, 2.51), (2, 2.51), (2, 2.51))
    t = time.perf_counter()
    cert = prove_lower_bound(e, d, -1.03)
    elapsed = time.perf_counter() - t
    fail = prove_lower_bound(e, d, -1.01)
    ok = (
        isinstance(cert, ProofCertificate)
        and cert.n_leaves <= 10_000
        and elapsed <= 10.0
        and bool(replay_certificate(e, cert))
        and isinstance(fail, FailureReport)
    )
    leaves = cert.n_leaves if isinstance(cert, ProofCertificate) else None
    reason = fail.reason if isinstance(fail, FailureReport) else "proven"
    verdict(8, ok, f"-1.03: {leaves} leaves in {elapsed:.3f}s; -1.01: undecided ({reason})")
    assert ok


def test_c09_triangle_census():
    p = gen_fcc(6.0)
    tris = triangles_T(p, 0, 2.5)
    mine = {frozenset(t.vertices) for t in tris}
    oracle = brute_triangles(p.centers, 0, 2.5)
    ok = len(tris) == 24 and mine == oracle
    verdict(9, ok, f"triangles_T = {len(tris)}, brute force = {len(oracle)}, sets equal {mine == oracle}")
    assert ok


def test_c10_interval_kernel():
    t = time.perf_counter()
    failures = containment_suite(100_000, seed=10)
    elapsed = time.perf_counter() - t
    v = cayley_menger_volume(2, 2, 2, 2, 2, 2)
    cm_ok = v.contains(2 * math.sqrt(2) / 3) and v.width <= 1e-10
    ok = not failures and cm_ok
    verdict(10, ok, f"9 ops x 1e5 samples, {len(failures)} failures ({elapsed:.1f}s); CM volume {v} width {v.width:.1e}")
    assert ok


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
