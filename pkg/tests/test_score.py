import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from keplerscore.interval import SQRT8, Interval
from keplerscore.packing import (
    PackingPatch,
    Triangle,
    fcc_lattice,
    gen_fcc,
    gen_lattice_patch,
    hcp_lattice,
    perturbed_lattice,
    triangles_S,
    triangles_T,
)
from keplerscore.score import (
    NU0,
    PeriodicCensus,
    QuadPoly,
    ScoreParams,
    ScoreReport,
    delta_T,
    epsilon,
    eval_L,
    f_score,
    mu,
    periodic_epsilon_sum,
    triangle_cancellation_residual,
    verify_nu0,
)
from keplerscore.voronoi import NonInteriorError


def _tri(a, b, c, anchored=True):
    return Triangle(0, 1, 2, Interval(a), Interval(b), Interval(c), anchored)


coef = st.floats(min_value=-10, max_value=10, allow_nan=False)
length = st.floats(min_value=2.0, max_value=2.83, allow_nan=False)


# -- L, delta, mu ------------------------------------------------------------------


def test_eval_L_examples():
    sq = QuadPoly(1, 0, 0)
    assert eval_L(sq, Interval(2)) == Interval(4)
    assert eval_L(sq, Interval(-1, 2)).contains(Interval(0, 4))
    assert eval_L(QuadPoly(), Interval(-5, 7)) == Interval(0)


def test_quadpoly_validation_and_sum():
    with pytest.raises(ValueError):
        QuadPoly(math.inf, 0, 0)
    assert QuadPoly(1, 2, 3) + QuadPoly(1, 1, 1) == QuadPoly(2, 3, 4)
    assert QuadPoly(1, 2, 3)(2.0) == 11.0


def test_delta_examples():
    assert delta_T(QuadPoly(1, 0, 0), _tri(2, 2, 2.2)).contains(2 * Fraction(2.2) ** 2 - 8)
    eq = delta_T(QuadPoly(3.7, -1.1, 0.3), _tri(2.3, 2.3, 2.3))
    assert eq.contains(0.0) and eq.width <= 1e-12
    # decimal inputs are the nearest floats; compare against those exactly
    assert delta_T(QuadPoly(0, 1, 0), _tri(2, 2.5, 2.1)).contains(2 * Fraction(2.1) - 2 - Fraction(2.5))
    with pytest.raises(ValueError):
        delta_T(QuadPoly(1, 0, 0), _tri(2, 2, 2, anchored=False))


def test_mu_examples():
    s = Triangle(0, 1, 2, Interval(2), Interval(2), Interval(2.6), True, (1, 2), Interval(2.6))
    assert mu(s, 1) == -1 and mu(s, 2) == -1 and mu(s, 0) == 2
    assert sum(mu(s, v) for v in s.vertices) == 0
    with pytest.raises(ValueError):
        mu(s, 7)
    with pytest.raises(ValueError):
        mu(_tri(2, 2, 2), 0)


def test_residual_examples():
    rng = random.Random(0)
    for _ in range(20):
        L = QuadPoly(rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5))
        res = triangle_cancellation_residual(L, _tri(2, 2.3, 2.6))
        assert res.contains(0.0) and res.width <= 1e-11
    t = _tri(2.4, 2.4, 2.4)
    for v in t.vertices:
        assert delta_T(QuadPoly(1, 1, 1), t.anchored_at(v)).contains(0.0)


@settings(max_examples=300)
@given(coef, coef, coef, length, length, length)
def test_delta_identity_property(q2, q1, q0, a, b, c):
    res = triangle_cancellation_residual(QuadPoly(q2, q1, q0), _tri(a, b, c))
    assert res.contains(0.0) and res.width <= 1e-10


# -- epsilon and f -----------------------------------------------------------------------


def test_fcc_epsilon_zero_for_any_parameters(fcc6):
    rng = random.Random(1)
    for _ in range(10):
        params = ScoreParams(
            QuadPoly(rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-3, 3)),
            rng.uniform(-5, 5),
            rng.uniform(2.0, 2.5),
        )
        t, s = epsilon(fcc6, 0, params)
        assert t.contains(0.0) and t.width <= 1e-10
        assert s.contains(0.0) and s.width <= 1e-10


def test_epsilon_trivial_cases(fcc6):
    single = gen_fcc(1.0)
    assert epsilon(single, 0, ScoreParams()) == (Interval(0), Interval(0))
    t, s = epsilon(fcc6, 0, ScoreParams(M=0.0))
    assert s == Interval(0)


def test_epsilon_linearity():
    # a jittered patch has nonzero correction terms
    lat = perturbed_lattice(fcc_lattice(), 0.05, seed=2, scale=1.05)
    p = gen_lattice_patch(lat, 5.0)
    L1, L2 = QuadPoly(0.3, -1, 2), QuadPoly(-0.7, 0.5, 1)
    r = 2.5
    for i in range(5):
        t1, s1 = epsilon(p, i, ScoreParams(L1, 1.0, r))
        t2, _ = epsilon(p, i, ScoreParams(L2, 1.0, r))
        t12, _ = epsilon(p, i, ScoreParams(L1 + L2, 1.0, r))
        assert t12.overlaps(t1 + t2)
        _, s3 = epsilon(p, i, ScoreParams(L1, 3.0, r))
        assert s3.overlaps(s1 * 3.0)


def test_fcc_equality_case(fcc6):
    rep = f_score(fcc6, 0, ScoreParams())
    assert rep.f.overlaps(NU0)
    assert rep.margin.contains(0.0) and rep.margin.width <= 1e-7
    # report invariants
    assert rep.f == rep.voronoi_volume + rep.epsilon
    assert rep.epsilon == rep.t_term + rep.s_term


def test_fcc_equality_for_many_parameters(fcc6):
    rng = random.Random(5)
    for _ in range(5):
        params = ScoreParams(QuadPoly(rng.uniform(-2, 2), rng.uniform(-2, 2), 0.0), rng.uniform(0, 3), 2.51)
        assert f_score(fcc6, 0, params).margin.contains(0.0)


def test_hcp_origin(hcp6):
    rep = f_score(hcp6, 0, ScoreParams(r=2.5))
    assert rep.voronoi_volume.overlaps(NU0)
    assert rep.t_term.contains(0.0)


def test_non_interior_center_is_refused(fcc6):
    far = int(np.argmax(np.linalg.norm(fcc6.centers, axis=1)))
    with pytest.raises(NonInteriorError):
        f_score(fcc6, far, ScoreParams())


def test_params_validation():
    with pytest.raises(ValueError):
        ScoreParams(r=1.9)
    with pytest.raises(ValueError):
        ScoreParams(r=3.0)
    ScoreParams(r=SQRT8.hi)
    with pytest.raises(ValueError):
        ScoreParams(s_rule="bogus")
    assert ScoreParams().to_dict()["s_rule"] == "longest-edge"


def test_report_record_format(fcc6):
    rep = f_score(fcc6, 0, ScoreParams())
    rec = rep.to_record()
    assert list(rec) == ScoreReport.csv_header()
    assert float(rec["margin_lo"]) == rep.margin.lo


def test_nu0_cross_check():
    assert verify_nu0().overlaps(NU0)
    assert NU0.contains(4 * math.sqrt(2))


# -- mu cancellation on patches ------------------------------------------------------


@pytest.mark.parametrize("which", ["fcc", "hcp", "jittered"])
def test_mu_sums_vanish_on_patches(which, fcc6, hcp6):
    if which == "fcc":
        p, r = fcc6, 2.5
    elif which == "hcp":
        p, r = hcp6, 2.5
    else:
        p, r = gen_lattice_patch(perturbed_lattice(fcc_lattice(), 0.08, seed=9, scale=1.1), 5.0), 2.3
    count = 0
    for i in range(len(p)):
        for s in triangles_S(p, i, r):
            assert sum(mu(s, v) for v in s.vertices) == 0
            count += 1
    assert count > 0


# -- periodic sums -------------------------------------------------------------------------


@pytest.mark.parametrize("lattice", [fcc_lattice(), hcp_lattice()], ids=["fcc", "hcp"])
def test_periodic_sum_vanishes(lattice):
    rng = random.Random(4)
    for _ in range(3):
        params = ScoreParams(
            QuadPoly(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)), rng.uniform(-3, 3), rng.uniform(2, 2.8)
        )
        total = periodic_epsilon_sum(lattice, params)
        assert total.contains(0.0) and total.width <= 1e-8


def test_periodic_sum_vanishes_on_jittered_lattice():
    lat = perturbed_lattice(fcc_lattice(), 0.1, seed=1, scale=1.08)
    census = PeriodicCensus(lat)
    params = ScoreParams(QuadPoly(0.4, -1.3, 0.2), 2.0, 2.6)
    total = census.epsilon_sum(params)
    assert total.contains(0.0) and total.width <= 1e-8
    # the individual terms are genuinely nonzero here
    terms = [census.epsilon(k, params) for k in range(4)]
    assert any(abs(t.mid) > 1e-3 or abs(s.mid) > 1e-3 for t, s in terms)


def test_periodic_census_matches_patch_census(fcc6):
    census = PeriodicCensus(fcc_lattice())
    for r in (2.0, 2.5, SQRT8.hi):
        assert len(census.triangles_T(0, r)) == len(triangles_T(fcc6, 0, r))
    assert len(census.triangles_S(0, 2.5)) == 36
