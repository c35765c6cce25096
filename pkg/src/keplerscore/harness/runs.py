"""Experiment runs behind the CLI: scoring, cancellation checks, search, proving.

Everything here runs sequentially; each run's output is ordered by center
index or parameter order so repeated runs print identical text.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from ..interval import PI, SQRT2, SQRT8, Interval, iv_sum
from ..packing import (
    PackingPatch,
    PatchError,
    classify_S,
    gen_fcc,
    gen_hcp,
    load_patch,
    triangles_S,
    triangles_T,
)
from ..prover.core import (
    BoxDomain,
    DomainError,
    FailureReport,
    ProofCertificate,
    ProverOptions,
    ReplayResult,
    prove_lower_bound,
    replay_certificate,
)
from ..prover.expr import Expr, parse
from ..score import (
    NU0,
    PeriodicCensus,
    QuadPoly,
    ScoreParams,
    ScoreReport,
    f_score,
    mu,
    triangle_cancellation_residual,
)
from ..voronoi import cell_volume, voronoi_cell
from .config import Config

# pi / sqrt(18) = pi / (3 sqrt 2)
KEPLER_DENSITY = PI / (SQRT2 * 3.0)

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3


# ---------------------------------------------------------------------------
# Packings
# ---------------------------------------------------------------------------


def resolve_packing(name: str, tol_geom: float | None = None) -> PackingPatch:
    """``fcc`` / ``hcp`` (radius 6), ``fcc:R`` / ``hcp:R``, or a patch file."""
    kind, _, radius = name.partition(":")
    if kind in ("fcc", "hcp") and not Path(name).exists():
        try:
            rad = float(radius) if radius else 6.0
        except ValueError:
            raise PatchError(f"bad patch radius in {name!r}") from None
        return (gen_fcc if kind == "fcc" else gen_hcp)(rad)
    try:
        with open(name, encoding="utf-8") as fh:
            return load_patch(fh, tol_geom) if tol_geom is not None else load_patch(fh)
    except OSError as exc:
        raise PatchError(f"cannot read patch {name!r}: {exc.strerror}") from None


@dataclass
class InteriorVolumes:
    """Interior centers of a patch with their cell volumes (parameter-free)."""

    centers: list[int]
    volumes: dict[int, Interval]

    @classmethod
    def compute(cls, p: PackingPatch, cfg: Config) -> "InteriorVolumes":
        centers, vols = [], {}
        for i in range(len(p)):
            if p.interior_flags is not None and not p.interior_flags[i]:
                continue
            cell = voronoi_cell(p, i, cfg.cutoff, cfg.vertex_halfwidth)
            if cell.interior:
                centers.append(i)
                vols[i] = cell_volume(cell)
        return cls(centers, vols)


# ---------------------------------------------------------------------------
# score
# ---------------------------------------------------------------------------


@dataclass
class ScoreRun:
    params: ScoreParams
    reports: list[ScoreReport]
    n_centers: int

    @property
    def empty(self) -> bool:
        return not self.reports

    @property
    def worst(self) -> ScoreReport | None:
        if not self.reports:
            return None
        return min(self.reports, key=lambda rep: (rep.margin.lo, rep.center))

    @property
    def density(self) -> Interval | None:
        """Ball volume over total cell volume, across the interior cells."""
        if not self.reports:
            return None
        total = iv_sum(rep.voronoi_volume for rep in self.reports)
        return PI * (4.0 * len(self.reports)) / 3.0 / total

    @property
    def density_consistent(self) -> bool | None:
        d = self.density
        return None if d is None else d.lo <= KEPLER_DENSITY.hi

    @property
    def violated(self) -> list[int]:
        """Centers whose margin is certainly negative."""
        return [rep.center for rep in self.reports if rep.margin.hi < 0]

    @property
    def status(self) -> str:
        if self.empty:
            return "empty"
        return "violation" if self.violated else "ok"

    @property
    def exit_code(self) -> int:
        return EXIT_OK if self.status == "ok" else EXIT_FAIL

    def summary(self) -> dict:
        w = self.worst
        d = self.density
        return {
            "status": self.status,
            "centers": self.n_centers,
            "interior_centers": len(self.reports),
            "min_margin_lo": None if w is None else repr(w.margin.lo),
            "min_margin_center": None if w is None else w.center,
            "certainly_negative": self.violated,
            "density_lo": None if d is None else repr(d.lo),
            "density_hi": None if d is None else repr(d.hi),
            "density_within_kepler_bound": self.density_consistent,
            "params": self.params.to_dict(),
        }


def run_score(
    p: PackingPatch, cfg: Config, volumes: InteriorVolumes | None = None, params: ScoreParams | None = None
) -> ScoreRun:
    params = params or cfg.params()
    volumes = volumes or InteriorVolumes.compute(p, cfg)
    reports = [f_score(p, i, params, cfg.cutoff, volumes.volumes[i]) for i in volumes.centers]
    return ScoreRun(params, reports, len(p))


# ---------------------------------------------------------------------------
# cancel-check
# ---------------------------------------------------------------------------


@dataclass
class IdentityResult:
    name: str
    count: int
    residual: Interval | None  # hull of all residuals
    max_width: float
    tol: float
    passed: bool
    note: str = ""
    worst: object = None

    def to_dict(self) -> dict:
        return {
            "identity": self.name,
            "count": self.count,
            "residual_lo": None if self.residual is None else repr(self.residual.lo),
            "residual_hi": None if self.residual is None else repr(self.residual.hi),
            "max_width": repr(self.max_width),
            "tol": repr(self.tol),
            "pass": self.passed,
            "note": self.note,
        }


def _judge(name: str, residuals: Sequence[tuple[object, Interval]], tol: float) -> IdentityResult:
    if not residuals:
        return IdentityResult(name, 0, None, 0.0, tol, True, "no triangles")
    hull = Interval.hull(*(iv for _, iv in residuals))
    bad = [(k, iv) for k, iv in residuals if not (iv.contains(0.0) and iv.width <= tol)]
    max_w = max(iv.width for _, iv in residuals)
    return IdentityResult(name, len(residuals), hull, max_w, tol, not bad, worst=bad[0][0] if bad else None)


@dataclass
class CancellationReport:
    patch_id: str
    params: ScoreParams
    delta: IdentityResult
    mu: IdentityResult
    eps_sum: IdentityResult | None
    notices: list[str] = field(default_factory=list)

    @property
    def results(self) -> list[IdentityResult]:
        return [r for r in (self.delta, self.mu, self.eps_sum) if r is not None]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def to_dict(self) -> dict:
        return {
            "patch": self.patch_id,
            "params": self.params.to_dict(),
            "identities": [r.to_dict() for r in self.results],
            "pass": self.passed,
            "notices": self.notices,
        }


def delta_residuals(p: PackingPatch, params: ScoreParams) -> list[tuple[tuple, Interval]]:
    seen: dict[tuple, Interval] = {}
    for i in range(len(p)):
        for t in triangles_T(p, i, params.r):
            if t.key not in seen:
                seen[t.key] = triangle_cancellation_residual(params.L, t)
    return sorted(seen.items())


def mu_residuals(p: PackingPatch, params: ScoreParams) -> tuple[list[tuple[tuple, Interval]], list[str]]:
    """Three-anchor ``mu`` sums of every S-triangle, plus membership mismatches."""
    seen: dict[tuple, Interval] = {}
    problems = []
    for i in range(len(p)):
        for s in triangles_S(p, i, params.r, params.s_rule):
            if s.key in seen:
                continue
            total = 0
            for v in s.vertices:
                again = classify_S(s.anchored_at(v), params.r, params.s_rule)
                if again is None or set(again.distinguished_edge) != set(s.distinguished_edge):
                    problems.append(f"S-triangle {s.key} classified differently at anchor {v}")
                    continue
                total += mu(again, v)
            seen[s.key] = Interval(float(total))
    return sorted(seen.items()), problems


def run_cancellation(p: PackingPatch, cfg: Config, patch_id: str = "patch", params: ScoreParams | None = None):
    params = params or cfg.params()
    notices = []
    delta = _judge("delta", delta_residuals(p, params), cfg.identity_tol)
    mres, problems = mu_residuals(p, params)
    mu_res = _judge("mu", mres, 0.0)
    if problems:
        mu_res.passed = False
        mu_res.note = problems[0]
    eps = None
    if p.lattice is None:
        notices.append("patch has no lattice: periodic eps-sum check skipped")
    else:
        total = PeriodicCensus(p.lattice).epsilon_sum(params)
        eps = _judge("eps_sum", [("sum", total)], 2.0 * cfg.eps_sum_tol)
        eps.passed = eps.passed and -cfg.eps_sum_tol <= total.lo and total.hi <= cfg.eps_sum_tol
    return CancellationReport(patch_id, params, delta, mu_res, eps, notices)


# ---------------------------------------------------------------------------
# search
# ---------------------------------------------------------------------------


class SearchSpecError(ValueError):
    pass


PARAM_KEYS = ("q2", "q1", "q0", "M", "r")
_SEARCH_DEFAULTS = {"q2": 0.0, "q1": 0.0, "q0": 0.0, "M": 0.0, "r": 2.51}


@dataclass(frozen=True)
class SearchSpec:
    """Parameter ranges, sample packings and a strategy.

    ``grid``: each key holds a list of values (or one number).
    ``random``: each key holds ``[lo, hi]`` (or one number); ``count`` points
    are drawn with ``numpy.random.default_rng(seed)``.
    Unspecified keys take the fixed values in ``_SEARCH_DEFAULTS``; these are
    arbitrary starting points, not recommended parameters.
    """

    values: dict
    packings: tuple[str, ...]
    strategy: str = "grid"
    seed: int = 0
    count: int = 1

    @classmethod
    def from_dict(cls, d: dict) -> "SearchSpec":
        if not isinstance(d, dict):
            raise SearchSpecError("search spec must be a JSON object")
        unknown = set(d) - set(PARAM_KEYS) - {"packings", "strategy", "seed", "count"}
        if unknown:
            raise SearchSpecError(f"unknown keys: {sorted(unknown)}")
        strategy = d.get("strategy", "grid")
        if strategy not in ("grid", "random"):
            raise SearchSpecError(f"unknown strategy {strategy!r}")
        packings = d.get("packings", ["fcc", "hcp"])
        if not isinstance(packings, list) or not packings or not all(isinstance(x, str) for x in packings):
            raise SearchSpecError("'packings' must be a nonempty list of names")
        try:
            seed = int(d.get("seed", 0))
            count = int(d.get("count", 1))
        except (TypeError, ValueError):
            raise SearchSpecError("seed and count must be integers") from None
        if count < 1:
            raise SearchSpecError("count must be at least 1")
        values = {}
        for k in PARAM_KEYS:
            v = d.get(k, _SEARCH_DEFAULTS[k])
            if isinstance(v, (int, float)) and not isinstance(v, bool):
                v = [float(v)] if strategy == "grid" else [float(v), float(v)]
            if not isinstance(v, list) or not v or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in v
            ):
                raise SearchSpecError(f"{k}: expected a number or a nonempty list of numbers")
            v = [float(x) for x in v]
            if strategy == "random":
                if len(v) != 2 or v[0] > v[1]:
                    raise SearchSpecError(f"{k}: random strategy needs [lo, hi] with lo <= hi")
            if k == "r" and (min(v) < 2.0 or max(v) > SQRT8.hi):
                raise SearchSpecError("r must lie in [2, sqrt(8)]")
            values[k] = tuple(v)
        return cls(values, tuple(packings), strategy, seed, count)

    @classmethod
    def load(cls, path: str) -> "SearchSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                return cls.from_dict(json.load(fh))
        except OSError as exc:
            raise SearchSpecError(f"cannot read {path!r}: {exc.strerror}") from None
        except json.JSONDecodeError as exc:
            raise SearchSpecError(f"malformed search spec: {exc}") from None

    def points(self) -> list[dict]:
        if self.strategy == "grid":
            combos = itertools.product(*(self.values[k] for k in PARAM_KEYS))
            return [dict(zip(PARAM_KEYS, c)) for c in combos]
        rng = np.random.default_rng(self.seed)
        out = []
        for _ in range(self.count):
            out.append({k: float(rng.uniform(*self.values[k])) for k in PARAM_KEYS})
        return out


@dataclass
class SearchRow:
    index: int
    point: dict
    min_margin_lo: float
    packing: str | None
    center: int | None

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            **{k: repr(self.point[k]) for k in PARAM_KEYS},
            "min_margin_lo": repr(self.min_margin_lo),
            "worst_packing": self.packing,
            "worst_center": self.center,
        }


SEARCH_NOTICE = "numerical evidence from finite patches; not a proof"


def run_search(spec: SearchSpec, cfg: Config) -> list[SearchRow]:
    """Rank parameter points by the minimum interior ``margin.lo`` (best first)."""
    patches = [(name, resolve_packing(name, cfg.tol_geom)) for name in spec.packings]
    volumes = [InteriorVolumes.compute(p, cfg) for _, p in patches]
    rows = []
    for idx, pt in enumerate(spec.points()):
        params = ScoreParams(QuadPoly(pt["q2"], pt["q1"], pt["q0"]), pt["M"], pt["r"], cfg.params().s_rule)
        best = (math.inf, None, None)
        for (name, p), vols in zip(patches, volumes):
            run = run_score(p, cfg, vols, params)
            w = run.worst
            if w is not None and w.margin.lo < best[0]:
                best = (w.margin.lo, name, w.center)
        rows.append(SearchRow(idx, pt, *best))
    rows.sort(key=lambda row: (-row.min_margin_lo, row.index))
    return rows


# ---------------------------------------------------------------------------
# prove / replay
# ---------------------------------------------------------------------------


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise DomainError(f"cannot read {path!r}: {exc.strerror}") from None


def load_expr(path: str) -> Expr:
    return parse(_read(path))


def load_domain(path: str) -> BoxDomain:
    try:
        doc = json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise DomainError(f"malformed domain document: {exc}") from None
    if isinstance(doc, list):
        doc = {"bounds": doc}
    if not isinstance(doc, dict):
        raise DomainError("domain document must be an object or a list of [lo, hi] pairs")
    return BoxDomain.from_dict(doc)


def run_prove(
    e: Expr, d: BoxDomain, target: float, opts: ProverOptions
) -> ProofCertificate | FailureReport:
    return prove_lower_bound(e, d, target, opts)


def replay(e: Expr, cert_text: str, target: float | None = None) -> ReplayResult:
    return replay_certificate(e, ProofCertificate.loads(cert_text), target)


__all__ = [
    "CancellationReport",
    "EXIT_FAIL",
    "EXIT_INTERNAL",
    "EXIT_OK",
    "EXIT_USAGE",
    "IdentityResult",
    "InteriorVolumes",
    "KEPLER_DENSITY",
    "NU0",
    "SEARCH_NOTICE",
    "ScoreRun",
    "SearchRow",
    "SearchSpec",
    "SearchSpecError",
    "load_domain",
    "load_expr",
    "replay",
    "resolve_packing",
    "run_cancellation",
    "run_prove",
    "run_score",
    "run_search",
]
