"""Run configuration: a flat ``key = value`` text file plus CLI overrides."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace
from pathlib import Path

from ..interval import SQRT8
from ..packing import TOL_GEOM, LongestEdgeRule, S_RULES
from ..prover.core import ProverOptions
from ..score import QuadPoly, ScoreParams
from ..voronoi import DEFAULT_CUTOFF, VERTEX_HALFWIDTH


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Config:
    # score parameters
    q2: float = 0.0
    q1: float = -1.0
    q0: float = SQRT8.mid
    M: float = 1.0
    r: float = 2.51
    s_rule: str = "longest-edge"
    # geometry
    cutoff: float = DEFAULT_CUTOFF
    tol_geom: float = TOL_GEOM
    vertex_halfwidth: float = VERTEX_HALFWIDTH
    # cancellation checks
    identity_tol: float = 1e-10
    eps_sum_tol: float = 1e-8
    # prover
    slack: float = 1e-9
    max_depth: int = 60
    max_leaves: int = 10_000
    use_lp: bool = True

    def params(self) -> ScoreParams:
        rule = self.s_rule
        if rule == LongestEdgeRule.name and self.tol_geom != TOL_GEOM:
            rule = LongestEdgeRule(self.tol_geom)
        try:
            return ScoreParams(QuadPoly(self.q2, self.q1, self.q0), self.M, self.r, rule)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def prover_options(self) -> ProverOptions:
        return ProverOptions(self.max_depth, self.max_leaves, self.use_lp, self.slack)

    def updated(self, **overrides) -> "Config":
        clean = {k: v for k, v in overrides.items() if v is not None}
        return _coerce(replace(self, **clean))


_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _coerce(cfg: Config) -> Config:
    values = {}
    for f in fields(Config):
        v = getattr(cfg, f.name)
        typ = type(getattr(Config(), f.name))
        try:
            if typ is bool and isinstance(v, str):
                lv = v.strip().lower()
                if lv not in _TRUE | _FALSE:
                    raise ValueError(v)
                v = lv in _TRUE
            elif typ is int:
                v = int(v)
            elif typ is float:
                v = float(v)
        except ValueError:
            raise ConfigError(f"bad value for {f.name}: {v!r}") from None
        values[f.name] = v
    if values["s_rule"] not in S_RULES:
        raise ConfigError(f"unknown s_rule {values['s_rule']!r}")
    return Config(**values)


def parse_config(text: str, base: Config | None = None) -> Config:
    known = {f.name for f in fields(Config)}
    overrides = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {n}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {n}: unknown key {key!r}")
        overrides[key] = value
    return (base or Config()).updated(**overrides)


def load_config(path: str | Path | None) -> Config:
    if path is None:
        return Config()
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {str(path)!r}: {exc.strerror}") from None
    return parse_config(text)


def dump_config(cfg: Config) -> str:
    return "".join(f"{f.name} = {getattr(cfg, f.name)!r}\n".replace("'", "") for f in fields(Config))
