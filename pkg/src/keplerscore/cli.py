"""Command line entry point.

Exit codes: 0 pass / proven, 1 fail / undecided / empty result,
2 usage or parse error, 3 internal invariant violation.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from typing import Sequence, TextIO

from .harness.config import ConfigError, load_config
from .harness.runs import (
    EXIT_FAIL,
    EXIT_INTERNAL,
    EXIT_OK,
    EXIT_USAGE,
    SEARCH_NOTICE,
    PARAM_KEYS,
    ScoreRun,
    SearchSpec,
    SearchSpecError,
    load_domain,
    load_expr,
    replay,
    resolve_packing,
    run_cancellation,
    run_prove,
    run_score,
    run_search,
)
from .interval import IntervalDomainError
from .packing import PatchError, gen_fcc, gen_hcp, save_patch
from .prover.core import CertificateFormatError, DomainError, ProofCertificate
from .prover.expr import ExprParseError
from .score import ScoreReport

USAGE_ERRORS = (
    ConfigError,
    PatchError,
    SearchSpecError,
    ExprParseError,
    DomainError,
    CertificateFormatError,
    IntervalDomainError,
)


class UsageError(Exception):
    pass


def _add_param_flags(sp: argparse.ArgumentParser) -> None:
    g = sp.add_argument_group("score parameters (override the config file)")
    for k in ("q2", "q1", "q0", "M", "r"):
        g.add_argument(f"--{k}", type=float)
    g.add_argument("--s-rule", dest="s_rule")
    g.add_argument("--cutoff", type=float)
    g.add_argument("--tol-geom", dest="tol_geom", type=float)


def _add_output_flags(sp: argparse.ArgumentParser) -> None:
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--json", action="store_true", help="structured JSON output")
    g.add_argument("--csv", action="store_true", help="CSV table output")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="keplerscore", description="Voronoi-volume scoring of sphere packings.")
    ap.add_argument("--config", help="flat 'key = value' config file")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate an FCC or HCP patch")
    g.add_argument("kind", choices=["fcc", "hcp"])
    g.add_argument("radius", type=float)
    g.add_argument("-o", "--output", help="write the patch here instead of stdout")

    s = sub.add_parser("score", help="score every interior center of a patch")
    s.add_argument("patch", help="patch file, or fcc[:R] / hcp[:R]")
    _add_param_flags(s)
    _add_output_flags(s)

    c = sub.add_parser("cancel-check", help="check the cancellation identities on a patch")
    c.add_argument("patch")
    _add_param_flags(c)
    c.add_argument("--json", action="store_true")

    se = sub.add_parser("search", help="explore (L, M, r) over sample packings")
    se.add_argument("spec", help="JSON search spec")
    se.add_argument("--cutoff", type=float)
    se.add_argument("--s-rule", dest="s_rule")
    _add_output_flags(se)

    pr = sub.add_parser("prove", help="certify a lower bound of an expression on a box")
    pr.add_argument("expr", help="file with a prefix expression")
    pr.add_argument("domain", help="JSON domain: {'bounds': [[lo, hi], ...]}")
    pr.add_argument("--target", type=float, required=True)
    pr.add_argument("-o", "--output", help="certificate / failure report path (default stdout)")
    pr.add_argument("--max-depth", dest="max_depth", type=int)
    pr.add_argument("--max-leaves", dest="max_leaves", type=int)
    pr.add_argument("--slack", type=float)
    pr.add_argument("--no-lp", dest="use_lp", action="store_false", default=None)

    rp = sub.add_parser("replay", help="re-check a certificate")
    rp.add_argument("expr")
    rp.add_argument("certificate")
    rp.add_argument("--target", type=float)
    return ap


def _config(args):
    keys = ("q2", "q1", "q0", "M", "r", "s_rule", "cutoff", "tol_geom", "max_depth", "max_leaves", "slack", "use_lp")
    return load_config(args.config).updated(**{k: getattr(args, k, None) for k in keys})


def _fmt(iv) -> str:
    return f"[{iv.lo!r}, {iv.hi!r}]"


def _cmd_gen(args, out: TextIO) -> int:
    if args.radius <= 0:
        raise UsageError("radius must be positive")
    p = (gen_fcc if args.kind == "fcc" else gen_hcp)(args.radius)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            save_patch(p, fh)
        out.write(f"wrote {len(p)} centers to {args.output}\n")
    else:
        save_patch(p, out)
    return EXIT_OK


def _print_score(run: ScoreRun, args, out: TextIO) -> None:
    if args.json:
        doc = {"summary": run.summary(), "reports": [r.to_record() for r in run.reports]}
        out.write(json.dumps(doc, indent=1) + "\n")
        return
    if args.csv:
        w = csv.DictWriter(out, ScoreReport.csv_header(), lineterminator="\n")
        w.writeheader()
        for r in run.reports:
            w.writerow(r.to_record())
        return
    for r in run.reports:
        out.write(
            f"center {r.center}: vol {_fmt(r.voronoi_volume)} eps {_fmt(r.epsilon)} margin {_fmt(r.margin)}\n"
        )
    s = run.summary()
    if run.empty:
        out.write(f"no interior centers among {run.n_centers} (empty result)\n")
        return
    out.write(f"min margin.lo {s['min_margin_lo']} at center {s['min_margin_center']}\n")
    d = run.density
    flag = "consistent with" if run.density_consistent else "EXCEEDS"
    out.write(f"density {_fmt(d)} ({flag} pi/sqrt(18) = 0.74048...; informational)\n")
    out.write(f"status: {run.status}\n")


def _cmd_score(args, out: TextIO) -> int:
    cfg = _config(args)
    run = run_score(resolve_packing(args.patch, cfg.tol_geom), cfg)
    _print_score(run, args, out)
    return run.exit_code


def _cmd_cancel(args, out: TextIO) -> int:
    cfg = _config(args)
    rep = run_cancellation(resolve_packing(args.patch, cfg.tol_geom), cfg, args.patch)
    if args.json:
        out.write(json.dumps(rep.to_dict(), indent=1) + "\n")
    else:
        for r in rep.results:
            res = "-" if r.residual is None else _fmt(r.residual)
            verdict = "PASS" if r.passed else "FAIL"
            out.write(f"{verdict} {r.name}: {r.count} checked, residual hull {res}, max width {r.max_width!r}")
            out.write(f" ({r.note})\n" if r.note else "\n")
        for n in rep.notices:
            out.write(f"notice: {n}\n")
    return EXIT_OK if rep.passed else EXIT_FAIL


def _cmd_search(args, out: TextIO) -> int:
    cfg = _config(args)
    rows = run_search(SearchSpec.load(args.spec), cfg)
    if args.json:
        out.write(json.dumps({"notice": SEARCH_NOTICE, "rows": [r.to_dict() for r in rows]}, indent=1) + "\n")
    elif args.csv:
        header = ["index", *PARAM_KEYS, "min_margin_lo", "worst_packing", "worst_center"]
        w = csv.DictWriter(out, header, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r.to_dict())
    else:
        out.write(f"# {SEARCH_NOTICE}\n")
        out.write("rank  " + "  ".join(f"{k:>10}" for k in PARAM_KEYS) + "  min_margin_lo  worst\n")
        for rank, r in enumerate(rows, 1):
            vals = "  ".join(f"{r.point[k]:>10.6g}" for k in PARAM_KEYS)
            out.write(f"{rank:>4}  {vals}  {r.min_margin_lo:>13.6g}  {r.packing}:{r.center}\n")
    return EXIT_OK


def _cmd_prove(args, out: TextIO) -> int:
    cfg = _config(args)
    e = load_expr(args.expr)
    d = load_domain(args.domain)
    res = run_prove(e, d, args.target, cfg.prover_options())
    proven = isinstance(res, ProofCertificate)
    text = res.dumps() if proven else json.dumps(res.to_dict(), indent=1)
    if args.output:
        with open(args.output, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
        if proven:
            out.write(f"proven: {res.n_leaves} leaves, depth {res.depth}; certificate in {args.output}\n")
        else:
            out.write(f"undecided ({res.reason}); report in {args.output}\n")
    else:
        out.write(text + "\n")
    return EXIT_OK if proven else EXIT_FAIL


def _cmd_replay(args, out: TextIO) -> int:
    e = load_expr(args.expr)
    try:
        with open(args.certificate, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {args.certificate!r}: {exc.strerror}") from None
    res = replay(e, text, args.target)
    if res.ok:
        out.write("replay: ok\n")
        return EXIT_OK
    out.write("replay: FAILED\n")
    for path, msg in res.errors[:20]:
        out.write(f"  node {list(path)}: {msg}\n")
    return EXIT_FAIL


_COMMANDS = {
    "gen": _cmd_gen,
    "score": _cmd_score,
    "cancel-check": _cmd_cancel,
    "search": _cmd_search,
    "prove": _cmd_prove,
    "replay": _cmd_replay,
}


def main(argv: Sequence[str] | None = None, out: TextIO | None = None, err: TextIO | None = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return _COMMANDS[args.command](args, out)
    except (UsageError, *USAGE_ERRORS) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE
    except Exception as exc:  # anything else is a bug
        err.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
