"""Interval branch-and-bound prover for lower bounds of expressions on boxes."""

from .core import (
    AffineFunction,
    BoxDomain,
    CertificateFormatError,
    DomainError,
    FailureReport,
    Node,
    ProofCertificate,
    ProverOptions,
    PruneResult,
    ReplayResult,
    affine_enclosure,
    affine_minimum,
    box,
    lp_prune,
    prove_lower_bound,
    replay_certificate,
)
from .expr import (
    Expr,
    ExprParseError,
    NotDifferentiableError,
    cm_vol,
    const,
    delta_expr,
    emax,
    emin,
    float_eval,
    gradient_eval,
    interval_eval,
    numpy_eval,
    parse,
    quad_expr,
    sqrt,
    to_prefix,
    var,
)
from .lp import LPResult, feasible, solve_lp

__all__ = [name for name in dir() if not name.startswith("_")]
