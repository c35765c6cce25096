"""Branch-and-bound lower-bound prover with replayable certificates.

Each box is settled, in order, by

1. infeasibility of the linear constraints on the box (exact LP),
2. the naive interval enclosure of the expression,
3. a mean-value affine under-estimator minimized by exact LP over the box
   intersected with the linear constraints,

and otherwise bisected along its widest side (ties to the lowest index).
Boxes are visited worst-bound first; the resulting tree does not depend on
visiting order.  The statement proven is ``e(x) >= target - slack`` on the
domain.
"""

from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

from ..interval import Interval, add_down, add_up, iv_sum
from .expr import (
    Expr,
    NotDifferentiableError,
    float_eval,
    gradient_eval,
    interval_eval,
    parse,
    to_prefix,
)
from .lp import feasible, solve_lp


class DomainError(ValueError):
    pass


class CertificateFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BoxDomain:
    """A box, optionally cut by linear constraints ``coeffs . x <= rhs``."""

    bounds: tuple[Interval, ...]
    constraints: tuple[tuple[tuple[float, ...], float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "bounds", tuple(self.bounds))
        cons = tuple((tuple(float(a) for a in co), float(rhs)) for co, rhs in self.constraints)
        for co, rhs in cons:
            if len(co) != len(self.bounds):
                raise DomainError("constraint length does not match the dimension")
            if not all(math.isfinite(a) for a in co) or not math.isfinite(rhs):
                raise DomainError("constraint coefficients must be finite")
        object.__setattr__(self, "constraints", cons)
        for b in self.bounds:
            if b.is_unbounded:
                raise DomainError("box bounds must be finite")

    @property
    def dim(self) -> int:
        return len(self.bounds)

    def is_feasible(self) -> bool:
        if not self.constraints:
            return True
        A = [co for co, _ in self.constraints]
        b = [rhs for _, rhs in self.constraints]
        return feasible(A, b, [x.lo for x in self.bounds], [x.hi for x in self.bounds])

    def with_bounds(self, bounds: Sequence[Interval]) -> "BoxDomain":
        return BoxDomain(tuple(bounds), self.constraints)

    def to_dict(self) -> dict:
        d: dict = {"bounds": [[repr(b.lo), repr(b.hi)] for b in self.bounds]}
        if self.constraints:
            d["constraints"] = [
                {"coeffs": [repr(a) for a in co], "rhs": repr(rhs)} for co, rhs in self.constraints
            ]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "BoxDomain":
        try:
            bounds = [Interval(float(lo), float(hi)) for lo, hi in d["bounds"]]
            cons = [
                ([float(a) for a in c["coeffs"]], float(c["rhs"])) for c in d.get("constraints", [])
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed domain: {exc}") from None
        return cls(tuple(bounds), tuple(cons))


def box(*pairs) -> BoxDomain:
    return BoxDomain(tuple(Interval(lo, hi) for lo, hi in pairs))


# ---------------------------------------------------------------------------
# Affine enclosures and LP pruning
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AffineFunction:
    """``const + sum_i slope_i (x_i - center_i)``, evaluated exactly."""

    const: float
    slopes: tuple[float, ...]
    center: tuple[float, ...]

    def __call__(self, x: Sequence) -> Fraction:
        return Fraction(self.const) + sum(
            (Fraction(s) * (Fraction(xi) - Fraction(m)) for s, xi, m in zip(self.slopes, x, self.center)),
            Fraction(0),
        )

    def to_dict(self) -> dict:
        return {
            "const": repr(self.const),
            "slopes": [repr(s) for s in self.slopes],
            "center": [repr(m) for m in self.center],
        }


def affine_enclosure(e: Expr, d: BoxDomain) -> tuple[AffineFunction, AffineFunction]:
    """Mean-value affine bounds ``lower(x) <= e(x) <= upper(x)`` on the box.

    With ``G`` the interval gradient over the box, ``m`` the midpoint, ``s``
    the midpoint of ``G`` and ``rho`` its radius,
    ``e(x) - e(m) = G.(x - m)`` gives
    ``|e(x) - e(m) - s.(x - m)| <= sum_i rho_i h_i`` with ``h`` the box
    half-widths.  Raises :class:`NotDifferentiableError` when no gradient
    enclosure exists.
    """
    grad = gradient_eval(e, d.bounds).g
    m = [b.mid for b in d.bounds]
    em = interval_eval(e, [Interval(x) for x in m])
    if em.is_unbounded:
        raise NotDifferentiableError("unbounded value at the midpoint")
    slopes = [g.mid for g in grad]
    spread = []
    for g, s, b, mi in zip(grad, slopes, d.bounds, m):
        rho = max(add_up(g.hi, -s), add_up(s, -g.lo))
        h = max(add_up(b.hi, -mi), add_up(mi, -b.lo))
        spread.append(Interval(rho) * Interval(h))
    total = iv_sum(spread)
    lower = AffineFunction(add_down(em.lo, -total.hi), tuple(slopes), tuple(m))
    upper = AffineFunction(add_up(em.hi, total.hi), tuple(slopes), tuple(m))
    return lower, upper


@dataclass(frozen=True)
class PruneResult:
    status: str  # "proven" | "undecided" | "infeasible"
    value: Fraction | None = None
    vertex: tuple[Fraction, ...] | None = None


def affine_minimum(f: AffineFunction, d: BoxDomain):
    """Exact minimum of ``f`` over the domain, or None when it is empty."""
    if not d.constraints:
        x = tuple(Fraction(b.lo) if s > 0 else Fraction(b.hi) for s, b in zip(f.slopes, d.bounds))
        return f(x), x
    A = [co for co, _ in d.constraints]
    b = [rhs for _, rhs in d.constraints]
    res = solve_lp(f.slopes, A, b, [x.lo for x in d.bounds], [x.hi for x in d.bounds])
    if res.status == "infeasible":
        return None
    return f(res.x), res.x


def lp_prune(lower: AffineFunction, d: BoxDomain, target: float) -> PruneResult:
    found = affine_minimum(lower, d)
    if found is None:
        return PruneResult("infeasible")
    value, x = found
    status = "proven" if value >= Fraction(target) else "undecided"
    return PruneResult(status, value, x)


def _frac_down(q: Fraction) -> float:
    f = float(q)
    return math.nextafter(f, -math.inf) if Fraction(f) > q else f


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------


@dataclass
class Node:
    box: tuple[Interval, ...]
    depth: int
    split_dim: int | None = None
    split_at: float | None = None
    children: list["Node"] = field(default_factory=list)
    witness: dict | None = None

    def to_dict(self) -> dict:
        d: dict = {"box": [[repr(b.lo), repr(b.hi)] for b in self.box]}
        if self.split_dim is not None:
            d["split"] = {"dim": self.split_dim, "at": repr(self.split_at)}
            d["children"] = [c.to_dict() for c in self.children]
        else:
            d["leaf"] = self.witness
        return d

    def leaves(self, path=()):
        if self.split_dim is None:
            yield path, self
        else:
            for k, c in enumerate(self.children):
                yield from c.leaves(path + (k,))


@dataclass
class ProofCertificate:
    expr: Expr
    domain: BoxDomain
    target: float
    slack: float
    root: Node

    @property
    def goal(self) -> float:
        return _goal(self.target, self.slack)

    @property
    def n_leaves(self) -> int:
        return sum(1 for _ in self.root.leaves())

    @property
    def depth(self) -> int:
        return max(len(p) for p, _ in self.root.leaves())

    def to_dict(self) -> dict:
        return {
            "kind": "lower_bound_certificate",
            "expr": to_prefix(self.expr),
            "domain": self.domain.to_dict(),
            "target": repr(self.target),
            "slack": repr(self.slack),
            "tree": self.root.to_dict(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, d: dict) -> "ProofCertificate":
        try:
            expr = parse(d["expr"])
            domain = BoxDomain.from_dict(d["domain"])
            root = _node_from_dict(d["tree"], 0)
            return cls(expr, domain, float(d["target"]), float(d["slack"]), root)
        except (KeyError, TypeError, ValueError) as exc:
            raise CertificateFormatError(f"malformed certificate: {exc}") from None

    @classmethod
    def loads(cls, text: str) -> "ProofCertificate":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise CertificateFormatError(f"malformed certificate: {exc}") from None


def _node_from_dict(d: dict, depth: int) -> Node:
    bx = tuple(Interval(float(lo), float(hi)) for lo, hi in d["box"])
    node = Node(bx, depth)
    if "split" in d:
        node.split_dim = int(d["split"]["dim"])
        node.split_at = float(d["split"]["at"])
        node.children = [_node_from_dict(c, depth + 1) for c in d["children"]]
    else:
        node.witness = dict(d["leaf"])
    return node


@dataclass
class FailureReport:
    """Undecided outcome.  Never a disproof: ``best_point`` is only a candidate."""

    reason: str  # "violation_candidate" | "max_depth" | "max_leaves"
    box: tuple[Interval, ...]
    depth: int
    bound: float
    best_point: tuple[float, ...]
    best_value: float
    nodes: int
    target: float
    slack: float

    @property
    def resource_exhausted(self) -> bool:
        return self.reason in ("max_depth", "max_leaves")

    def to_dict(self) -> dict:
        return {
            "kind": "failure_report",
            "reason": self.reason,
            "undecided_box": [[repr(b.lo), repr(b.hi)] for b in self.box],
            "depth": self.depth,
            "interval_bound": repr(self.bound),
            "best_sampled_point": [repr(x) for x in self.best_point],
            "best_sampled_value": repr(self.best_value),
            "nodes_explored": self.nodes,
            "target": repr(self.target),
            "slack": repr(self.slack),
            "note": "numerical candidate only; interval failure is inconclusive",
        }


@dataclass(frozen=True)
class ProverOptions:
    max_depth: int = 60
    max_leaves: int = 10_000
    use_lp: bool = True
    slack: float = 1e-9


def _goal(target: float, slack: float) -> float:
    # round up: the proven statement is never weaker than target - slack
    return add_up(target, -slack)


def _split_dim(bx: Sequence[Interval]) -> int:
    widths = [b.width for b in bx]
    best = max(widths)
    return widths.index(best)


def _leaf_witness(e: Expr, d: BoxDomain, goal: float, use_lp: bool):
    """Return ``(witness or None, interval lower bound, sample point)``."""
    if d.constraints and not d.is_feasible():
        return {"kind": "infeasible"}, math.inf, None
    iv = interval_eval(e, d.bounds)
    if iv.lo >= goal:
        return {"kind": "interval", "bound": repr(iv.lo)}, iv.lo, None
    bound = iv.lo
    point = None
    if use_lp:
        try:
            lower, _ = affine_enclosure(e, d)
        except NotDifferentiableError:
            lower = None
        if lower is not None:
            res = lp_prune(lower, d, goal)
            if res.status == "proven":
                return (
                    {
                        "kind": "lp",
                        "bound": repr(_frac_down(res.value)),
                        "affine": lower.to_dict(),
                        "vertex": [str(v) for v in res.vertex],
                    },
                    float(res.value),
                    None,
                )
            if res.status == "undecided":
                bound = max(bound, _frac_down(res.value))
                point = tuple(float(v) for v in res.vertex)
    return None, bound, point


def prove_lower_bound(
    e: Expr, d: BoxDomain, target: float, opts: ProverOptions = ProverOptions()
) -> ProofCertificate | FailureReport:
    """Try to certify ``e(x) >= target - opts.slack`` on ``d``."""
    if e.dimension > d.dim:
        raise DomainError(f"expression uses {e.dimension} variables, domain has {d.dim}")
    if not d.is_feasible():
        root = Node(d.bounds, 0, witness={"kind": "infeasible"})
        return ProofCertificate(e, d, target, opts.slack, root)
    goal = _goal(target, opts.slack)
    root = Node(d.bounds, 0)
    counter = itertools.count()
    heap = [(-math.inf, 0, next(counter), root)]
    leaves = 0
    explored = 0
    best_point = tuple(b.mid for b in d.bounds)
    best_value = math.inf

    def fail(reason: str, node: Node, bound: float) -> FailureReport:
        # report the deepest open box (ties: lowest bound)
        open_nodes = [(n, b) for b, _, _, n in heap] + [(node, bound)]
        deepest, dbound = max(open_nodes, key=lambda t: (t[0].depth, -t[1]))
        return FailureReport(
            reason, deepest.box, deepest.depth, dbound, best_point, best_value, explored, target, opts.slack
        )

    while heap:
        _, _, _, node = heapq.heappop(heap)
        explored += 1
        sub = d.with_bounds(node.box)
        witness, bound, point = _leaf_witness(e, sub, goal, opts.use_lp)
        if witness is not None:
            node.witness = witness
            leaves += 1
            continue
        for pt in filter(None, (tuple(b.mid for b in node.box), point)):
            v = float_eval(e, pt)
            if v < best_value:
                best_value, best_point = v, pt
        if best_value < goal:
            return fail("violation_candidate", node, bound)
        if node.depth >= opts.max_depth:
            return fail("max_depth", node, bound)
        if leaves + len(heap) + 2 > opts.max_leaves:
            return fail("max_leaves", node, bound)
        k = _split_dim(node.box)
        lo_half, hi_half = node.box[k].split()
        if not (node.box[k].lo < lo_half.hi < node.box[k].hi):
            return fail("max_depth", node, bound)
        node.split_dim, node.split_at = k, lo_half.hi
        for half in (lo_half, hi_half):
            bx = node.box[:k] + (half,) + node.box[k + 1 :]
            child = Node(bx, node.depth + 1)
            node.children.append(child)
            heapq.heappush(heap, (bound, -child.depth, next(counter), child))
    return ProofCertificate(e, d, target, opts.slack, root)


# ---------------------------------------------------------------------------
# Replay
# ---------------------------------------------------------------------------


@dataclass
class ReplayResult:
    ok: bool
    errors: list[tuple[tuple[int, ...], str]] = field(default_factory=list)

    def __bool__(self) -> bool:
        return self.ok


def _fresh_bound(e: Expr, d: BoxDomain, kind: str) -> float | None:
    if kind == "interval":
        return interval_eval(e, d.bounds).lo
    if kind == "lp":
        try:
            lower, _ = affine_enclosure(e, d)
        except NotDifferentiableError:
            return None
        found = affine_minimum(lower, d)
        return math.inf if found is None else _frac_down(found[0])
    raise CertificateFormatError(f"unknown witness kind {kind!r}")


def replay_certificate(e: Expr, cert: ProofCertificate, target: float | None = None) -> ReplayResult:
    """Re-check every leaf of ``cert`` against ``e`` from scratch.

    Splits must cut their box strictly inside the chosen side and children
    must be exactly the two halves.  Each leaf's recorded bound must be at
    least the goal and at most what a fresh evaluation gives.
    """
    errors: list = []
    if to_prefix(e) != to_prefix(cert.expr):
        errors.append(((), "certificate is for a different expression"))
        return ReplayResult(False, errors)
    if target is None:
        target = cert.target
    goal = _goal(target, cert.slack)
    if tuple(cert.root.box) != tuple(cert.domain.bounds):
        errors.append(((), "root box differs from the domain"))

    def check(node: Node, path: tuple[int, ...]) -> None:
        sub = cert.domain.with_bounds(node.box)
        if node.split_dim is not None:
            k, at = node.split_dim, node.split_at
            if not (0 <= k < len(node.box)) or len(node.children) != 2:
                errors.append((path, "malformed split"))
                return
            b = node.box[k]
            if not (b.lo < at < b.hi):
                errors.append((path, "split point not inside the box"))
                return
            halves = (Interval(b.lo, at), Interval(at, b.hi))
            for c, (child, half) in enumerate(zip(node.children, halves)):
                want = node.box[:k] + (half,) + node.box[k + 1 :]
                if tuple(child.box) != want:
                    errors.append((path + (c,), "child box is not the stated half of its parent"))
                    continue
                check(child, path + (c,))
            return
        w = node.witness or {}
        kind = w.get("kind")
        if kind == "infeasible":
            if not sub.constraints or sub.is_feasible():
                errors.append((path, "infeasible witness on a feasible box"))
            return
        try:
            claimed = float(w["bound"])
            fresh = _fresh_bound(e, sub, kind)
        except (KeyError, ValueError, CertificateFormatError) as exc:
            errors.append((path, f"malformed witness: {exc}"))
            return
        if fresh is None:
            errors.append((path, "witness cannot be recomputed"))
        elif claimed < goal:
            errors.append((path, f"bound {claimed!r} below goal {goal!r}"))
        elif claimed > fresh:
            errors.append((path, f"claimed bound {claimed!r} exceeds recomputed {fresh!r}"))

    check(cert.root, ())
    return ReplayResult(not errors, errors)
