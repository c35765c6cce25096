"""Expression trees over box variables, with prefix s-expression syntax.

Grammar (whitespace separated, ``;`` starts a comment)::

    expr  := number | xN | "(" op expr* ")"
    op    := var N | const DECIMAL | add | sub | mul | div | neg | sqrt
           | pow N | min | max | cm_vol

``add``/``mul``/``min``/``max`` take two or more arguments, ``sub`` one or
two, ``cm_vol`` six edge lengths in the order d01 d02 d03 d12 d13 d23.  It
denotes ``sqrt(max(0, CM / 288))``, the tetrahedron volume where the lengths
are realizable and 0 elsewhere.  Likewise ``sqrt`` means ``sqrt(max(0, u))``
and division by a range containing 0 yields the unbounded interval.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from ..interval import Interval, iv_max, iv_min, iv_pow_int, iv_sqrt
from ..voronoi import cayley_menger_det

OPS = {
    "var": 0, "const": 0, "add": -2, "sub": -1, "mul": -2, "div": 2, "neg": 1,
    "sqrt": 1, "pow": 1, "min": -2, "max": -2, "cm_vol": 6,
}


class ExprParseError(ValueError):
    def __init__(self, msg: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {msg}")
        self.line = line
        self.col = col


class NotDifferentiableError(ArithmeticError):
    """Derivative enclosure unavailable (sqrt at 0, kink of min/max, pole)."""


@dataclass(frozen=True)
class Expr:
    op: str
    args: tuple["Expr", ...] = ()
    index: int = 0  # variable index, or exponent for pow
    text: str = ""  # decimal text for const

    # -- construction helpers ----------------------------------------------

    def __add__(self, o):
        return Expr("add", (self, lift(o)))

    def __radd__(self, o):
        return Expr("add", (lift(o), self))

    def __sub__(self, o):
        return Expr("sub", (self, lift(o)))

    def __rsub__(self, o):
        return Expr("sub", (lift(o), self))

    def __mul__(self, o):
        return Expr("mul", (self, lift(o)))

    def __rmul__(self, o):
        return Expr("mul", (lift(o), self))

    def __truediv__(self, o):
        return Expr("div", (self, lift(o)))

    def __rtruediv__(self, o):
        return Expr("div", (lift(o), self))

    def __neg__(self):
        return Expr("neg", (self,))

    def __pow__(self, n: int):
        return Expr("pow", (self,), index=int(n))

    @property
    def dimension(self) -> int:
        """One more than the largest variable index used."""
        if self.op == "var":
            return self.index + 1
        return max((a.dimension for a in self.args), default=0)

    def __str__(self) -> str:
        return to_prefix(self)


def var(i: int) -> Expr:
    if i < 0:
        raise ValueError("variable index must be nonnegative")
    return Expr("var", index=i)


def const(x) -> Expr:
    if isinstance(x, float):
        if not math.isfinite(x):
            raise ValueError("constants must be finite")
        text = repr(x)
    else:
        text = str(x)
        Fraction(text)
    return Expr("const", text=text)


def lift(x) -> Expr:
    return x if isinstance(x, Expr) else const(x)


def sqrt(e) -> Expr:
    return Expr("sqrt", (lift(e),))


def emin(*es) -> Expr:
    return Expr("min", tuple(lift(e) for e in es))


def emax(*es) -> Expr:
    return Expr("max", tuple(lift(e) for e in es))


def cm_vol(*es) -> Expr:
    if len(es) != 6:
        raise ValueError("cm_vol takes six lengths")
    return Expr("cm_vol", tuple(lift(e) for e in es))


def quad_expr(q2: float, q1: float, q0: float, x: Expr) -> Expr:
    """``(q2 x + q1) x + q0`` (Horner form)."""
    return (const(q2) * x + const(q1)) * x + const(q0)


def delta_expr(q2: float, q1: float, q0: float) -> Expr:
    """``2 L(x2) - L(x0) - L(x1)``: the triangle correction with c = x2."""
    L = lambda x: quad_expr(q2, q1, q0, x)  # noqa: E731
    return const(2) * L(var(2)) - L(var(0)) - L(var(1))


# ---------------------------------------------------------------------------
# Printing and parsing
# ---------------------------------------------------------------------------


def to_prefix(e: Expr) -> str:
    if e.op == "var":
        return f"x{e.index}"
    if e.op == "const":
        return e.text
    if e.op == "pow":
        return f"(pow {to_prefix(e.args[0])} {e.index})"
    return "(" + " ".join([e.op] + [to_prefix(a) for a in e.args]) + ")"


_TOKEN = re.compile(r"\s+|;[^\n]*|\(|\)|[^\s()]+")


def _tokenize(text: str):
    line, col = 1, 1
    for m in _TOKEN.finditer(text):
        tok = m.group()
        if not (tok.isspace() or tok.startswith(";")):
            yield tok, line, col
        nl = tok.count("\n")
        if nl:
            line += nl
            col = len(tok) - tok.rfind("\n")
        else:
            col += len(tok)


def _is_number(tok: str) -> bool:
    try:
        Fraction(tok)
    except (ValueError, ZeroDivisionError):
        return False
    return True


def parse(text: str) -> Expr:
    toks = list(_tokenize(text))
    if not toks:
        raise ExprParseError("empty expression", 1, 1)
    pos = 0

    def atom_or_list() -> Expr:
        nonlocal pos
        if pos >= len(toks):
            last = toks[-1]
            raise ExprParseError("unexpected end of input", last[1], last[2])
        tok, line, col = toks[pos]
        pos += 1
        if tok == ")":
            raise ExprParseError("unexpected ')'", line, col)
        if tok != "(":
            if re.fullmatch(r"x\d+", tok):
                return var(int(tok[1:]))
            if _is_number(tok):
                return const(tok)
            raise ExprParseError(f"unknown atom {tok!r}", line, col)
        if pos >= len(toks):
            raise ExprParseError("unexpected end of input", line, col)
        op, oline, ocol = toks[pos]
        pos += 1
        if op not in OPS:
            raise ExprParseError(f"unknown operator {op!r}", oline, ocol)
        if op in ("var", "const", "pow"):
            args = [atom_or_list()] if op == "pow" else []
            if pos >= len(toks):
                raise ExprParseError("unexpected end of input", oline, ocol)
            ntok, nline, ncol = toks[pos]
            pos += 1
            if op in ("var", "pow") and not re.fullmatch(r"-?\d+", ntok):
                raise ExprParseError(f"expected an integer, got {ntok!r}", nline, ncol)
            if op == "const" and not _is_number(ntok):
                raise ExprParseError(f"expected a decimal, got {ntok!r}", nline, ncol)
            _expect_close(nline, ncol)
            if op == "var":
                if int(ntok) < 0:
                    raise ExprParseError("variable index must be nonnegative", nline, ncol)
                return var(int(ntok))
            if op == "const":
                return const(ntok)
            return Expr("pow", (args[0],), index=int(ntok))
        args = []
        while pos < len(toks) and toks[pos][0] != ")":
            args.append(atom_or_list())
        if pos >= len(toks):
            raise ExprParseError(f"unclosed '(' for {op!r}", line, col)
        pos += 1
        arity = OPS[op]
        if arity > 0 and len(args) != arity:
            raise ExprParseError(f"{op} takes {arity} arguments, got {len(args)}", oline, ocol)
        if arity == -2 and len(args) < 2:
            raise ExprParseError(f"{op} takes at least 2 arguments", oline, ocol)
        if op == "sub" and len(args) not in (1, 2):
            raise ExprParseError("sub takes 1 or 2 arguments", oline, ocol)
        if op == "sub" and len(args) == 1:
            return Expr("neg", tuple(args))
        return Expr(op, tuple(args))

    def _expect_close(line, col):
        nonlocal pos
        if pos >= len(toks) or toks[pos][0] != ")":
            raise ExprParseError("expected ')'", line, col)
        pos += 1

    e = atom_or_list()
    if pos != len(toks):
        tok, line, col = toks[pos]
        raise ExprParseError(f"trailing input {tok!r}", line, col)
    return e


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _fold(op, xs):
    acc = xs[0]
    for x in xs[1:]:
        acc = op(acc, x)
    return acc


def _cm_interval(ls: Sequence[Interval]) -> Interval:
    det = cayley_menger_det(*ls)
    if det.hi <= 0.0:
        return Interval(0.0)
    return iv_sqrt(Interval(max(det.lo, 0.0), det.hi) / 288.0)


def interval_eval(e: Expr, box: Sequence[Interval]) -> Interval:
    """Enclosure of the range of ``e`` over ``box`` (naive interval extension)."""
    op = e.op
    if op == "var":
        return box[e.index]
    if op == "const":
        return Interval.from_decimal(e.text)
    xs = [interval_eval(a, box) for a in e.args]
    if op == "add":
        return _fold(lambda a, b: a + b, xs)
    if op == "sub":
        return xs[0] - xs[1]
    if op == "mul":
        return _fold(lambda a, b: a * b, xs)
    if op == "div":
        return xs[0] / xs[1]
    if op == "neg":
        return -xs[0]
    if op == "sqrt":
        x = xs[0]
        if x.hi < 0.0:
            return Interval(0.0)
        return iv_sqrt(x)
    if op == "pow":
        return iv_pow_int(xs[0], e.index)
    if op == "min":
        return _fold(iv_min, xs)
    if op == "max":
        return _fold(iv_max, xs)
    if op == "cm_vol":
        return _cm_interval(xs)
    raise ValueError(f"unknown operator {op!r}")


def float_eval(e: Expr, x: Sequence[float]) -> float:
    """Plain floating-point value (for sampling; not rigorous)."""
    return float(numpy_eval(e, np.asarray(x, dtype=float).reshape(1, -1))[0])


def numpy_eval(e: Expr, X: np.ndarray) -> np.ndarray:
    """Vectorized float evaluation at the rows of ``X``."""
    op = e.op
    if op == "var":
        return X[:, e.index]
    if op == "const":
        return np.full(len(X), float(Fraction(e.text)))
    xs = [numpy_eval(a, X) for a in e.args]
    with np.errstate(divide="ignore", invalid="ignore"):
        if op == "add":
            return _fold(np.add, xs)
        if op == "sub":
            return xs[0] - xs[1]
        if op == "mul":
            return _fold(np.multiply, xs)
        if op == "div":
            return xs[0] / xs[1]
        if op == "neg":
            return -xs[0]
        if op == "sqrt":
            return np.sqrt(np.maximum(xs[0], 0.0))
        if op == "pow":
            return xs[0] ** e.index
        if op == "min":
            return _fold(np.minimum, xs)
        if op == "max":
            return _fold(np.maximum, xs)
        if op == "cm_vol":
            det = cayley_menger_det(*xs)
            return np.sqrt(np.maximum(det, 0.0) / 288.0)
    raise ValueError(f"unknown operator {op!r}")


class IDual:
    """Interval value with an interval gradient (forward mode)."""

    __slots__ = ("v", "g")

    def __init__(self, v: Interval, g: list[Interval]):
        self.v = v
        self.g = g

    @staticmethod
    def lift(x, n: int) -> "IDual":
        if isinstance(x, IDual):
            return x
        iv = x if isinstance(x, Interval) else Interval(float(x))
        return IDual(iv, [Interval(0.0)] * n)

    def __add__(self, o):
        o = IDual.lift(o, len(self.g))
        return IDual(self.v + o.v, [a + b for a, b in zip(self.g, o.g)])

    __radd__ = __add__

    def __sub__(self, o):
        o = IDual.lift(o, len(self.g))
        return IDual(self.v - o.v, [a - b for a, b in zip(self.g, o.g)])

    def __rsub__(self, o):
        return IDual.lift(o, len(self.g)) - self

    def __neg__(self):
        return IDual(-self.v, [-a for a in self.g])

    def __mul__(self, o):
        o = IDual.lift(o, len(self.g))
        return IDual(self.v * o.v, [a * o.v + self.v * b for a, b in zip(self.g, o.g)])

    __rmul__ = __mul__

    def __truediv__(self, o):
        o = IDual.lift(o, len(self.g))
        if o.v.lo <= 0.0 <= o.v.hi:
            raise NotDifferentiableError("division by an interval containing 0")
        q = self.v / o.v
        return IDual(q, [(a - q * b) / o.v for a, b in zip(self.g, o.g)])

    def sqrt(self) -> "IDual":
        if self.v.lo <= 0.0:
            raise NotDifferentiableError("sqrt argument not bounded away from 0")
        s = iv_sqrt(self.v)
        return IDual(s, [a / (2.0 * s) for a in self.g])

    def pow(self, n: int) -> "IDual":
        if n == 0:
            return IDual.lift(1.0, len(self.g))
        if n < 0:
            return IDual.lift(1.0, len(self.g)) / self.pow(-n)
        d = n * iv_pow_int(self.v, n - 1)
        return IDual(iv_pow_int(self.v, n), [d * a for a in self.g])


def _dual_pick(xs: list[IDual], smaller: bool) -> IDual:
    acc = xs[0]
    for x in xs[1:]:
        if smaller:
            if acc.v.hi < x.v.lo:
                continue
            if x.v.hi < acc.v.lo:
                acc = x
                continue
        else:
            if acc.v.lo > x.v.hi:
                continue
            if x.v.lo > acc.v.hi:
                acc = x
                continue
        raise NotDifferentiableError("min/max arguments overlap")
    return acc


def gradient_eval(e: Expr, box: Sequence[Interval]) -> IDual:
    """Interval value and interval partial derivatives of ``e`` over ``box``.

    Raises :class:`NotDifferentiableError` where a derivative enclosure is not
    available.
    """
    n = len(box)
    zero = Interval(0.0)
    one = Interval(1.0)

    def rec(e: Expr) -> IDual:
        op = e.op
        if op == "var":
            g = [zero] * n
            g[e.index] = one
            return IDual(box[e.index], g)
        if op == "const":
            return IDual(Interval.from_decimal(e.text), [zero] * n)
        xs = [rec(a) for a in e.args]
        if op == "add":
            return _fold(lambda a, b: a + b, xs)
        if op == "sub":
            return xs[0] - xs[1]
        if op == "mul":
            return _fold(lambda a, b: a * b, xs)
        if op == "div":
            return xs[0] / xs[1]
        if op == "neg":
            return -xs[0]
        if op == "sqrt":
            return xs[0].sqrt()
        if op == "pow":
            return xs[0].pow(e.index)
        if op == "min":
            return _dual_pick(xs, True)
        if op == "max":
            return _dual_pick(xs, False)
        if op == "cm_vol":
            det = cayley_menger_det(*xs)
            return (det / 288.0).sqrt()
        raise ValueError(f"unknown operator {op!r}")

    out = rec(e)
    if out.v.is_unbounded or any(g.is_unbounded for g in out.g):
        raise NotDifferentiableError("unbounded value or derivative")
    return out
