"""Outward-rounded interval arithmetic.

Endpoints are computed in round-to-nearest and then pushed outward by one ulp
only when the rounding error actually points inward.  The error sign comes
from error-free transformations (TwoSum, Dekker's TwoProduct), so exact
results such as ``[1, 2] + [3, 4]`` stay exact.  Outside the range where those
transformations are valid we fall back to an unconditional one-ulp widening.
"""

from __future__ import annotations

import math
from fractions import Fraction
from typing import Union

__all__ = [
    "Interval",
    "Number",
    "EmptyIntervalError",
    "IntervalDomainError",
    "iv_add",
    "iv_sub",
    "iv_neg",
    "iv_mul",
    "iv_div",
    "iv_sqrt",
    "iv_pow_int",
    "iv_min",
    "iv_max",
    "iv_sum",
    "SQRT2",
    "SQRT8",
    "FOUR_SQRT2",
    "PI",
]

Number = Union[int, float]

_INF = math.inf
_SPLITTER = 134217729.0  # 2**27 + 1
# Veltkamp splitting overflows above ~2**996; error terms underflow below ~2**-960.
_BIG = 2.0**995
_TINY = 2.0**-960


class EmptyIntervalError(ValueError):
    """Raised when an operation would produce an empty interval."""


class IntervalDomainError(ValueError):
    """Raised when an operation is undefined on the whole input interval."""


def _down(x: float) -> float:
    return math.nextafter(x, -_INF)


def _up(x: float) -> float:
    return math.nextafter(x, _INF)


def _two_sum_err(a: float, b: float, s: float) -> float:
    bb = s - a
    return (a - (s - bb)) + (b - bb)


def _split(a: float) -> tuple[float, float]:
    c = _SPLITTER * a
    hi = c - (c - a)
    return hi, a - hi


def _two_prod_err(a: float, b: float, p: float) -> float:
    ah, al = _split(a)
    bh, bl = _split(b)
    return ((ah * bh - p) + ah * bl + al * bh) + al * bl


def _prod_exactable(a: float, b: float, p: float) -> bool:
    return abs(a) < _BIG and abs(b) < _BIG and abs(p) > _TINY and abs(p) < _BIG


def _same_sign_floor(a: float, b: float, r: float) -> float:
    # a*b and a/b are positive here; widening must not cross zero
    return max(r, 0.0) if (a > 0) == (b > 0) else r


def _opposite_sign_ceil(a: float, b: float, r: float) -> float:
    return min(r, 0.0) if (a > 0) != (b > 0) else r


def add_down(a: float, b: float) -> float:
    s = a + b
    if not math.isfinite(s):
        return s if not (math.isfinite(a) and math.isfinite(b)) else _down(s)
    return _down(s) if _two_sum_err(a, b, s) < 0 else s


def add_up(a: float, b: float) -> float:
    s = a + b
    if not math.isfinite(s):
        return s if not (math.isfinite(a) and math.isfinite(b)) else _up(s)
    return _up(s) if _two_sum_err(a, b, s) > 0 else s


def mul_down(a: float, b: float) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0
    p = a * b
    if math.isinf(a) or math.isinf(b):
        return p
    if not _prod_exactable(a, b, p):
        return _same_sign_floor(a, b, _down(p))
    return _down(p) if _two_prod_err(a, b, p) < 0 else p


def mul_up(a: float, b: float) -> float:
    if a == 0.0 or b == 0.0:
        return 0.0
    p = a * b
    if math.isinf(a) or math.isinf(b):
        return p
    if not _prod_exactable(a, b, p):
        return _opposite_sign_ceil(a, b, _up(p))
    return _up(p) if _two_prod_err(a, b, p) > 0 else p


def _div_residual_sign(a: float, b: float, q: float) -> int:
    """Sign of (a/b - q) for the exact quotient, or 0 if unknown-safe path fails."""
    p = q * b
    e = _two_prod_err(q, b, p)
    d = a - p  # exact by Sterbenz: p is within one rounding of a
    if d > e:
        r = 1
    elif d < e:
        r = -1
    else:
        return 0
    return r if b > 0 else -r


def div_down(a: float, b: float) -> float:
    if a == 0.0:
        return 0.0
    q = a / b
    if math.isinf(a) or math.isinf(b):
        return q
    if not (_prod_exactable(q, b, a) and abs(q) > _TINY):
        return _same_sign_floor(a, b, _down(q))
    return _down(q) if _div_residual_sign(a, b, q) < 0 else q


def div_up(a: float, b: float) -> float:
    if a == 0.0:
        return 0.0
    q = a / b
    if math.isinf(a) or math.isinf(b):
        return q
    if not (_prod_exactable(q, b, a) and abs(q) > _TINY):
        return _opposite_sign_ceil(a, b, _up(q))
    return _up(q) if _div_residual_sign(a, b, q) > 0 else q


def _sqrt_residual_sign(x: float, s: float) -> int:
    p = s * s
    e = _two_prod_err(s, s, p)
    d = x - p
    return (d > e) - (d < e)


def sqrt_down(x: float) -> float:
    if x <= 0.0:
        return 0.0
    s = math.sqrt(x)
    if math.isinf(s) or not (_TINY < x < _BIG):
        return _down(s) if math.isfinite(s) else s
    return _down(s) if _sqrt_residual_sign(x, s) < 0 else s


def sqrt_up(x: float) -> float:
    if x <= 0.0:
        return 0.0
    s = math.sqrt(x)
    if math.isinf(s) or not (_TINY < x < _BIG):
        return _up(s) if math.isfinite(s) else s
    return _up(s) if _sqrt_residual_sign(x, s) > 0 else s


def _as_float_interval(x: "Interval | Number") -> "Interval":
    if isinstance(x, Interval):
        return x
    if isinstance(x, int) and not isinstance(x, bool):
        f = float(x)
        if int(f) == x:
            return Interval(f, f)
        return Interval.from_fraction(Fraction(x))
    return Interval(float(x), float(x))


class Interval:
    """Closed interval ``[lo, hi]`` of reals with floating-point endpoints.

    Instances are immutable.  ``Interval(-inf, inf)`` is the only way an
    infinite bound arises in practice: it is what division by an interval
    containing zero returns (see :attr:`is_unbounded`).
    """

    __slots__ = ("lo", "hi")

    lo: float
    hi: float

    def __init__(self, lo: Number, hi: Number | None = None) -> None:
        lo = float(lo)
        hi = lo if hi is None else float(hi)
        if math.isnan(lo) or math.isnan(hi):
            raise ValueError("interval bounds must not be NaN")
        if lo > hi:
            raise EmptyIntervalError(f"empty interval [{lo!r}, {hi!r}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def __setattr__(self, name, value):
        raise AttributeError("Interval is immutable")

    def __reduce__(self):
        return (Interval, (self.lo, self.hi))

    # -- constructors -----------------------------------------------------

    @classmethod
    def entire(cls) -> "Interval":
        return cls(-_INF, _INF)

    @classmethod
    def from_fraction(cls, q: Fraction) -> "Interval":
        """Tightest float interval containing the rational ``q``."""
        f = float(q)
        fq = Fraction(f)
        if fq == q:
            return cls(f, f)
        if fq < q:
            return cls(f, _up(f))
        return cls(_down(f), f)

    @classmethod
    def from_decimal(cls, text: str) -> "Interval":
        return cls.from_fraction(Fraction(text.strip()))

    @classmethod
    def hull(cls, *values: "Interval | Number") -> "Interval":
        ivs = [_as_float_interval(v) for v in values]
        return cls(min(v.lo for v in ivs), max(v.hi for v in ivs))

    # -- queries ----------------------------------------------------------

    @property
    def width(self) -> float:
        return add_up(self.hi, -self.lo)

    @property
    def mid(self) -> float:
        if math.isinf(self.lo) or math.isinf(self.hi):
            if self.lo == -_INF and self.hi == _INF:
                return 0.0
            return self.lo if math.isinf(self.hi) else self.hi
        m = 0.5 * (self.lo + self.hi)
        if not math.isfinite(m):
            m = 0.5 * self.lo + 0.5 * self.hi
        return min(max(m, self.lo), self.hi)

    @property
    def rad(self) -> float:
        """Upper bound on the distance from :attr:`mid` to either endpoint."""
        m = self.mid
        return max(add_up(self.hi, -m), add_up(m, -self.lo))

    @property
    def mag(self) -> float:
        return max(abs(self.lo), abs(self.hi))

    @property
    def is_unbounded(self) -> bool:
        return math.isinf(self.lo) or math.isinf(self.hi)

    @property
    def is_point(self) -> bool:
        return self.lo == self.hi

    def contains(self, x: "Interval | Number | Fraction") -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        if isinstance(x, Fraction):
            lo_ok = self.lo == -_INF or Fraction(self.lo) <= x
            hi_ok = self.hi == _INF or x <= Fraction(self.hi)
            return lo_ok and hi_ok
        return self.lo <= x <= self.hi

    __contains__ = contains

    def subset(self, other: "Interval") -> bool:
        return other.lo <= self.lo and self.hi <= other.hi

    def overlaps(self, other: "Interval") -> bool:
        return self.lo <= other.hi and other.lo <= self.hi

    def split(self) -> tuple["Interval", "Interval"]:
        m = self.mid
        return Interval(self.lo, m), Interval(m, self.hi)

    # -- dunder arithmetic -----------------------------------------------

    def __add__(self, other):
        return iv_add(self, _as_float_interval(other))

    __radd__ = __add__

    def __sub__(self, other):
        return iv_sub(self, _as_float_interval(other))

    def __rsub__(self, other):
        return iv_sub(_as_float_interval(other), self)

    def __mul__(self, other):
        return iv_mul(self, _as_float_interval(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return iv_div(self, _as_float_interval(other))

    def __rtruediv__(self, other):
        return iv_div(_as_float_interval(other), self)

    def __neg__(self):
        return iv_neg(self)

    def __pos__(self):
        return self

    def __pow__(self, n: int):
        if not isinstance(n, int):
            raise TypeError("only integer powers are supported")
        return iv_pow_int(self, n)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Interval):
            return NotImplemented
        return self.lo == other.lo and self.hi == other.hi

    def __hash__(self) -> int:
        return hash((self.lo, self.hi))

    def __repr__(self) -> str:
        return f"Interval({self.lo!r}, {self.hi!r})"

    def __str__(self) -> str:
        return f"[{self.lo!r}, {self.hi!r}]"

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, str]:
        """Decimal strings; ``repr`` of a float round-trips exactly."""
        return {"lo": repr(self.lo), "hi": repr(self.hi)}

    @classmethod
    def from_dict(cls, d: dict) -> "Interval":
        lo = cls.from_decimal(str(d["lo"]))
        hi = cls.from_decimal(str(d["hi"]))
        return cls(lo.lo, hi.hi)


# -- module-level operations ----------------------------------------------


def iv_add(x: Interval, y: Interval) -> Interval:
    return Interval(add_down(x.lo, y.lo), add_up(x.hi, y.hi))


def iv_neg(x: Interval) -> Interval:
    return Interval(-x.hi, -x.lo)


def iv_sub(x: Interval, y: Interval) -> Interval:
    return Interval(add_down(x.lo, -y.hi), add_up(x.hi, -y.lo))


def iv_mul(x: Interval, y: Interval) -> Interval:
    a, b, c, d = x.lo, x.hi, y.lo, y.hi
    if a >= 0.0 and c >= 0.0:
        return Interval(mul_down(a, c), mul_up(b, d))
    lo = min(mul_down(a, c), mul_down(a, d), mul_down(b, c), mul_down(b, d))
    hi = max(mul_up(a, c), mul_up(a, d), mul_up(b, c), mul_up(b, d))
    return Interval(lo, hi)


def iv_div(x: Interval, y: Interval) -> Interval:
    """Quotient; ``Interval.entire()`` (flagged unbounded) when ``0 in y``."""
    if y.lo <= 0.0 <= y.hi:
        return Interval.entire()
    a, b, c, d = x.lo, x.hi, y.lo, y.hi
    lo = min(div_down(a, c), div_down(a, d), div_down(b, c), div_down(b, d))
    hi = max(div_up(a, c), div_up(a, d), div_up(b, c), div_up(b, d))
    return Interval(lo, hi)


def iv_sqrt(x: Interval) -> Interval:
    if x.hi < 0.0:
        raise IntervalDomainError(f"sqrt of negative interval {x}")
    return Interval(sqrt_down(max(x.lo, 0.0)), sqrt_up(x.hi))


def _pow_down(a: float, n: int) -> float:
    r = 1.0
    for _ in range(n):
        r = mul_down(r, a)
    return r


def _pow_up(a: float, n: int) -> float:
    r = 1.0
    for _ in range(n):
        r = mul_up(r, a)
    return r


def iv_pow_int(x: Interval, n: int) -> Interval:
    if n < 0:
        return iv_div(Interval(1.0), iv_pow_int(x, -n))
    if n == 0:
        return Interval(1.0)
    if n == 1:
        return x
    lo, hi = x.lo, x.hi
    if n % 2 == 0:
        if lo >= 0.0:
            return Interval(_pow_down(lo, n), _pow_up(hi, n))
        if hi <= 0.0:
            return Interval(_pow_down(-hi, n), _pow_up(-lo, n))
        return Interval(0.0, _pow_up(max(-lo, hi), n))
    lo_p = _pow_down(lo, n) if lo >= 0.0 else -_pow_up(-lo, n)
    hi_p = _pow_up(hi, n) if hi >= 0.0 else -_pow_down(-hi, n)
    return Interval(lo_p, hi_p)


def iv_min(x: Interval, y: Interval) -> Interval:
    return Interval(min(x.lo, y.lo), min(x.hi, y.hi))


def iv_max(x: Interval, y: Interval) -> Interval:
    return Interval(max(x.lo, y.lo), max(x.hi, y.hi))


def iv_sum(terms) -> Interval:
    lo, hi = 0.0, 0.0
    for t in terms:
        lo = add_down(lo, t.lo)
        hi = add_up(hi, t.hi)
    return Interval(lo, hi)


SQRT2 = iv_sqrt(Interval(2.0))
SQRT8 = iv_sqrt(Interval(8.0))
# Volume of the rhombic dodecahedron circumscribing a unit ball.
FOUR_SQRT2 = iv_mul(Interval(2.0), SQRT8)
PI = Interval(3.141592653589793, 3.1415926535897936)
