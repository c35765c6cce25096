"""Small exact simplex method over rationals.

Solves ``min c.x  s.t.  A x <= b,  lo <= x <= hi`` with every number a
:class:`~fractions.Fraction`.  Problems here have a handful of variables, so a
dense tableau with Bland's rule is plenty and never cycles.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

Q = Fraction


@dataclass(frozen=True)
class LPResult:
    status: str  # "optimal" | "infeasible"
    value: Fraction | None = None
    x: tuple[Fraction, ...] | None = None


def _pivot(T: list[list[Fraction]], basis: list[int], r: int, c: int) -> None:
    pr = T[r]
    pv = pr[c]
    if pv != 1:
        T[r] = pr = [v / pv for v in pr]
    for k, row in enumerate(T):
        if k != r and row[c] != 0:
            f = row[c]
            T[k] = [a - f * b for a, b in zip(row, pr)]
    basis[r] = c


def _simplex(T: list[list[Fraction]], basis: list[int], ncols: int) -> bool:
    """Minimize the objective in the last row of ``T``; False if unbounded."""
    obj = T[-1]
    while True:
        obj = T[-1]
        enter = next((j for j in range(ncols) if obj[j] < 0), None)
        if enter is None:
            return True
        best = None
        for i in range(len(T) - 1):
            a = T[i][enter]
            if a > 0:
                ratio = T[i][-1] / a
                if best is None or ratio < best[0] or (ratio == best[0] and basis[i] < basis[best[1]]):
                    best = (ratio, i)
        if best is None:
            return False
        _pivot(T, basis, best[1], enter)


def solve_lp(
    c: Sequence, A: Sequence[Sequence], b: Sequence, lo: Sequence, hi: Sequence
) -> LPResult:
    n = len(c)
    c = [Q(v) for v in c]
    lo = [Q(v) for v in lo]
    hi = [Q(v) for v in hi]
    if any(l > h for l, h in zip(lo, hi)):
        return LPResult("infeasible")
    # y = x - lo, 0 <= y; rows: A y <= b - A lo, y_i <= hi_i - lo_i
    rows: list[tuple[list[Fraction], Fraction]] = []
    for a_row, b_i in zip(A, b):
        a_row = [Q(v) for v in a_row]
        rows.append((a_row, Q(b_i) - sum((a * l for a, l in zip(a_row, lo)), Q(0))))
    for i in range(n):
        e = [Q(0)] * n
        e[i] = Q(1)
        rows.append((e, hi[i] - lo[i]))
    m = len(rows)
    # columns: y (n), slacks (m), artificials (one per row with negative rhs), rhs
    neg = [k for k, (_, rhs) in enumerate(rows) if rhs < 0]
    na = len(neg)
    width = n + m + na + 1
    T: list[list[Fraction]] = []
    basis: list[int] = []
    for k, (a_row, rhs) in enumerate(rows):
        row = [Q(0)] * width
        sign = -1 if rhs < 0 else 1
        for j in range(n):
            row[j] = sign * a_row[j]
        row[n + k] = Q(sign)
        row[-1] = sign * rhs
        if rhs < 0:
            art = n + m + neg.index(k)
            row[art] = Q(1)
            basis.append(art)
        else:
            basis.append(n + k)
        T.append(row)
    if na:
        phase1 = [Q(0)] * width
        for j in range(n + m, n + m + na):
            phase1[j] = Q(1)
        for k in neg:
            phase1 = [p - v for p, v in zip(phase1, T[k])]
        T.append(phase1)
        _simplex(T, basis, n + m + na)
        if T[-1][-1] != 0:
            return LPResult("infeasible")
        T.pop()
        # drive remaining artificials out of the basis
        for r, bv in enumerate(basis):
            if bv >= n + m:
                col = next((j for j in range(n + m) if T[r][j] != 0), None)
                if col is not None:
                    _pivot(T, basis, r, col)
        for row in T:
            del row[n + m : n + m + na]
        width = n + m + 1
    objective = [Q(0)] * width
    for j in range(n):
        objective[j] = c[j]
    for r, bv in enumerate(basis):
        if bv < width - 1 and objective[bv] != 0:
            f = objective[bv]
            objective = [o - f * v for o, v in zip(objective, T[r])]
    T.append(objective)
    _simplex(T, basis, n + m)
    y = [Q(0)] * n
    for r, bv in enumerate(basis):
        if bv < n:
            y[bv] = T[r][-1]
    x = tuple(yi + li for yi, li in zip(y, lo))
    value = sum((ci * xi for ci, xi in zip(c, x)), Q(0))
    return LPResult("optimal", value, x)


def feasible(A, b, lo, hi) -> bool:
    return solve_lp([0] * len(lo), A, b, lo, hi).status == "optimal"
