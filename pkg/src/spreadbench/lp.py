"""Exact two-phase simplex over the rationals.

Dense tableau, Bland's pivoting rule, gmpy2 ``mpq`` arithmetic inside the
solver and :class:`fractions.Fraction` at the interface. Every Optimal outcome
carries a dual vector and exact reduced costs; every Unbounded outcome carries
an improving feasible ray.

Sign conventions (maximisation): the dual of a ``<=`` row is >= 0, of a
``>=`` row is <= 0, of an ``=`` row is free. ``reduced_costs = c - A^T y``.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from gmpy2 import mpq

from .rational import to_fraction

DEFAULT_PIVOT_BUDGET = 10**6


class MalformedProgram(ValueError):
    pass


class PivotBudgetExceeded(RuntimeError):
    pass


class Relation(str, enum.Enum):
    LE = "<="
    EQ = "=="
    GE = ">="


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    UNBOUNDED = "Unbounded"
    INFEASIBLE = "Infeasible"


@dataclass
class Constraint:
    """``sum_j coeffs[j] * x_j  (relation)  rhs``.

    ``coeffs`` is either a dense sequence or a sparse ``{index: coef}`` map.
    """

    coeffs: Mapping[int, object] | Sequence[object]
    relation: Relation
    rhs: object = 0

    def sparse(self, n: int) -> dict[int, Fraction]:
        if isinstance(self.coeffs, Mapping):
            out = {}
            for j, a in self.coeffs.items():
                if not 0 <= j < n:
                    raise MalformedProgram(f"coefficient index {j} outside 0..{n - 1}")
                a = to_fraction(a)
                if a:
                    out[j] = a
            return out
        if len(self.coeffs) != n:
            raise MalformedProgram(f"row has {len(self.coeffs)} coefficients, expected {n}")
        return {j: to_fraction(a) for j, a in enumerate(self.coeffs) if a}


@dataclass
class LinearProgram:
    """maximise ``objective . x`` subject to ``constraints`` and ``bounds``.

    ``bounds[j] = (lo, hi)`` with ``None`` meaning unbounded on that side.
    Default bounds are ``x >= 0``.
    """

    objective: Sequence[object]
    constraints: list[Constraint] = field(default_factory=list)
    bounds: list[tuple[object, object]] | None = None

    @property
    def n(self) -> int:
        return len(self.objective)

    def variable_bounds(self) -> list[tuple[Fraction | None, Fraction | None]]:
        if self.bounds is None:
            return [(Fraction(0), None)] * self.n
        if len(self.bounds) != self.n:
            raise MalformedProgram(f"{len(self.bounds)} bounds for {self.n} variables")
        return [(None if lo is None else to_fraction(lo), None if hi is None else to_fraction(hi))
                for lo, hi in self.bounds]

    def add(self, coeffs, relation: Relation | str, rhs=0) -> int:
        self.constraints.append(Constraint(coeffs, Relation(relation), rhs))
        return len(self.constraints) - 1


@dataclass
class LpOutcome:
    status: Status
    primal: tuple[Fraction, ...] | None = None
    objective_value: Fraction | None = None
    dual: tuple[Fraction, ...] | None = None
    reduced_costs: tuple[Fraction, ...] | None = None
    unbounded_ray: tuple[Fraction, ...] | None = None
    pivots: int = 0


def _pivot_budget() -> int:
    raw = os.environ.get("SPREADBENCH_MAX_LP_PIVOTS")
    if not raw:
        return DEFAULT_PIVOT_BUDGET
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"SPREADBENCH_MAX_LP_PIVOTS must be an integer, got {raw!r}") from None


def _frac(x) -> Fraction:
    return Fraction(int(x.numerator), int(x.denominator))


class _Tableau:
    """Rows hold ``[a_0 .. a_{ncols-1}, rhs]``; ``obj`` holds reduced costs and ``-z``."""

    def __init__(self, rows, basis, ncols, budget):
        self.rows = rows
        self.basis = basis
        self.ncols = ncols
        self.obj: list = []
        self.pivots = 0
        self.budget = budget

    def set_objective(self, cost) -> None:
        obj = list(cost) + [mpq(0)]
        for row, b in zip(self.rows, self.basis):
            cb = cost[b]
            if cb:
                for k, a in enumerate(row):
                    if a:
                        obj[k] -= cb * a
        self.obj = obj

    def pivot(self, r: int, j: int) -> None:
        self.pivots += 1
        if self.pivots > self.budget:
            raise PivotBudgetExceeded(f"simplex exceeded {self.budget} pivots")
        prow = self.rows[r]
        inv = 1 / prow[j]
        if inv != 1:
            prow = [a * inv for a in prow]
            self.rows[r] = prow
        nz = [k for k, a in enumerate(prow) if a]
        for i, row in enumerate(self.rows):
            if i != r:
                f = row[j]
                if f:
                    for k in nz:
                        row[k] -= f * prow[k]
        f = self.obj[j]
        if f:
            obj = self.obj
            for k in nz:
                obj[k] -= f * prow[k]
        self.basis[r] = j

    def entering(self, allowed) -> int | None:
        obj = self.obj
        for j in range(self.ncols):
            if obj[j] > 0 and allowed[j]:
                return j
        return None

    def leaving(self, j: int) -> int | None:
        best = None
        best_ratio = None
        for i, row in enumerate(self.rows):
            a = row[j]
            if a > 0:
                ratio = row[-1] / a
                if (best is None or ratio < best_ratio
                        or (ratio == best_ratio and self.basis[i] < self.basis[best])):
                    best, best_ratio = i, ratio
        return best

    def run(self, allowed, stop_at_zero: bool = False) -> int | None:
        """Bland's rule until optimal (returns None) or unbounded (returns the entering column)."""
        while True:
            if stop_at_zero and self.obj[-1] == 0:
                return None
            j = self.entering(allowed)
            if j is None:
                return None
            r = self.leaving(j)
            if r is None:
                return j
            self.pivot(r, j)


def solve(lp: LinearProgram) -> LpOutcome:
    n = lp.n
    c = [to_fraction(v) for v in lp.objective]
    bounds = lp.variable_bounds()
    rows_sparse = [con.sparse(n) for con in lp.constraints]
    rhs_orig = [to_fraction(con.rhs) for con in lp.constraints]
    rels = [con.relation for con in lp.constraints]

    # Standard form: x_j = offset_j + sum(sign * y_col).
    var_cols: list[list[tuple[int, int]]] = []
    offsets: list[Fraction] = []
    ncols = 0
    extra_rows: list[tuple[dict[int, Fraction], Relation, Fraction]] = []
    for lo, hi in bounds:
        if lo is not None:
            var_cols.append([(ncols, 1)])
            offsets.append(lo)
            if hi is not None:
                extra_rows.append(({ncols: Fraction(1)}, Relation.LE, hi - lo))
            ncols += 1
        elif hi is not None:
            var_cols.append([(ncols, -1)])
            offsets.append(hi)
            ncols += 1
        else:
            var_cols.append([(ncols, 1), (ncols + 1, -1)])
            offsets.append(Fraction(0))
            ncols += 2
    nstruct = ncols

    std_rows: list[tuple[dict[int, Fraction], Relation, Fraction]] = []
    for row, rel, b in zip(rows_sparse, rels, rhs_orig):
        srow: dict[int, Fraction] = {}
        shift = Fraction(0)
        for j, a in row.items():
            shift += a * offsets[j]
            for col, sign in var_cols[j]:
                srow[col] = srow.get(col, Fraction(0)) + sign * a
        std_rows.append((srow, rel, b - shift))
    std_rows.extend(extra_rows)
    m = len(std_rows)

    nslack = sum(1 for _, rel, _ in std_rows if rel is not Relation.EQ)
    slack_of: list[int | None] = []
    col = nstruct
    for _, rel, _ in std_rows:
        if rel is Relation.EQ:
            slack_of.append(None)
        else:
            slack_of.append(col)
            col += 1
    art_start = nstruct + nslack

    # Normalise rhs >= 0 and pick an identity column per row.
    row_sign: list[int] = []
    identity_col: list[int] = []
    needs_art: list[bool] = []
    for srow, rel, b in std_rows:
        sign = -1 if b < 0 else 1
        row_sign.append(sign)
        slack_coef = {Relation.LE: 1, Relation.GE: -1, Relation.EQ: 0}[rel] * sign
        needs_art.append(slack_coef != 1)
    nart = sum(needs_art)
    total = art_start + nart

    rows = []
    basis = []
    art = art_start
    for i, (srow, rel, b) in enumerate(std_rows):
        sign = row_sign[i]
        row = [mpq(0)] * (total + 1)
        for k, a in srow.items():
            if a:
                row[k] = mpq(a.numerator, a.denominator) * sign
        if slack_of[i] is not None:
            row[slack_of[i]] = mpq({Relation.LE: 1, Relation.GE: -1}[rel] * sign)
        row[-1] = mpq(b.numerator, b.denominator) * sign
        if needs_art[i]:
            row[art] = mpq(1)
            identity_col.append(art)
            basis.append(art)
            art += 1
        else:
            identity_col.append(slack_of[i])
            basis.append(slack_of[i])
        rows.append(row)

    tab = _Tableau(rows, basis, total, _pivot_budget())
    everything = [True] * total

    if nart:
        cost1 = [mpq(0)] * art_start + [mpq(-1)] * nart
        tab.set_objective(cost1)
        tab.run(everything, stop_at_zero=True)
        if tab.obj[-1] != 0:
            return LpOutcome(Status.INFEASIBLE, pivots=tab.pivots)
        # drive zero-level artificials out of the basis; drop redundant rows
        dropped: set[int] = set()
        for i in range(len(tab.rows)):
            if tab.basis[i] >= art_start:
                row = tab.rows[i]
                k = next((k for k in range(art_start) if row[k]), None)
                if k is None:
                    dropped.add(i)
                else:
                    tab.pivot(i, k)
        if dropped:
            tab.rows = [r for i, r in enumerate(tab.rows) if i not in dropped]
            tab.basis = [b for i, b in enumerate(tab.basis) if i not in dropped]

    cost2 = [mpq(0)] * total
    for j, cols in enumerate(var_cols):
        if c[j]:
            for colj, sign in cols:
                cost2[colj] = mpq(c[j].numerator, c[j].denominator) * sign
    tab.set_objective(cost2)
    allowed = [k < art_start for k in range(total)]
    enter = tab.run(allowed)

    ystd = [mpq(0)] * total
    for r, b in enumerate(tab.basis):
        ystd[b] = tab.rows[r][-1]
    primal = tuple(
        offsets[j] + sum((sign * _frac(ystd[colj]) for colj, sign in cols), Fraction(0))
        for j, cols in enumerate(var_cols)
    )

    if enter is not None:
        direction = [mpq(0)] * total
        direction[enter] = mpq(1)
        for r, b in enumerate(tab.basis):
            direction[b] = -tab.rows[r][enter]
        ray = tuple(
            sum((sign * _frac(direction[colj]) for colj, sign in cols), Fraction(0))
            for cols in var_cols
        )
        return LpOutcome(Status.UNBOUNDED, primal=primal, unbounded_ray=ray, pivots=tab.pivots)

    y_user = []
    for i in range(len(lp.constraints)):
        y_user.append(-_frac(tab.obj[identity_col[i]]) * row_sign[i])
    reduced = []
    for j in range(n):
        r = c[j]
        for i, row in enumerate(rows_sparse):
            a = row.get(j)
            if a:
                r -= a * y_user[i]
        reduced.append(r)
    value = sum((cj * xj for cj, xj in zip(c, primal)), Fraction(0))
    return LpOutcome(Status.OPTIMAL, primal=primal, objective_value=value,
                     dual=tuple(y_user), reduced_costs=tuple(reduced), pivots=tab.pivots)


def dual_program(lp: LinearProgram) -> LinearProgram:
    """The LP dual, written as a maximisation so :func:`solve` applies.

    Finite bounds other than ``x >= 0``, ``x <= 0`` or free are first moved
    into explicit rows. The optimal value of the returned program is the
    negative of the primal optimum.
    """
    n = lp.n
    bounds = lp.variable_bounds()
    rows = [(con.sparse(n), con.relation, to_fraction(con.rhs)) for con in lp.constraints]
    kind = []
    for j, (lo, hi) in enumerate(bounds):
        if lo == 0 and hi is None:
            kind.append("nonneg")
        elif lo is None and hi == 0:
            kind.append("nonpos")
        elif lo is None and hi is None:
            kind.append("free")
        else:
            kind.append("free")
            if lo is not None:
                rows.append(({j: Fraction(1)}, Relation.GE, lo))
            if hi is not None:
                rows.append(({j: Fraction(1)}, Relation.LE, hi))
    # min b.y  s.t.  A^T y (>= | <= | =) c  -->  max -b.y
    ybounds = []
    for _, rel, _ in rows:
        ybounds.append({Relation.LE: (0, None), Relation.GE: (None, 0), Relation.EQ: (None, None)}[rel])
    dual = LinearProgram([-b for _, _, b in rows], bounds=ybounds)
    c = [to_fraction(v) for v in lp.objective]
    for j in range(n):
        col = {i: row[j] for i, (row, _, _) in enumerate(rows) if j in row}
        rel = {"nonneg": Relation.GE, "nonpos": Relation.LE, "free": Relation.EQ}[kind[j]]
        dual.add(col, rel, c[j])
    return dual
