import random
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from spreadbench.lp import (LinearProgram, MalformedProgram, PivotBudgetExceeded, Relation, Status,
                            dual_program, solve)


def test_box():
    lp = LinearProgram([1])
    lp.add([1], "<=", 3)
    out = solve(lp)
    assert out.status is Status.OPTIMAL
    assert out.primal == (3,) and out.objective_value == 3


def test_open_ray():
    out = solve(LinearProgram([1]))
    assert out.status is Status.UNBOUNDED
    assert out.unbounded_ray == (1,)


def test_empty_box():
    lp = LinearProgram([0])
    lp.add([1], "<=", -1)
    assert solve(lp).status is Status.INFEASIBLE


def test_dimension_mismatch():
    lp = LinearProgram([1, 1])
    lp.add([1], "<=", 1)
    with pytest.raises(MalformedProgram):
        solve(lp)


def test_free_and_bounded_variables():
    # max x + y with x free, -1 <= y <= 4, x + y <= 11, x - y <= 3
    lp = LinearProgram([1, 1], bounds=[(None, None), (-1, 4)])
    lp.add([1, 1], "<=", 11)
    lp.add([1, -1], "<=", 3)
    out = solve(lp)
    assert out.status is Status.OPTIMAL and out.objective_value == 11


def assert_certified(lp, out):
    """Primal feasibility, dual feasibility, zero gap and complementary slackness, exactly."""
    x, y = out.primal, out.dual
    for con, yi in zip(lp.constraints, y):
        row = con.sparse(lp.n)
        lhs = sum((a * x[j] for j, a in row.items()), Fraction(0))
        rhs = Fraction(con.rhs)
        if con.relation is Relation.LE:
            assert lhs <= rhs and yi >= 0
        elif con.relation is Relation.GE:
            assert lhs >= rhs and yi <= 0
        else:
            assert lhs == rhs
        assert yi * (lhs - rhs) == 0
    for (lo, hi), xj, rj in zip(lp.variable_bounds(), x, out.reduced_costs):
        assert (lo is None or xj >= lo) and (hi is None or xj <= hi)
        # a variable strictly inside its bounds has zero reduced cost
        if (lo is None or xj > lo) and (hi is None or xj < hi):
            assert rj == 0
        if lo is not None and xj == lo and (hi is None or xj < hi):
            assert rj <= 0
    # with c = A^T y + r: c.x = b.y + r.x, where r.x only picks up active bounds
    dual_value = sum((Fraction(c.rhs) * yi for c, yi in zip(lp.constraints, y)), Fraction(0))
    bound_part = sum((rj * xj for rj, xj in zip(out.reduced_costs, x)), Fraction(0))
    assert dual_value + bound_part == out.objective_value


def beale():
    # classic cycling instance under the textbook largest-coefficient rule
    lp = LinearProgram([Fraction(3, 4), -150, Fraction(1, 50), -6])
    lp.add([Fraction(1, 4), -60, Fraction(-1, 25), 9], "<=", 0)
    lp.add([Fraction(1, 2), -90, Fraction(-1, 50), 3], "<=", 0)
    lp.add([0, 0, 1, 0], "<=", 1)
    return lp


def kuhn():
    lp = LinearProgram([2, 3, -1, -12])
    lp.add([-2, -9, 1, 9], "<=", 0)
    lp.add([Fraction(1, 3), 1, Fraction(-1, 3), -2], "<=", 0)
    lp.add([2, 3, -1, -12], "<=", 2)
    return lp


@pytest.mark.parametrize("make, value", [(beale, Fraction(1, 20)), (kuhn, Fraction(2))])
def test_cycling_instances_terminate(make, value):
    lp = make()
    out = solve(lp)
    assert out.status is Status.OPTIMAL and out.objective_value == value
    assert_certified(lp, out)
    assert solve(dual_program(lp)).objective_value == -value


def test_deterministic():
    lp = kuhn()
    assert solve(lp) == solve(lp)


def test_pivot_budget(monkeypatch):
    monkeypatch.setenv("SPREADBENCH_MAX_LP_PIVOTS", "1")
    with pytest.raises(PivotBudgetExceeded):
        solve(beale())


def test_unbounded_ray_improves_and_stays_feasible():
    lp = LinearProgram([1, 1])
    lp.add([1, -1], "<=", 2)
    out = solve(lp)
    assert out.status is Status.UNBOUNDED
    d = out.unbounded_ray
    assert d[0] + d[1] > 0 and d[0] - d[1] <= 0 and min(d) >= 0


def random_lp(rng):
    n, m = rng.randint(1, 5), rng.randint(1, 5)
    lp = LinearProgram([Fraction(rng.randint(-5, 5)) for _ in range(n)],
                       bounds=[rng.choice([(0, None), (None, None), (-2, 3), (None, 1)]) for _ in range(n)])
    for _ in range(m):
        lp.add([Fraction(rng.randint(-4, 4), rng.randint(1, 3)) for _ in range(n)],
               rng.choice(["<=", ">=", "=="]), Fraction(rng.randint(-6, 6)))
    return lp


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**9))
def test_random_programs_are_certified(seed):
    lp = random_lp(random.Random(seed))
    out = solve(lp)
    if out.status is Status.OPTIMAL:
        assert_certified(lp, out)
        assert solve(dual_program(lp)).objective_value == -out.objective_value
    elif out.status is Status.UNBOUNDED:
        assert solve(dual_program(lp)).status is Status.INFEASIBLE
        x, d = out.primal, out.unbounded_ray
        assert sum(Fraction(c) * v for c, v in zip(lp.objective, d)) > 0
        for con in lp.constraints:
            row = con.sparse(lp.n)
            along = sum((a * d[j] for j, a in row.items()), Fraction(0))
            assert {Relation.LE: along <= 0, Relation.GE: along >= 0, Relation.EQ: along == 0}[con.relation]
    else:
        # the dual of an infeasible program is infeasible or unbounded
        assert solve(dual_program(lp)).status is not Status.OPTIMAL
