from fractions import Fraction

import pytest
from hypothesis import assume, given, settings, strategies as st

from conftest import EXAMPLE1, EXAMPLE2
from spreadbench.arbitrage import detect_arbitrage
from spreadbench.crr import (CrrParams, DegenerateDynamics, SpreadConstraintViolated, ebamm_interval,
                             generate_tree, interval_from_moves, na_conditions)
from spreadbench.pricing import find_ebamm, verify_ebamm
from spreadbench.tree import Measure, validate

F = Fraction


def test_example2_interval():
    iv = ebamm_interval(CrrParams(**EXAMPLE2))
    assert (iv.q_lo, iv.q_hi, iv.nonempty) == (F(1, 13), F(3, 5), True)


def test_example1_interval_is_everything():
    iv = ebamm_interval(CrrParams(**EXAMPLE1))
    assert (iv.q_lo, iv.q_hi) == (0, 1)
    assert iv.contains(F(1, 1000)) and iv.contains(F(999, 1000))


def test_frictionless_interval_is_the_risk_neutral_point():
    iv = ebamm_interval(CrrParams(u_bid=F(1, 5), d_bid=F(-1, 10), u_ask=F(1, 5), d_ask=F(-1, 10)))
    assert iv.q_lo == iv.q_hi == F(1, 3)


def test_degenerate_moves():
    with pytest.raises(DegenerateDynamics):
        interval_from_moves(F(1, 2), F(1, 2), 3, F(-1, 4))


def test_example_conditions():
    ex1 = na_conditions(CrrParams(**EXAMPLE1))
    assert ex1.holds and ex1.d_bid_u_ask == F(-9, 4) and ex1.d_ask_u_bid == 0
    ex2 = na_conditions(CrrParams(**EXAMPLE2))
    assert ex2.holds and ex2.d_bid_u_ask == F(-9, 4) and ex2.d_ask_u_bid == F(-1, 8)


def test_positive_downside_fails():
    report = na_conditions(CrrParams(u_bid=1, d_bid=F(1, 2), u_ask=2, d_ask=F(1, 2)))
    assert not report.d_bid_negative and not report.holds


def test_invalid_params():
    with pytest.raises(ValueError):
        CrrParams(u_bid=0, d_bid=F(1, 2), u_ask=3, d_ask=0)
    with pytest.raises(ValueError):
        CrrParams(**EXAMPLE2, p=1)
    with pytest.raises(ValueError):
        CrrParams(**EXAMPLE2, s_bid_0=5, s_ask_0=4)


def test_example2_one_step_tree(example2):
    _, tree, prices = example2
    assert prices.bid == {"root": (4,), "u": (6,), "d": (1,)}
    assert prices.ask == {"root": (4,), "u": (16,), "d": (3,)}
    assert validate(tree, prices).ok


def test_spread_constraint_checked_below_the_root():
    with pytest.raises(SpreadConstraintViolated) as info:
        generate_tree(CrrParams(**EXAMPLE2, s_bid_0=4, s_ask_0=4, steps=2))
    assert info.value.node == "d"


def test_frictionless_lattice():
    params = CrrParams(u_bid=F(1, 4), d_bid=F(-1, 5), u_ask=F(1, 4), d_ask=F(-1, 5), s_bid_0=10, s_ask_0=10, steps=3)
    tree, prices = generate_tree(params)
    assert prices.is_frictionless() and validate(tree, prices).ok
    assert prices.bid["udu"] == (F(10) * F(5, 4) * F(4, 5) * F(5, 4),)
    assert prices.bid["uud"] == prices.bid["duu"]


moves = st.fractions(min_value=F(-9, 10), max_value=3, max_denominator=12)


@st.composite
def params(draw):
    d_bid, u_bid = sorted(draw(st.lists(moves, min_size=2, max_size=2, unique=True)))
    d_ask, u_ask = sorted(draw(st.lists(moves, min_size=2, max_size=2, unique=True)))
    p = draw(st.fractions(min_value=F(1, 10), max_value=F(9, 10), max_denominator=10))
    return CrrParams(u_bid=u_bid, d_bid=d_bid, u_ask=u_ask, d_ask=d_ask, p=p)


@settings(max_examples=200, deadline=None)
@given(params())
def test_interval_matches_conditions(prm):
    assert ebamm_interval(prm).nonempty == na_conditions(prm).holds


@settings(max_examples=100, deadline=None)
@given(params())
def test_one_step_bridge(prm):
    try:
        tree, prices = generate_tree(prm)
    except SpreadConstraintViolated:
        assume(False)
    iv = ebamm_interval(prm)
    assert (not detect_arbitrage(tree, prices).has_arbitrage) == na_conditions(prm).holds
    ebamm = find_ebamm(tree, prices)
    assert (ebamm is not None) == iv.nonempty
    if ebamm is not None:
        assert iv.contains(ebamm.measure.weights["u"])
        for q in (iv.q_lo, iv.q_hi):
            if 0 < q < 1:
                assert verify_ebamm(tree, prices, Measure({"u": q, "d": 1 - q})) == []
        for q in (iv.q_lo - F(1, 1000), iv.q_hi + F(1, 1000)):
            if 0 < q < 1:
                assert verify_ebamm(tree, prices, Measure({"u": q, "d": 1 - q})) != []


@settings(max_examples=60, deadline=None)
@given(params(), st.fractions(min_value=F(1, 10), max_value=F(9, 10), max_denominator=10))
def test_verdict_ignores_physical_probability(prm, other_p):
    try:
        tree, prices = generate_tree(prm)
    except SpreadConstraintViolated:
        assume(False)
    swapped = CrrParams(u_bid=prm.u_bid, d_bid=prm.d_bid, u_ask=prm.u_ask, d_ask=prm.d_ask, p=other_p)
    tree2, prices2 = generate_tree(swapped)
    assert detect_arbitrage(tree, prices).has_arbitrage == detect_arbitrage(tree2, prices2).has_arbitrage
    assert (find_ebamm(tree, prices) is None) == (find_ebamm(tree2, prices2) is None)
