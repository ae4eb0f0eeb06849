import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from conftest import binary_two_step_tree, one_step_tree
from spreadbench.generate import random_measure, random_tree
from spreadbench.tree import (BidAskProcess, MarketError, Measure, ScenarioTree, ZeroMassNode,
                              conditional_expectation, expectation, load_market, market_from_dict,
                              market_to_dict, validate)

import random


def test_frictionless_degenerate_spread_passes():
    tree = one_step_tree()
    prices = BidAskProcess.frictionless({"root": [10], "u": [10], "d": [10]})
    assert validate(tree, prices).ok


def test_bid_above_ask_is_reported():
    tree = one_step_tree()
    prices = BidAskProcess.from_lists(1, {"root": [12], "u": [10], "d": [10]},
                                      {"root": [10], "u": [10], "d": [10]})
    report = validate(tree, prices)
    assert not report.ok
    assert "bid exceeds ask at node root, asset 0" in report.problems


def test_probabilities_must_sum_to_one():
    tree = one_step_tree((Fraction(1, 2), Fraction(1, 3)))
    assert "probabilities sum to 5/6 ≠ 1" in validate(tree).problems


def test_structural_problems_are_reported_not_raised():
    tree = ScenarioTree(2, [("r", None, 0), ("a", "r", 1), ("x", "ghost", 2)], {"a": 1})
    problems = validate(tree).problems
    assert any("dangling node x" in p for p in problems)
    assert any("leaf a sits at time 1" in p for p in problems)


def test_non_positive_price_reported():
    tree = one_step_tree()
    prices = BidAskProcess.frictionless({"root": [0], "u": [1], "d": [1]})
    assert any("non-positive bid 0 at node root" in p for p in validate(tree, prices).problems)


def test_atoms_at():
    tree = binary_two_step_tree()
    assert tree.atoms_at(0) == ["root"]
    assert len(tree.atoms_at(1)) == 2
    assert tree.atoms_at(2) == tree.leaves
    with pytest.raises(ValueError):
        tree.atoms_at(3)


def test_conditional_expectation_examples():
    tree = one_step_tree()
    values = {"u": (Fraction(8),), "d": (Fraction(12),)}
    assert conditional_expectation(tree, tree.reference_measure(), values, 0)["root"] == (10,)
    skewed = Measure({"u": Fraction(1, 4), "d": Fraction(3, 4)})
    assert conditional_expectation(tree, skewed, values, 0)["root"] == (11,)


def test_zero_mass_node_raises():
    tree = binary_two_step_tree()
    q = Measure({"uu": Fraction(0), "ud": Fraction(0), "du": Fraction(1, 2), "dd": Fraction(1, 2)})
    values = {leaf: (Fraction(1),) for leaf in tree.leaves}
    with pytest.raises(ZeroMassNode) as info:
        conditional_expectation(tree, q, values, 1)
    assert info.value.node == "u"


seeds = st.integers(min_value=0, max_value=10**6)
rationals = st.fractions(min_value=-10, max_value=10, max_denominator=12)


@settings(max_examples=60, deadline=None)
@given(seeds, rationals, rationals)
def test_conditional_expectation_is_linear(seed, alpha, beta):
    rng = random.Random(seed)
    tree = random_tree(rng, rng.randint(1, 3))
    q = random_measure(rng, tree)
    t = rng.randint(1, tree.horizon)
    u = {n: (Fraction(rng.randint(-9, 9)),) for n in tree.atoms_at(t)}
    v = {n: (Fraction(rng.randint(-9, 9), 7),) for n in tree.atoms_at(t)}
    combo = {n: (alpha * u[n][0] + beta * v[n][0],) for n in u}
    cu = conditional_expectation(tree, q, u, t - 1)
    cv = conditional_expectation(tree, q, v, t - 1)
    cc = conditional_expectation(tree, q, combo, t - 1)
    assert all(cc[n][0] == alpha * cu[n][0] + beta * cv[n][0] for n in cc)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_tower_property(seed):
    rng = random.Random(seed)
    tree = random_tree(rng, rng.randint(1, 3))
    q = random_measure(rng, tree)
    values = {leaf: (Fraction(rng.randint(-20, 20)), Fraction(rng.randint(1, 5), 3)) for leaf in tree.leaves}
    current = values
    for t in range(tree.horizon - 1, -1, -1):
        current = conditional_expectation(tree, q, current, t)
    assert current[tree.root] == expectation(tree, q, values)


@settings(max_examples=30, deadline=None)
@given(seeds, rationals)
def test_constants_are_fixed(seed, c):
    rng = random.Random(seed)
    tree = random_tree(rng, rng.randint(1, 3))
    q = random_measure(rng, tree)
    t = rng.randint(1, tree.horizon)
    out = conditional_expectation(tree, q, {n: (c, c) for n in tree.atoms_at(t)}, t - 1)
    assert set(out.values()) == {(c, c)}


def test_market_json_round_trip(tmp_path):
    tree = one_step_tree()
    prices = BidAskProcess.from_lists(1, {"root": [9], "u": ["11/2"], "d": [4]},
                                      {"root": [10], "u": [6], "d": ["9/2"]})
    data = market_to_dict(tree, prices)
    path = tmp_path / "m.json"
    path.write_text(json.dumps(data))
    tree2, prices2 = load_market(path)
    assert market_to_dict(tree2, prices2) == data
    assert prices2.bid["u"] == (Fraction(11, 2),)


def test_numeraire_discounting():
    data = market_to_dict(one_step_tree(), BidAskProcess.frictionless({"root": [10], "u": [12], "d": [8]}))
    data["numeraire"] = {"root": 1, "u": 2, "d": "2"}
    _, prices = market_from_dict(data)
    assert prices.bid["u"] == (6,) and prices.ask["d"] == (4,)


def test_floats_rejected_in_market_json():
    data = market_to_dict(one_step_tree(), BidAskProcess.frictionless({"root": [10], "u": [12], "d": [8]}))
    data["bid"]["root"] = [9.5]
    with pytest.raises(MarketError):
        market_from_dict(data)
