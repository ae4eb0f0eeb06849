from fractions import Fraction

import pytest

from spreadbench.crr import CrrParams, generate_tree
from spreadbench.tree import BidAskProcess, ScenarioTree

ACCEPTANCE_LINES: dict[int, str] = {}


def record(criterion: int, passed: bool, detail: str) -> None:
    ACCEPTANCE_LINES[criterion] = f"criterion {criterion}: {'PASS' if passed else 'FAIL'} - {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])


def one_step_tree(probs=(Fraction(1, 2), Fraction(1, 2))):
    return ScenarioTree(1, [("root", None, 0), ("u", "root", 1), ("d", "root", 1)],
                        {"u": probs[0], "d": probs[1]})


def binary_two_step_tree():
    nodes = [("root", None, 0), ("u", "root", 1), ("d", "root", 1),
             ("uu", "u", 2), ("ud", "u", 2), ("du", "d", 2), ("dd", "d", 2)]
    return ScenarioTree(2, nodes, {leaf: Fraction(1, 4) for leaf in ("uu", "ud", "du", "dd")})


@pytest.fixture
def binomial():
    """Frictionless one-step market 10 -> (12, 8)."""
    return one_step_tree(), BidAskProcess.frictionless({"root": [10], "u": [12], "d": [8]})


EXAMPLE2 = dict(u_ask=3, d_ask=Fraction(-1, 4), u_bid=Fraction(1, 2), d_bid=Fraction(-3, 4))
EXAMPLE1 = dict(u_ask=3, d_ask=0, u_bid=0, d_bid=Fraction(-3, 4))


@pytest.fixture
def example2():
    params = CrrParams(**EXAMPLE2, s_bid_0=4, s_ask_0=4)
    return (params,) + generate_tree(params)


@pytest.fixture
def example2_two_steps():
    params = CrrParams(**EXAMPLE2, s_bid_0=4, s_ask_0=5, steps=2)
    return (params,) + generate_tree(params)


@pytest.fixture
def spread_trap():
    """Single path whose middle ask is far above both ends: every one-step
    EBAMM inequality holds, yet buying at 0 and selling at 2 earns 4."""
    tree = ScenarioTree(2, [("r", None, 0), ("a", "r", 1), ("b", "a", 2)], {"b": 1})
    prices = BidAskProcess.from_lists(1, {"r": [1], "a": [1], "b": [5]}, {"r": [1], "a": [10], "b": [5]})
    return tree, prices
