"""Seeded random markets, strategies and measures at desk scale."""

from __future__ import annotations

import random
from fractions import Fraction

from .portfolio import Strategy
from .tree import BidAskProcess, Measure, ScenarioTree

# multiplicative moves of the mid price; mixes up, down and flat branches
_MOVES = [Fraction(k, 10) for k in range(-4, 6)]
# spread as a fraction of the mid price
_SPREADS = [Fraction(0), Fraction(0), Fraction(1, 50), Fraction(1, 20), Fraction(1, 10), Fraction(1, 5)]


def random_tree(rng: random.Random, horizon: int, max_branching: int = 3) -> ScenarioTree:
    nodes = [("0", None, 0)]
    frontier = ["0"]
    for t in range(1, horizon + 1):
        nxt = []
        for parent in frontier:
            for k in range(rng.randint(1, max_branching)):
                nid = f"{parent}.{k}"
                nodes.append((nid, parent, t))
                nxt.append(nid)
        frontier = nxt
    raw = {leaf: Fraction(rng.randint(1, 9)) for leaf in frontier}
    total = sum(raw.values())
    return ScenarioTree(horizon, nodes, {leaf: w / total for leaf, w in raw.items()})


def random_prices(rng: random.Random, tree: ScenarioTree, dim: int, frictionless: bool = False) -> BidAskProcess:
    mid: dict[str, tuple[Fraction, ...]] = {tree.root: tuple(Fraction(rng.randint(5, 20)) for _ in range(dim))}
    for n in tree.all_nodes()[1:]:
        parent = mid[tree.parent(n)]
        mid[n] = tuple(m * (1 + rng.choice(_MOVES)) for m in parent)
    if frictionless:
        return BidAskProcess(dim, dict(mid), dict(mid))
    bid, ask = {}, {}
    for n, m in mid.items():
        lo, hi = [], []
        for x in m:
            # an asymmetric spread around the mid keeps both sides in play
            lo.append(x * (1 - rng.choice(_SPREADS)))
            hi.append(x * (1 + rng.choice(_SPREADS)))
        bid[n], ask[n] = tuple(lo), tuple(hi)
    return BidAskProcess(dim, bid, ask)


def random_market(rng: random.Random, max_horizon: int = 3, max_branching: int = 3, max_dim: int = 2,
                  frictionless: bool = False) -> tuple[ScenarioTree, BidAskProcess]:
    tree = random_tree(rng, rng.randint(1, max_horizon), max_branching)
    return tree, random_prices(rng, tree, rng.randint(1, max_dim), frictionless)


def random_strategy(rng: random.Random, tree: ScenarioTree, dim: int, span: int = 3) -> Strategy:
    """Holdings drawn from small integers and halves, including sign flips."""
    choices = [Fraction(k, 2) for k in range(-2 * span, 2 * span + 1)]
    return Strategy({n: tuple(rng.choice(choices) for _ in range(dim)) for n in tree.internal_nodes()})


def random_measure(rng: random.Random, tree: ScenarioTree) -> Measure:
    raw = {leaf: Fraction(rng.randint(1, 12)) for leaf in tree.leaves}
    total = sum(raw.values())
    return Measure({leaf: w / total for leaf, w in raw.items()})


def random_trades(rng: random.Random, tree: ScenarioTree, dim: int, span: int = 3) -> tuple[dict, dict]:
    """Nonnegative buy and sell amounts per node, often both positive at once."""
    def amount():
        return Fraction(rng.randint(0, 2 * span), 2) if rng.random() < 0.7 else Fraction(0)
    buys = {n: tuple(amount() for _ in range(dim)) for n in tree.internal_nodes()}
    sells = {n: tuple(amount() for _ in range(dim)) for n in tree.internal_nodes()}
    return buys, sells


def random_cps_market(rng: random.Random, max_horizon: int = 3, max_branching: int = 3, max_dim: int = 2,
                      frictionless: bool = False) -> tuple[ScenarioTree, BidAskProcess, Measure]:
    """A market built around a mid price that is a martingale under a random
    equivalent measure, so it admits a consistent price system by construction.

    Returns the market and that measure.
    """
    tree = random_tree(rng, rng.randint(1, max_horizon), max_branching)
    dim = rng.randint(1, max_dim)
    mid: dict[str, tuple[Fraction, ...]] = {tree.root: tuple(Fraction(rng.randint(5, 20)) for _ in range(dim))}
    law: dict[str, Fraction] = {tree.root: Fraction(1)}
    for n in tree.internal_nodes():
        kids = tree.children(n)
        raw = [Fraction(rng.randint(1, 6)) for _ in kids]
        pi = [w / sum(raw) for w in raw]
        vec = []
        for i in range(dim):
            dev = [mid[n][i] * rng.choice(_MOVES) for _ in kids]
            centre = sum(p * x for p, x in zip(pi, dev))
            dev = [x - centre for x in dev]
            worst = min(dev)
            # shrink the deviations if a child price would not stay positive
            scale = Fraction(1) if worst > -mid[n][i] / 2 else mid[n][i] / (2 * -worst)
            vec.append([mid[n][i] + scale * x for x in dev])
        for k, c in enumerate(kids):
            mid[c] = tuple(vec[i][k] for i in range(dim))
            law[c] = law[n] * pi[k]
    law_on_leaves = Measure({leaf: law[leaf] for leaf in tree.leaves})
    if frictionless:
        return tree, BidAskProcess(dim, dict(mid), dict(mid)), law_on_leaves
    bid, ask = {}, {}
    for n, m in mid.items():
        bid[n] = tuple(x * (1 - rng.choice(_SPREADS)) for x in m)
        ask[n] = tuple(x * (1 + rng.choice(_SPREADS)) for x in m)
    return tree, BidAskProcess(dim, bid, ask), law_on_leaves
