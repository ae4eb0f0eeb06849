"""Exact arbitrage detection for bid-ask markets on a scenario tree.

The attainable terminal values form a cone, so the LP that maximises the sum
of terminal values is either stuck at 0 (no arbitrage) or unbounded, and the
unbounded ray is itself an arbitrage. A second encoding that caps the traded
volume at 1 is solved alongside as a consistency check.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping

from .lp import LinearProgram, Relation, Status, solve
from .portfolio import Strategy, strategy_from_trades, terminal_values, trades_value
from .rational import fmt, to_fraction, zeros
from .tree import BidAskProcess, ScenarioTree, require_valid


class InstanceTooLarge(ValueError):
    pass


class InternalInvariantError(AssertionError):
    """A certificate failed its own verification. Always a bug."""


@dataclass(frozen=True)
class ArbitrageVerdict:
    has_arbitrage: bool
    witness: Strategy | None = None
    witness_values: Mapping[str, Fraction] | None = None

    def to_json(self) -> dict:
        out: dict = {"has_arbitrage": self.has_arbitrage}
        if self.witness is not None:
            out["witness"] = self.witness.to_json()
            out["witness_values"] = {k: fmt(v) for k, v in sorted(self.witness_values.items())}
        return out


def is_arbitrage(values: Mapping[str, Fraction]) -> bool:
    vals = list(values.values())
    return all(v >= 0 for v in vals) and any(v > 0 for v in vals)


@dataclass
class ArbitrageProgram:
    """The LP together with the index maps needed to read a solution back."""

    lp: LinearProgram
    buy: dict[tuple[str, int], int]
    sell: dict[tuple[str, int], int]
    long: dict[tuple[str, int], int]
    short: dict[tuple[str, int], int]
    throwaway: dict[str, int]

    def trades_of(self, x) -> tuple[dict, dict]:
        buys: dict[str, list[Fraction]] = {}
        sells: dict[str, list[Fraction]] = {}
        for (n, i), j in self.buy.items():
            buys.setdefault(n, []).append((i, x[j]))
        for (n, i), j in self.sell.items():
            sells.setdefault(n, []).append((i, x[j]))
        as_vec = lambda d: {n: tuple(v for _, v in sorted(items)) for n, items in d.items()}
        return as_vec(buys), as_vec(sells)


def arbitrage_program(tree: ScenarioTree, prices: BidAskProcess, normalized: bool = False,
                      throwaway: bool = False) -> ArbitrageProgram:
    """Build the arbitrage LP.

    Variables: ``buy(n, i)``, ``sell(n, i)`` for every node n before T, the
    terminal split ``long(leaf, i) - short(leaf, i) = H_T(leaf, i)`` and, when
    ``throwaway`` is set, a free disposal ``r(leaf) >= 0`` subtracted from the
    terminal value. Rows: the split identity and ``x_T(leaf) >= 0``.
    Objective: the sum of terminal values.
    """
    d = prices.dim
    index = itertools.count()
    buy = {(n, i): next(index) for n in tree.internal_nodes() for i in range(d)}
    sell = {(n, i): next(index) for n in tree.internal_nodes() for i in range(d)}
    long = {(leaf, i): next(index) for leaf in tree.leaves for i in range(d)}
    short = {(leaf, i): next(index) for leaf in tree.leaves for i in range(d)}
    dispose = {leaf: next(index) for leaf in tree.leaves} if throwaway else {}
    nvar = next(index)

    value_rows: dict[str, dict[int, Fraction]] = {}
    split_rows: list[dict[int, Fraction]] = []
    for leaf in tree.leaves:
        path = tree.path(leaf)[:-1]
        row: dict[int, Fraction] = {}
        for i in range(d):
            split = {long[leaf, i]: Fraction(1), short[leaf, i]: Fraction(-1)}
            for n in path:
                split[buy[n, i]] = Fraction(-1)
                split[sell[n, i]] = Fraction(1)
                row[buy[n, i]] = row.get(buy[n, i], Fraction(0)) - prices.ask[n][i]
                row[sell[n, i]] = row.get(sell[n, i], Fraction(0)) + prices.bid[n][i]
            row[long[leaf, i]] = prices.bid[leaf][i]
            row[short[leaf, i]] = -prices.ask[leaf][i]
            split_rows.append(split)
        if throwaway:
            row[dispose[leaf]] = Fraction(-1)
        value_rows[leaf] = row

    objective = [Fraction(0)] * nvar
    for row in value_rows.values():
        for j, a in row.items():
            objective[j] += a
    lp = LinearProgram(objective)
    for split in split_rows:
        lp.add(split, Relation.EQ, 0)
    for leaf in tree.leaves:
        lp.add(value_rows[leaf], Relation.GE, 0)
    if normalized:
        lp.add({j: 1 for j in itertools.chain(buy.values(), sell.values())}, Relation.LE, 1)
    return ArbitrageProgram(lp, buy, sell, long, short, dispose)


def _primitive(values: Iterable[Fraction]) -> Fraction:
    """The positive factor that turns ``values`` into coprime integers."""
    vals = [v for v in values if v]
    if not vals:
        return Fraction(1)
    lcm = 1
    for v in vals:
        lcm = lcm * v.denominator // math.gcd(lcm, v.denominator)
    g = 0
    for v in vals:
        g = math.gcd(g, int(v * lcm))
    return Fraction(lcm, g)


def witness_from_trades(tree: ScenarioTree, prices: BidAskProcess, buys, sells) -> ArbitrageVerdict:
    """Net the trades, rescale them to coprime integers and replay the strategy."""
    d = prices.dim
    net = {n: tuple(b - s for b, s in zip(buys.get(n, zeros(d)), sells.get(n, zeros(d))))
           for n in tree.internal_nodes()}
    scale = _primitive(v for vec in net.values() for v in vec)
    net = {n: tuple(v * scale for v in vec) for n, vec in net.items()}
    strategy = strategy_from_trades(tree, {n: tuple(max(v, 0) for v in vec) for n, vec in net.items()},
                                    {n: tuple(max(-v, 0) for v in vec) for n, vec in net.items()}, d)
    values = terminal_values(tree, prices, strategy)
    return ArbitrageVerdict(is_arbitrage(values), strategy, values)


def detect_arbitrage(tree: ScenarioTree, prices: BidAskProcess, cross_check: bool = True) -> ArbitrageVerdict:
    require_valid(tree, prices)
    program = arbitrage_program(tree, prices)
    outcome = solve(program.lp)
    if outcome.status is Status.INFEASIBLE:
        raise InternalInvariantError("arbitrage LP is infeasible although the zero strategy is feasible")
    if outcome.status is Status.OPTIMAL:
        if outcome.objective_value != 0:
            raise InternalInvariantError(f"cone LP has finite nonzero optimum {fmt(outcome.objective_value)}")
        verdict = ArbitrageVerdict(False)
    else:
        buys, sells = program.trades_of(outcome.unbounded_ray)
        verdict = witness_from_trades(tree, prices, buys, sells)
        if not verdict.has_arbitrage:
            raise InternalInvariantError("unbounded ray did not replay to an arbitrage")
    if cross_check:
        capped = solve(arbitrage_program(tree, prices, normalized=True).lp)
        if capped.status is not Status.OPTIMAL or (capped.objective_value > 0) != verdict.has_arbitrage:
            raise InternalInvariantError("normalized arbitrage LP disagrees with the cone LP")
    return verdict


def detect_arbitrage_normalized(tree: ScenarioTree, prices: BidAskProcess) -> ArbitrageVerdict:
    """Verdict from the volume-capped LP only (optimum > 0 iff arbitrage)."""
    require_valid(tree, prices)
    program = arbitrage_program(tree, prices, normalized=True)
    outcome = solve(program.lp)
    if outcome.status is not Status.OPTIMAL:
        raise InternalInvariantError(f"normalized arbitrage LP returned {outcome.status.value}")
    if outcome.objective_value <= 0:
        return ArbitrageVerdict(False)
    buys, sells = program.trades_of(outcome.primal)
    return witness_from_trades(tree, prices, buys, sells)


DEFAULT_ENUMERATION_BUDGET = 200_000


def brute_force_arbitrage(tree: ScenarioTree, prices: BidAskProcess, grid: Iterable,
                          budget: int = DEFAULT_ENUMERATION_BUDGET) -> ArbitrageVerdict:
    """Try every strategy whose per-node, per-asset trades are drawn from ``grid``."""
    require_valid(tree, prices)
    values = sorted({to_fraction(g) for g in grid} | {Fraction(0)})
    nodes = tree.internal_nodes()
    slots = [(n, i) for n in nodes for i in range(prices.dim)]
    count = len(values) ** len(slots)
    if count > budget:
        raise InstanceTooLarge(f"{count} grid strategies exceed the budget of {budget}")
    d = prices.dim
    for combo in itertools.product(values, repeat=len(slots)):
        if not any(combo):
            continue
        buys = {n: tuple(max(combo[k * d + i], 0) for i in range(d)) for k, n in enumerate(nodes)}
        sells = {n: tuple(max(-combo[k * d + i], 0) for i in range(d)) for k, n in enumerate(nodes)}
        vals = trades_value(tree, prices, buys, sells)
        if is_arbitrage(vals):
            strategy = strategy_from_trades(tree, buys, sells, d)
            return ArbitrageVerdict(True, strategy, terminal_values(tree, prices, strategy))
    return ArbitrageVerdict(False)


def one_step_submarket(tree: ScenarioTree, prices: BidAskProcess, node: str
                       ) -> tuple[ScenarioTree, BidAskProcess]:
    """The one-period market rooted at ``node``, with conditional reference probabilities."""
    kids = tree.children(node)
    if not kids:
        raise ValueError(f"node {node} is a leaf")
    mass = {c: sum((tree.leaf_probs[leaf] for leaf in tree.leaves_under(c)), Fraction(0)) for c in kids}
    total = sum(mass.values(), Fraction(0))
    sub = ScenarioTree(1, [(node, None, 0)] + [(c, node, 1) for c in kids],
                       {c: mass[c] / total for c in kids})
    keep = (node,) + kids
    return sub, BidAskProcess(prices.dim, {n: prices.bid[n] for n in keep},
                              {n: prices.ask[n] for n in keep})


def one_step_scan(tree: ScenarioTree, prices: BidAskProcess) -> list[tuple[int, ArbitrageVerdict]]:
    """One verdict per period t = 1..T covering every one-step submarket at t-1.

    An arbitrage found at an atom is embedded in the full tree by holding the
    one-step position at that atom only and closing it one period later.
    """
    require_valid(tree, prices)
    if tree.horizon == 1:
        return [(1, detect_arbitrage(tree, prices))]
    out = []
    for t in range(1, tree.horizon + 1):
        verdict = ArbitrageVerdict(False)
        for n in tree.atoms_at(t - 1):
            sub, sub_prices = one_step_submarket(tree, prices, n)
            local = detect_arbitrage(sub, sub_prices)
            if local.has_arbitrage:
                holdings = {m: zeros(prices.dim) for m in tree.internal_nodes()}
                holdings[n] = local.witness.at(n)
                strategy = Strategy(holdings)
                verdict = ArbitrageVerdict(True, strategy, terminal_values(tree, prices, strategy))
                if not is_arbitrage(verdict.witness_values):
                    raise InternalInvariantError(f"embedded one-step witness at {n} is not an arbitrage")
                break
        out.append((t, verdict))
    return out
