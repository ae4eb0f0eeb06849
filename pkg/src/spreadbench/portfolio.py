"""Predictable strategies and their liquidation values under bid-ask spreads.

A :class:`Strategy` attaches to each node at times 0..T-1 the holdings carried
into the next period, i.e. ``holdings[n]`` at a time-t node is H_{t+1} on the
atom n. Trades are derived: ``ΔH_{t+1}(n) = holdings[n] - holdings[parent(n)]``
with zero holdings before the root.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .rational import fmt_vector, neg, pos, to_fraction, to_vector, zeros
from .tree import BidAskProcess, ScenarioTree

Vec = tuple  # tuple[Fraction, ...]


class UndefinedHolding(KeyError):
    def __init__(self, node: str):
        super().__init__(f"strategy has no holding at node {node}")
        self.node = node


@dataclass(frozen=True)
class Strategy:
    holdings: Mapping[str, tuple[Fraction, ...]]

    @classmethod
    def from_lists(cls, holdings: Mapping[str, Sequence]) -> "Strategy":
        return cls({k: to_vector(v) for k, v in holdings.items()})

    @classmethod
    def zero(cls, tree: ScenarioTree, dim: int) -> "Strategy":
        return cls({n: zeros(dim) for n in tree.internal_nodes()})

    def at(self, node: str) -> tuple[Fraction, ...]:
        try:
            return self.holdings[node]
        except KeyError:
            raise UndefinedHolding(node) from None

    def to_json(self) -> dict:
        return {"holdings": {n: fmt_vector(v) for n, v in sorted(self.holdings.items())}}


def load_strategy(path) -> Strategy:
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    return Strategy.from_lists(data["holdings"])


def _prev_holding(tree: ScenarioTree, strategy: Strategy, node: str, dim: int):
    parent = tree.parent(node)
    return zeros(dim) if parent is None else strategy.at(parent)


def trades(tree: ScenarioTree, strategy: Strategy, dim: int) -> dict[str, Vec]:
    """ΔH executed at each node at times 0..T-1."""
    out = {}
    for n in tree.internal_nodes():
        h, prev = strategy.at(n), _prev_holding(tree, strategy, n, dim)
        out[n] = tuple(a - b for a, b in zip(h, prev))
    return out


def _trade_cash(delta: Sequence[Fraction], bid: Sequence[Fraction], ask: Sequence[Fraction]) -> Fraction:
    # buying is charged at the ask, selling is credited at the bid
    return sum((-pos(d) * a + neg(d) * b for d, a, b in zip(delta, ask, bid)), Fraction(0))


def _liquidation(h: Sequence[Fraction], bid: Sequence[Fraction], ask: Sequence[Fraction]) -> Fraction:
    return sum((pos(x) * b - neg(x) * a for x, b, a in zip(h, bid, ask)), Fraction(0))


def value_process(tree: ScenarioTree, prices: BidAskProcess, strategy: Strategy, t: int) -> dict[str, Fraction]:
    """Liquidation value x_t at every time-t node, starting from nothing."""
    if not 1 <= t <= tree.horizon:
        raise ValueError(f"t must lie in [1, {tree.horizon}], got {t}")
    dim = prices.dim
    out = {}
    for m in tree.atoms_at(t):
        path = tree.path(m)
        prev = zeros(dim)
        cash = Fraction(0)
        for n in path[:-1]:
            h = strategy.at(n)
            cash += _trade_cash([a - b for a, b in zip(h, prev)], prices.bid[n], prices.ask[n])
            prev = h
        out[m] = cash + _liquidation(prev, prices.bid[m], prices.ask[m])
    return out


def terminal_values(tree: ScenarioTree, prices: BidAskProcess, strategy: Strategy) -> dict[str, Fraction]:
    return value_process(tree, prices, strategy, tree.horizon)


def pair_value(tree: ScenarioTree, prices: BidAskProcess, holding: Sequence, node: str,
               end_time: int) -> dict[str, Fraction]:
    """Round trip: take ``holding`` at ``node`` and unwind it at ``end_time``."""
    start = tree.time(node)
    if not start < end_time <= tree.horizon:
        raise ValueError(f"end time {end_time} must lie in ({start}, {tree.horizon}] for node {node}")
    h = to_vector(holding)
    if len(h) != prices.dim:
        raise ValueError(f"holding has length {len(h)}, expected {prices.dim}")
    entry = _trade_cash(h, prices.bid[node], prices.ask[node])
    return {m: entry + _liquidation(h, prices.bid[m], prices.ask[m])
            for m in tree.descendants_at(node, end_time)}


def gains(tree: ScenarioTree, process: Mapping[str, Sequence[Fraction]], strategy: Strategy) -> dict[str, Fraction]:
    """Discrete stochastic integral (H·S)_T = sum_t H_t·(S_t - S_{t-1}) on each leaf."""
    out = {}
    for leaf in tree.leaves:
        path = tree.path(leaf)
        total = Fraction(0)
        for a, b in zip(path, path[1:]):
            total += sum((h * (y - x) for h, x, y in zip(strategy.at(a), process[a], process[b])),
                         Fraction(0))
        out[leaf] = total
    return out


def decompose_strategy(tree: ScenarioTree, strategy: Strategy, dim: int | None = None
                       ) -> tuple[Strategy, Strategy]:
    """Split H into a long strategy (>= 0) and a short strategy (<= 0) with ΔH = ΔĤ + ΔȞ.

    Trades are assigned per asset by the sign of the previous and the new
    holding: a trade that stays on one side goes entirely to that side; a trade
    that crosses zero closes the old side and opens the new one.
    """
    if dim is None:
        dim = len(next(iter(strategy.holdings.values())))
    long_h: dict[str, Vec] = {}
    short_h: dict[str, Vec] = {}
    for n in tree.internal_nodes():
        parent = tree.parent(n)
        prev = zeros(dim) if parent is None else strategy.at(parent)
        prev_long = zeros(dim) if parent is None else long_h[parent]
        prev_short = zeros(dim) if parent is None else short_h[parent]
        cur = strategy.at(n)
        new_long, new_short = [], []
        for i in range(dim):
            h0, h1 = prev[i], cur[i]
            if h0 >= 0 and h1 >= 0:
                dl, ds = h1 - h0, Fraction(0)
            elif h0 < 0 and h1 < 0:
                dl, ds = Fraction(0), h1 - h0
            elif h0 < 0 <= h1:
                dl, ds = h1, -h0
            else:
                dl, ds = -h0, h1
            new_long.append(prev_long[i] + dl)
            new_short.append(prev_short[i] + ds)
        long_h[n] = tuple(new_long)
        short_h[n] = tuple(new_short)
    return Strategy(long_h), Strategy(short_h)


def net_strategy(buys: Mapping[str, Sequence], sells: Mapping[str, Sequence]
                 ) -> tuple[dict[str, Vec], dict[str, Vec]]:
    """Cancel simultaneous purchases and sales of the same asset at the same node."""
    out_buys, out_sells = {}, {}
    for n in sorted(set(buys) | set(sells)):
        b = to_vector(buys[n])
        s = to_vector(sells[n])
        if any(x < 0 for x in b + s):
            raise ValueError(f"negative trade amount at node {n}")
        out_buys[n] = tuple(pos(x - y) for x, y in zip(b, s))
        out_sells[n] = tuple(neg(x - y) for x, y in zip(b, s))
    return out_buys, out_sells


def strategy_from_trades(tree: ScenarioTree, buys: Mapping[str, Sequence], sells: Mapping[str, Sequence],
                         dim: int) -> Strategy:
    """Accumulate net trades into holdings: H_1 = ΔH_1, H_j = H_{j-1} + ΔH_j."""
    holdings: dict[str, Vec] = {}
    for n in tree.internal_nodes():
        parent = tree.parent(n)
        prev = zeros(dim) if parent is None else holdings[parent]
        b = to_vector(buys.get(n, zeros(dim)))
        s = to_vector(sells.get(n, zeros(dim)))
        holdings[n] = tuple(h + x - y for h, x, y in zip(prev, b, s))
    return Strategy(holdings)


def trades_value(tree: ScenarioTree, prices: BidAskProcess, buys: Mapping[str, Sequence],
                 sells: Mapping[str, Sequence]) -> dict[str, Fraction]:
    """Terminal cash when buys and sells are executed as given (no netting) and
    the accumulated net position is liquidated at T."""
    dim = prices.dim
    out = {}
    for leaf in tree.leaves:
        cash = Fraction(0)
        h = [Fraction(0)] * dim
        for n in tree.path(leaf)[:-1]:
            b = to_vector(buys.get(n, zeros(dim)))
            s = to_vector(sells.get(n, zeros(dim)))
            for i in range(dim):
                cash += -b[i] * prices.ask[n][i] + s[i] * prices.bid[n][i]
                h[i] += b[i] - s[i]
        out[leaf] = cash + _liquidation(h, prices.bid[leaf], prices.ask[leaf])
    return out


def from_proportional_costs(mid: Mapping[str, Sequence], buy_cost: Sequence, sell_cost: Sequence) -> BidAskProcess:
    """Ask (1 + λ)S and bid (1 - μ)S around a mid price S, with 0 < λ, μ < 1 per asset."""
    lam = to_vector(buy_cost)
    mu = to_vector(sell_cost)
    for name, rates in (("buy cost", lam), ("sell cost", mu)):
        for i, r in enumerate(rates):
            if not 0 < r < 1:
                raise ValueError(f"{name} for asset {i} must lie in (0, 1), got {r}")
    bid, ask = {}, {}
    for n, s in mid.items():
        s = to_vector(s)
        if len(s) != len(lam) or len(s) != len(mu):
            raise ValueError(f"mid price at node {n} has length {len(s)}, cost vectors {len(lam)}/{len(mu)}")
        if any(x <= 0 for x in s):
            raise ValueError(f"mid price at node {n} must be strictly positive")
        ask[n] = tuple((1 + l) * x for l, x in zip(lam, s))
        bid[n] = tuple((1 - m) * x for m, x in zip(mu, s))
    return BidAskProcess(len(lam), bid, ask)


def proportional_value(tree: ScenarioTree, mid: Mapping[str, Sequence], buy_cost: Sequence,
                       sell_cost: Sequence, strategy: Strategy) -> dict[str, Fraction]:
    """x_T written as frictionless gains minus proportional charges on every trade
    and on the final unwind."""
    lam = to_vector(buy_cost)
    mu = to_vector(sell_cost)
    s = {n: to_vector(v) for n, v in mid.items()}
    dim = len(lam)
    g = gains(tree, s, strategy)
    out = {}
    for leaf in tree.leaves:
        charge = Fraction(0)
        prev = zeros(dim)
        for n in tree.path(leaf)[:-1]:
            h = strategy.at(n)
            for i in range(dim):
                d = h[i] - prev[i]
                charge += lam[i] * pos(d) * s[n][i] + mu[i] * neg(d) * s[n][i]
            prev = h
        for i in range(dim):
            charge += lam[i] * neg(prev[i]) * s[leaf][i] + mu[i] * pos(prev[i]) * s[leaf][i]
        out[leaf] = g[leaf] - charge
    return out


def to_fraction_map(values: Mapping[str, object]) -> dict[str, Fraction]:
    return {k: to_fraction(v) for k, v in values.items()}
