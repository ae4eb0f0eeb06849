"""Bid-ask Cox-Ross-Rubinstein model with cross dynamics.

Bid and ask move off each other: ``bid_t = (1 + ζ_bid) ask_{t-1}`` and
``ask_t = (1 + ζ_ask) bid_{t-1}``, where one coin flip per step picks
``(u_bid, u_ask)`` or ``(d_bid, d_ask)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

from .rational import fmt, to_fraction
from .tree import BidAskProcess, ScenarioTree


class DegenerateDynamics(ValueError):
    pass


class SpreadConstraintViolated(ValueError):
    def __init__(self, node: str, ratio: Fraction, bound: Fraction):
        super().__init__(f"spread constraint violated at node {node}: "
                         f"ask/bid = {fmt(ratio)} exceeds {fmt(bound)}")
        self.node = node
        self.ratio = ratio
        self.bound = bound


@dataclass(frozen=True)
class CrrParams:
    u_bid: Fraction
    d_bid: Fraction
    u_ask: Fraction
    d_ask: Fraction
    s_bid_0: Fraction = Fraction(1)
    s_ask_0: Fraction = Fraction(1)
    p: Fraction = Fraction(1, 2)
    steps: int = 1

    def __post_init__(self):
        for name in ("u_bid", "d_bid", "u_ask", "d_ask", "s_bid_0", "s_ask_0", "p"):
            object.__setattr__(self, name, to_fraction(getattr(self, name)))
        if not -1 < self.d_bid < self.u_bid:
            raise ValueError(f"need -1 < d_bid < u_bid, got d_bid={fmt(self.d_bid)}, u_bid={fmt(self.u_bid)}")
        if not -1 < self.d_ask < self.u_ask:
            raise ValueError(f"need -1 < d_ask < u_ask, got d_ask={fmt(self.d_ask)}, u_ask={fmt(self.u_ask)}")
        if not 0 < self.s_bid_0 <= self.s_ask_0:
            raise ValueError("need 0 < s_bid_0 <= s_ask_0")
        if not 0 < self.p < 1:
            raise ValueError(f"p must lie in (0, 1), got {fmt(self.p)}")
        if int(self.steps) < 1:
            raise ValueError("steps must be at least 1")

    @property
    def spread_bound(self) -> Fraction:
        """Largest ask/bid ratio at a node that keeps both children's bid <= ask."""
        return min((1 + self.u_ask) / (1 + self.u_bid), (1 + self.d_ask) / (1 + self.d_bid))


@dataclass(frozen=True)
class EbammInterval:
    q_lo: Fraction
    q_hi: Fraction
    nonempty: bool

    def contains(self, q) -> bool:
        q = to_fraction(q)
        return self.q_lo <= q <= self.q_hi and 0 < q < 1

    def to_json(self) -> dict:
        return {"q_lo": fmt(self.q_lo), "q_hi": fmt(self.q_hi), "nonempty": self.nonempty}


def interval_from_moves(u_bid, d_bid, u_ask, d_ask) -> EbammInterval:
    """[-d_ask/(u_ask - d_ask), -d_bid/(u_bid - d_bid)] with the (0, 1) nonemptiness flag."""
    u_bid, d_bid, u_ask, d_ask = map(to_fraction, (u_bid, d_bid, u_ask, d_ask))
    if u_ask == d_ask or u_bid == d_bid:
        raise DegenerateDynamics("up and down moves coincide; the interval is undefined")
    q_lo = -d_ask / (u_ask - d_ask)
    q_hi = -d_bid / (u_bid - d_bid)
    return EbammInterval(q_lo, q_hi, q_lo <= q_hi and q_hi > 0 and q_lo < 1)


def ebamm_interval(params: CrrParams) -> EbammInterval:
    return interval_from_moves(params.u_bid, params.d_bid, params.u_ask, params.d_ask)


@dataclass(frozen=True)
class NaReport:
    d_bid_negative: bool
    u_ask_positive: bool
    d_bid_u_ask: Fraction
    d_ask_u_bid: Fraction

    @property
    def cross_condition(self) -> bool:
        return self.d_bid_u_ask <= self.d_ask_u_bid

    @property
    def holds(self) -> bool:
        return self.d_bid_negative and self.u_ask_positive and self.cross_condition

    def to_json(self) -> dict:
        return {"d_bid < 0": self.d_bid_negative, "u_ask > 0": self.u_ask_positive,
                "d_bid*u_ask": fmt(self.d_bid_u_ask), "d_ask*u_bid": fmt(self.d_ask_u_bid),
                "d_bid*u_ask <= d_ask*u_bid": self.cross_condition, "holds": self.holds}


def na_conditions(params: CrrParams) -> NaReport:
    """d_bid < 0 < u_ask and d_bid·u_ask <= d_ask·u_bid."""
    return NaReport(params.d_bid < 0, params.u_ask > 0,
                    params.d_bid * params.u_ask, params.d_ask * params.u_bid)


def generate_tree(params: CrrParams) -> tuple[ScenarioTree, BidAskProcess]:
    """Full (non-recombining) binary tree; node ids spell the path, e.g. "ud"."""
    bound = params.spread_bound
    bid = {"root": (params.s_bid_0,)}
    ask = {"root": (params.s_ask_0,)}
    nodes = [("root", None, 0)]
    probs = {"root": Fraction(1)}
    frontier = ["root"]
    moves = (("u", params.u_bid, params.u_ask, params.p), ("d", params.d_bid, params.d_ask, 1 - params.p))
    for t in range(1, params.steps + 1):
        nxt = []
        for n in frontier:
            ratio = ask[n][0] / bid[n][0]
            if ratio > bound:
                raise SpreadConstraintViolated(n, ratio, bound)
            for label, zb, za, pr in moves:
                child = label if n == "root" else n + label
                nodes.append((child, n, t))
                bid[child] = ((1 + zb) * ask[n][0],)
                ask[child] = ((1 + za) * bid[n][0],)
                probs[child] = probs[n] * pr
                nxt.append(child)
        frontier = nxt
    tree = ScenarioTree(params.steps, nodes, {leaf: probs[leaf] for leaf in frontier})
    return tree, BidAskProcess(1, bid, ask)
