"""Finite filtered probability spaces as scenario trees.

A node at time ``t`` is an atom of F_t; its leaves are the states it contains.
Prices are attached to nodes, so every process defined here is adapted by
construction. The money account is normalised to 1; markets quoted against a
different numeraire are discounted on ingestion (:func:`discount`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .rational import fmt, fmt_vector, to_fraction, to_vector


class MarketError(ValueError):
    """Malformed market input (bad JSON shape, unknown nodes, ...)."""


class ZeroMassNode(ValueError):
    """A conditioning node carries zero mass under the measure."""

    def __init__(self, node: str):
        super().__init__(f"node {node} has zero mass under the measure")
        self.node = node


@dataclass(frozen=True)
class Node:
    id: str
    parent: str | None
    time: int
    children: tuple[str, ...] = ()


class ScenarioTree:
    """Rooted tree with leaf probabilities.

    Construction is lenient: structural problems (dangling parents, leaves
    before the horizon, probabilities not summing to one) are recorded and
    reported by :func:`validate` instead of raising, so that bad input files
    can be diagnosed in full.
    """

    def __init__(self, horizon: int, nodes: Iterable[tuple[str, str | None, int]],
                 leaf_probs: Mapping[str, object]):
        self.horizon = int(horizon)
        raw = list(nodes)
        self.problems: list[str] = []
        children: dict[str, list[str]] = {nid: [] for nid, _, _ in raw}
        if len(children) != len(raw):
            self.problems.append("duplicate node ids")
        roots = [nid for nid, parent, _ in raw if parent is None]
        if len(roots) != 1:
            self.problems.append(f"expected exactly one root, found {len(roots)}")
        self.root: str = roots[0] if roots else ""
        for nid, parent, _ in raw:
            if parent is None:
                continue
            if parent not in children:
                self.problems.append(f"dangling node {nid}: parent {parent} not found")
                continue
            children[parent].append(nid)
        self.nodes: dict[str, Node] = {
            nid: Node(nid, parent, int(time), tuple(sorted(children[nid])))
            for nid, parent, time in raw
        }
        self.leaf_probs: dict[str, Fraction] = {
            k: to_fraction(v) for k, v in leaf_probs.items()
        }

        self._by_time: dict[int, list[str]] = {}
        for node in self.nodes.values():
            self._by_time.setdefault(node.time, []).append(node.id)
        for ids in self._by_time.values():
            ids.sort()
        self._leaves_under: dict[str, tuple[str, ...]] = {}
        self._paths: dict[str, tuple[str, ...]] = {}
        if not self.problems:
            self._index()

    def _index(self) -> None:
        # iterative DFS; desk-scale trees are shallow but avoid recursion anyway
        order: list[str] = []
        stack = [(self.root, (self.root,))]
        while stack:
            nid, path = stack.pop()
            self._paths[nid] = path
            order.append(nid)
            for child in self.nodes[nid].children:
                stack.append((child, path + (child,)))
        for nid in reversed(order):
            kids = self.nodes[nid].children
            if not kids:
                self._leaves_under[nid] = (nid,)
            else:
                self._leaves_under[nid] = tuple(
                    leaf for c in kids for leaf in self._leaves_under[c])
        unreachable = set(self.nodes) - set(order)
        for nid in sorted(unreachable):
            self.problems.append(f"dangling node {nid}: not reachable from root")

    # -- structure -------------------------------------------------------

    @property
    def leaves(self) -> list[str]:
        return sorted(n for n, node in self.nodes.items() if not node.children)

    def atoms_at(self, t: int) -> list[str]:
        if not 0 <= t <= self.horizon:
            raise ValueError(f"time {t} outside [0, {self.horizon}]")
        return list(self._by_time.get(t, []))

    def internal_nodes(self) -> list[str]:
        """Nodes at times 0..T-1, ordered by time then id."""
        return [n for t in range(self.horizon) for n in self.atoms_at(t)]

    def all_nodes(self) -> list[str]:
        return [n for t in range(self.horizon + 1) for n in self.atoms_at(t)]

    def children(self, node: str) -> tuple[str, ...]:
        return self.nodes[node].children

    def parent(self, node: str) -> str | None:
        return self.nodes[node].parent

    def time(self, node: str) -> int:
        return self.nodes[node].time

    def path(self, node: str) -> tuple[str, ...]:
        """Root-to-node path, inclusive."""
        return self._paths[node]

    def leaves_under(self, node: str) -> tuple[str, ...]:
        return self._leaves_under[node]

    def ancestor_at(self, node: str, t: int) -> str:
        return self._paths[node][t]

    def descendants_at(self, node: str, t: int) -> list[str]:
        start = self.time(node)
        if t < start:
            raise ValueError(f"time {t} precedes node {node} (time {start})")
        return sorted({self._paths[leaf][t] for leaf in self._leaves_under[node]})

    def reference_measure(self) -> "Measure":
        return Measure(dict(self.leaf_probs))

    def __repr__(self) -> str:
        return f"ScenarioTree(horizon={self.horizon}, nodes={len(self.nodes)}, leaves={len(self.leaves)})"


@dataclass(frozen=True)
class BidAskProcess:
    """Adapted bid (selling) and ask (buying) prices, one vector per node."""

    dim: int
    bid: Mapping[str, tuple[Fraction, ...]]
    ask: Mapping[str, tuple[Fraction, ...]]

    @classmethod
    def from_lists(cls, dim: int, bid: Mapping[str, Sequence], ask: Mapping[str, Sequence]) -> "BidAskProcess":
        return cls(dim, {k: to_vector(v) for k, v in bid.items()},
                   {k: to_vector(v) for k, v in ask.items()})

    @classmethod
    def frictionless(cls, prices: Mapping[str, Sequence]) -> "BidAskProcess":
        vecs = {k: to_vector(v) for k, v in prices.items()}
        dim = len(next(iter(vecs.values())))
        return cls(dim, vecs, dict(vecs))

    def scaled(self, factor: Fraction) -> "BidAskProcess":
        return BidAskProcess(
            self.dim,
            {k: tuple(factor * x for x in v) for k, v in self.bid.items()},
            {k: tuple(factor * x for x in v) for k, v in self.ask.items()},
        )

    def is_frictionless(self) -> bool:
        return all(self.bid[n] == self.ask[n] for n in self.bid)


@dataclass(frozen=True)
class Measure:
    """Leaf weights. Need not be normalised unless the caller says so."""

    weights: Mapping[str, Fraction]

    @property
    def total(self) -> Fraction:
        return sum(self.weights.values(), Fraction(0))

    def is_probability(self) -> bool:
        return self.total == 1 and all(w >= 0 for w in self.weights.values())

    def is_equivalent(self) -> bool:
        return all(w > 0 for w in self.weights.values())

    def density(self, tree: ScenarioTree) -> dict[str, Fraction]:
        """dQ/dP on each leaf."""
        return {leaf: self.weights[leaf] / tree.leaf_probs[leaf] for leaf in tree.leaves}


@dataclass
class ValidationReport:
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems

    def to_json(self) -> dict:
        return {"ok": self.ok, "problems": list(self.problems)}


def validate(tree: ScenarioTree, prices: BidAskProcess | None = None) -> ValidationReport:
    report = ValidationReport(list(tree.problems))
    if tree.horizon < 1:
        report.problems.append(f"horizon must be >= 1, got {tree.horizon}")
    for nid in sorted(tree.nodes):
        node = tree.nodes[nid]
        if node.parent is None:
            if node.time != 0:
                report.problems.append(f"root {nid} has time {node.time}, expected 0")
        elif node.parent in tree.nodes:
            ptime = tree.nodes[node.parent].time
            if node.time != ptime + 1:
                report.problems.append(
                    f"node {nid} has time {node.time}, expected parent time + 1 = {ptime + 1}")
        if not node.children and node.time != tree.horizon:
            report.problems.append(f"leaf {nid} sits at time {node.time}, not at horizon {tree.horizon}")
    leaves = {n for n, node in tree.nodes.items() if not node.children}
    for leaf in sorted(leaves):
        p = tree.leaf_probs.get(leaf)
        if p is None:
            report.problems.append(f"leaf {leaf} has no probability")
        elif p <= 0:
            report.problems.append(f"leaf {leaf} has non-positive probability {fmt(p)}")
    for k in sorted(set(tree.leaf_probs) - leaves):
        report.problems.append(f"probability given for non-leaf {k}")
    total = sum(tree.leaf_probs.values(), Fraction(0))
    if total != 1:
        report.problems.append(f"probabilities sum to {fmt(total)} ≠ 1")
    if prices is not None:
        report.problems.extend(_price_problems(tree, prices))
    return report


def _price_problems(tree: ScenarioTree, prices: BidAskProcess) -> list[str]:
    out = []
    if prices.dim < 1:
        out.append(f"dimension must be >= 1, got {prices.dim}")
    for nid in sorted(tree.nodes):
        bid, ask = prices.bid.get(nid), prices.ask.get(nid)
        if bid is None or ask is None:
            out.append(f"missing prices at node {nid}")
            continue
        if len(bid) != prices.dim or len(ask) != prices.dim:
            out.append(f"price vector at node {nid} does not have length {prices.dim}")
            continue
        for i, (b, a) in enumerate(zip(bid, ask)):
            if b <= 0:
                out.append(f"non-positive bid {fmt(b)} at node {nid}, asset {i}")
            if a <= 0:
                out.append(f"non-positive ask {fmt(a)} at node {nid}, asset {i}")
            if b > a:
                out.append(f"bid exceeds ask at node {nid}, asset {i}")
    for nid in sorted((set(prices.bid) | set(prices.ask)) - set(tree.nodes)):
        out.append(f"prices given for unknown node {nid}")
    return out


def require_valid(tree: ScenarioTree, prices: BidAskProcess | None = None) -> None:
    report = validate(tree, prices)
    if not report.ok:
        raise MarketError("; ".join(report.problems))


# -- measures and conditioning ------------------------------------------------

def node_masses(tree: ScenarioTree, measure: Measure) -> dict[str, Fraction]:
    masses: dict[str, Fraction] = {}
    for t in range(tree.horizon, -1, -1):
        for n in tree.atoms_at(t):
            kids = tree.children(n)
            if kids:
                masses[n] = sum((masses[c] for c in kids), Fraction(0))
            else:
                masses[n] = Fraction(measure.weights.get(n, 0))
    return masses


def transition(tree: ScenarioTree, measure: Measure, node: str,
               masses: Mapping[str, Fraction] | None = None) -> dict[str, Fraction]:
    """Conditional probabilities of the children of ``node``."""
    if masses is None:
        masses = node_masses(tree, measure)
    total = masses[node]
    if total == 0:
        raise ZeroMassNode(node)
    return {c: masses[c] / total for c in tree.children(node)}


def conditional_expectation(tree: ScenarioTree, measure: Measure,
                            values: Mapping[str, Sequence[Fraction]],
                            at_time: int) -> dict[str, tuple[Fraction, ...]]:
    """E_Q(values | F_{at_time}) for ``values`` given on the nodes at ``at_time + 1``."""
    masses = node_masses(tree, measure)
    out = {}
    for n in tree.atoms_at(at_time):
        total = masses[n]
        if total == 0:
            raise ZeroMassNode(n)
        kids = tree.children(n)
        dim = len(values[kids[0]])
        acc = [Fraction(0)] * dim
        for c in kids:
            w = masses[c]
            if w:
                for i, v in enumerate(values[c]):
                    acc[i] += w * v
        out[n] = tuple(a / total for a in acc)
    return out


def expectation(tree: ScenarioTree, measure: Measure,
                values: Mapping[str, Sequence[Fraction]]) -> tuple[Fraction, ...]:
    """Unconditional E_Q over leaf values (measure need not be normalised)."""
    total = measure.total
    if total == 0:
        raise ZeroMassNode(tree.root)
    leaves = tree.leaves
    dim = len(values[leaves[0]])
    acc = [Fraction(0)] * dim
    for leaf in leaves:
        w = measure.weights.get(leaf, Fraction(0))
        for i, v in enumerate(values[leaf]):
            acc[i] += w * v
    return tuple(a / total for a in acc)


# -- ingestion -----------------------------------------------------------------

def discount(tree: ScenarioTree, prices: BidAskProcess,
             numeraire: Mapping[str, object]) -> BidAskProcess:
    """Express prices in units of a strictly positive numeraire."""
    missing = sorted(set(tree.nodes) - set(numeraire))
    if missing:
        raise MarketError(f"numeraire missing at nodes {missing}")
    bid, ask = {}, {}
    for n in tree.nodes:
        b = to_fraction(numeraire[n])
        if b <= 0:
            raise MarketError(f"numeraire at node {n} must be positive, got {fmt(b)}")
        bid[n] = tuple(x / b for x in prices.bid[n])
        ask[n] = tuple(x / b for x in prices.ask[n])
    return BidAskProcess(prices.dim, bid, ask)


def market_from_dict(data: Mapping) -> tuple[ScenarioTree, BidAskProcess]:
    try:
        horizon = int(data["horizon"])
        dim = int(data["dim"])
        nodes = [(str(n["id"]), None if n.get("parent") is None else str(n["parent"]), int(n["time"]))
                 for n in data["nodes"]]
        tree = ScenarioTree(horizon, nodes, {str(k): to_fraction(v) for k, v in data["leaf_probs"].items()})
        prices = BidAskProcess(
            dim,
            {str(k): to_vector(v) for k, v in data["bid"].items()},
            {str(k): to_vector(v) for k, v in data["ask"].items()},
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise MarketError(f"malformed market: {exc}") from exc
    if data.get("numeraire") is not None:
        prices = discount(tree, prices, data["numeraire"])
    return tree, prices


def market_to_dict(tree: ScenarioTree, prices: BidAskProcess) -> dict:
    return {
        "horizon": tree.horizon,
        "dim": prices.dim,
        "nodes": [{"id": n, "parent": tree.parent(n), "time": tree.time(n)} for n in tree.all_nodes()],
        "leaf_probs": {leaf: fmt(tree.leaf_probs[leaf]) for leaf in tree.leaves},
        "bid": {n: fmt_vector(prices.bid[n]) for n in tree.all_nodes()},
        "ask": {n: fmt_vector(prices.ask[n]) for n in tree.all_nodes()},
    }


def load_market(path) -> tuple[ScenarioTree, BidAskProcess]:
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise MarketError(f"{path}: invalid JSON: {exc}") from exc
    return market_from_dict(data)


def measure_to_dict(measure: Measure) -> dict[str, str]:
    return {k: fmt(v) for k, v in sorted(measure.weights.items())}
