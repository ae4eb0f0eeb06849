"""Equivalent bid-ask martingale measures and consistent price systems.

The certificates of absence of arbitrage live here:

* :func:`find_ebamm` searches for a strictly positive measure under which the
  one-step bid-ask martingale inequalities hold;
* :func:`build_price_systems` produces a supermartingale and a submartingale,
  both pinched between bid and ask, under one common equivalent measure;
* :func:`snell_envelope`, :func:`compose_measures` and friends are the tools
  the backward construction is made of.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

from .lp import LinearProgram, Relation, Status, solve
from .rational import fmt, fmt_vector
from .tree import (BidAskProcess, Measure, ScenarioTree, ZeroMassNode, conditional_expectation,
                   measure_to_dict, node_masses, require_valid, transition)

MARTINGALE = "martingale"
SUPERMARTINGALE = "supermartingale"
SUBMARTINGALE = "submartingale"
KINDS = (MARTINGALE, SUPERMARTINGALE, SUBMARTINGALE)


class EbammViolation(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        first = self.violations[0] if self.violations else None
        super().__init__(f"measure is not an EBAMM ({len(self.violations)} violations, first: {first})")


class InvalidCps(ValueError):
    pass


class CpsConstructionError(RuntimeError):
    pass


@dataclass(frozen=True)
class Ebamm:
    measure: Measure
    margin: Fraction

    def to_json(self) -> dict:
        return {"measure": measure_to_dict(self.measure), "margin": fmt(self.margin)}


@dataclass(frozen=True)
class PricedSystem:
    process: Mapping[str, tuple[Fraction, ...]]
    measure: Measure
    kind: str

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")

    def to_json(self) -> dict:
        return {"process": {n: fmt_vector(v) for n, v in sorted(self.process.items())},
                "kind": self.kind, "measure": measure_to_dict(self.measure)}


@dataclass(frozen=True)
class EbammIssue:
    t: int
    atom: str
    asset: int
    side: str  # "ask": E(bid_t) <= ask_{t-1};  "bid": bid_{t-1} <= E(ask_t);  "weight": leaf not charged
    lhs: Fraction
    rhs: Fraction

    def __str__(self) -> str:
        if self.side == "weight":
            return f"leaf {self.atom} has weight {fmt(self.lhs)}"
        return (f"t={self.t} atom={self.atom} asset={self.asset} {self.side} side: "
                f"{fmt(self.lhs)} > {fmt(self.rhs)}")

    def to_json(self) -> dict:
        return {"t": self.t, "atom": self.atom, "asset": self.asset, "side": self.side,
                "lhs": fmt(self.lhs), "rhs": fmt(self.rhs)}


@dataclass(frozen=True)
class SystemIssue:
    node: str
    asset: int
    problem: str  # "below bid", "above ask", or the violated kind relation

    def __str__(self) -> str:
        return f"node {self.node} asset {self.asset}: {self.problem}"


# -- EBAMM ---------------------------------------------------------------------

def _consecutive_pairs(tree: ScenarioTree) -> list[tuple[int, int]]:
    return [(t - 1, t) for t in range(1, tree.horizon + 1)]


def _measure_program(tree: ScenarioTree, prices: BidAskProcess, pairs: Sequence[tuple[int, int]]):
    """LP over leaf weights q and the minimum weight s.

    For every pair (a, b) of times, atom n at time a and asset i, the
    inequalities E_Q(bid_b | F_a) <= ask_a and bid_a <= E_Q(ask_b | F_a) are
    multiplied through by the mass of n.
    """
    leaves = tree.leaves
    col = {leaf: k for k, leaf in enumerate(leaves)}
    s = len(leaves)
    lp = LinearProgram([0] * s + [1])
    lp.add({k: 1 for k in range(s)}, Relation.EQ, 1)
    for k in range(s):
        lp.add({k: 1, s: -1}, Relation.GE, 0)
    for a, b in pairs:
        for n in tree.atoms_at(a):
            under = tree.leaves_under(n)
            for i in range(prices.dim):
                ask_row: dict[int, Fraction] = {}
                bid_row: dict[int, Fraction] = {}
                for leaf in under:
                    m = tree.ancestor_at(leaf, b)
                    ask_row[col[leaf]] = prices.bid[m][i] - prices.ask[n][i]
                    bid_row[col[leaf]] = prices.ask[m][i] - prices.bid[n][i]
                lp.add(ask_row, Relation.LE, 0)
                lp.add(bid_row, Relation.GE, 0)
    return lp, leaves


def _solve_measure(tree, prices, pairs) -> Ebamm | None:
    lp, leaves = _measure_program(tree, prices, pairs)
    outcome = solve(lp)
    if outcome.status is Status.INFEASIBLE:
        return None
    if outcome.status is not Status.OPTIMAL:
        raise AssertionError(f"measure LP returned {outcome.status.value}")
    margin = outcome.objective_value
    if margin <= 0:
        return None
    return Ebamm(Measure({leaf: outcome.primal[k] for k, leaf in enumerate(leaves)}), margin)


def find_ebamm(tree: ScenarioTree, prices: BidAskProcess) -> Ebamm | None:
    """An EBAMM maximising the smallest leaf weight, or None if there is none."""
    require_valid(tree, prices)
    return _solve_measure(tree, prices, _consecutive_pairs(tree))


def pair_ebamm(tree: ScenarioTree, prices: BidAskProcess, start: int, end: int) -> Ebamm | None:
    """A measure for a single pair of dates only: E(bid_end | F_start) <= ask_start and
    bid_start <= E(ask_end | F_start). Measures for different pairs need not agree."""
    require_valid(tree, prices)
    if not 0 <= start < end <= tree.horizon:
        raise ValueError(f"need 0 <= start < end <= {tree.horizon}, got {start}, {end}")
    return _solve_measure(tree, prices, [(start, end)])


def _check_pair(tree, prices, measure, a, b, out: list[EbammIssue], t_label: int) -> None:
    masses = node_masses(tree, measure)
    for n in tree.atoms_at(a):
        total = masses[n]
        if total == 0:
            raise ZeroMassNode(n)
        for i in range(prices.dim):
            e_bid = Fraction(0)
            e_ask = Fraction(0)
            for m in tree.descendants_at(n, b):
                w = masses[m]
                e_bid += w * prices.bid[m][i]
                e_ask += w * prices.ask[m][i]
            e_bid /= total
            e_ask /= total
            if e_bid > prices.ask[n][i]:
                out.append(EbammIssue(t_label, n, i, "ask", e_bid, prices.ask[n][i]))
            if prices.bid[n][i] > e_ask:
                out.append(EbammIssue(t_label, n, i, "bid", prices.bid[n][i], e_ask))


def verify_ebamm(tree: ScenarioTree, prices: BidAskProcess, measure: Measure,
                 times: Iterable[int] | None = None) -> list[EbammIssue]:
    """Every (t, atom, asset, side) at which ``measure`` fails the EBAMM inequalities."""
    issues: list[EbammIssue] = []
    for leaf in tree.leaves:
        w = measure.weights.get(leaf, Fraction(0))
        if w <= 0:
            issues.append(EbammIssue(tree.horizon, leaf, 0, "weight", w, Fraction(0)))
    for t in (range(1, tree.horizon + 1) if times is None else times):
        _check_pair(tree, prices, measure, t - 1, t, issues, t)
    return issues


# -- measure pasting -------------------------------------------------------------

def marginal(tree: ScenarioTree, measure: Measure, t: int) -> Measure:
    masses = node_masses(tree, measure)
    return Measure({n: masses[n] for n in tree.atoms_at(t)})


def compose_measures(tree: ScenarioTree, outer: Measure, inner: Measure, t: int) -> Measure:
    """Paste ``outer`` (weights on time-t atoms) on top of the conditionals of ``inner``.

    Leaf weight = inner(leaf) * outer(atom) / inner(atom): the density of outer
    with respect to inner restricted to F_t, times inner.
    """
    masses = node_masses(tree, inner)
    weights = {}
    for n in tree.atoms_at(t):
        if masses[n] == 0:
            raise ZeroMassNode(n)
        factor = outer.weights.get(n, Fraction(0)) / masses[n]
        for leaf in tree.leaves_under(n):
            weights[leaf] = inner.weights.get(leaf, Fraction(0)) * factor
    return Measure(weights)


def _retransition(tree: ScenarioTree, measure: Measure, t: int,
                  transitions: Mapping[str, Mapping[str, Fraction]]) -> Measure:
    """Replace the one-step conditionals at the time-t atoms, keeping everything
    else (the F_t marginal and all later conditionals) from ``measure``."""
    outer_masses = node_masses(tree, measure)
    outer = Measure({c: outer_masses[n] * transitions[n][c]
                     for n in tree.atoms_at(t) for c in tree.children(n)})
    return compose_measures(tree, outer, measure, t + 1)


# -- priced systems -----------------------------------------------------------

def verify_priced_system(tree: ScenarioTree, prices: BidAskProcess, system: PricedSystem,
                         start: int = 0) -> list[SystemIssue]:
    """Pinching on nodes at times >= ``start`` and the kind relation on every
    step whose both ends lie in that range."""
    issues: list[SystemIssue] = []
    for t in range(start, tree.horizon + 1):
        for n in tree.atoms_at(t):
            v = system.process.get(n)
            if v is None or len(v) != prices.dim:
                issues.extend(SystemIssue(n, i, "missing value") for i in range(prices.dim))
                continue
            for i in range(prices.dim):
                if v[i] < prices.bid[n][i]:
                    issues.append(SystemIssue(n, i, "below bid"))
                if v[i] > prices.ask[n][i]:
                    issues.append(SystemIssue(n, i, "above ask"))
    if issues:
        return issues
    for t in range(start + 1, tree.horizon + 1):
        try:
            ce = conditional_expectation(tree, system.measure, system.process, t - 1)
        except ZeroMassNode as exc:
            issues.append(SystemIssue(exc.node, 0, "zero measure mass"))
            continue
        for n, e in ce.items():
            v = system.process[n]
            for i in range(prices.dim):
                bad = ((system.kind == MARTINGALE and e[i] != v[i])
                       or (system.kind == SUPERMARTINGALE and e[i] > v[i])
                       or (system.kind == SUBMARTINGALE and e[i] < v[i]))
                if bad:
                    issues.append(SystemIssue(n, i, f"not a {system.kind} step ({fmt(e[i])} vs {fmt(v[i])})"))
    return issues


def cps_implies_ebamm(tree: ScenarioTree, prices: BidAskProcess, cps: PricedSystem) -> Ebamm:
    """A pinched martingale's measure is an EBAMM."""
    if cps.kind != MARTINGALE:
        raise InvalidCps(f"expected a martingale system, got {cps.kind}")
    if not cps.measure.is_equivalent() or set(cps.measure.weights) != set(tree.leaves):
        raise InvalidCps("measure is not strictly positive on every leaf")
    issues = verify_priced_system(tree, prices, cps)
    if issues:
        raise InvalidCps(f"{len(issues)} violations, first: {issues[0]}")
    total = cps.measure.total
    measure = Measure({k: v / total for k, v in cps.measure.weights.items()})
    ebamm = Ebamm(measure, min(measure.weights.values()))
    leftover = verify_ebamm(tree, prices, measure)
    if leftover:
        raise InvalidCps(f"measure fails the EBAMM inequalities: {leftover[0]}")
    return ebamm


def cps_from_ebamm_one_step(tree: ScenarioTree, prices: BidAskProcess, ebamm: Ebamm | Measure, t: int
                            ) -> tuple[dict[str, tuple], dict[str, tuple]]:
    """Super- and submartingale slices on times {t-1, t}.

    Ŝ_t = bid_t, Ŝ_{t-1} = max(bid_{t-1}, E(bid_t | F_{t-1})) and symmetrically
    Š_t = ask_t, Š_{t-1} = min(ask_{t-1}, E(ask_t | F_{t-1})).
    """
    measure = ebamm.measure if isinstance(ebamm, Ebamm) else ebamm
    issues = verify_ebamm(tree, prices, measure, times=[t])
    if issues:
        raise EbammViolation(issues)
    sup = {n: prices.bid[n] for n in tree.atoms_at(t)}
    sub = {n: prices.ask[n] for n in tree.atoms_at(t)}
    e_sup = conditional_expectation(tree, measure, sup, t - 1)
    e_sub = conditional_expectation(tree, measure, sub, t - 1)
    for n in tree.atoms_at(t - 1):
        sup[n] = tuple(max(b, e) for b, e in zip(prices.bid[n], e_sup[n]))
        sub[n] = tuple(min(a, e) for a, e in zip(prices.ask[n], e_sub[n]))
    return sup, sub


def _step_ok(tree, prices, n, pi, sup, sub) -> bool:
    for i in range(prices.dim):
        e_sup = sum((pi[c] * sup[c][i] for c in pi), Fraction(0))
        e_sub = sum((pi[c] * sub[c][i] for c in pi), Fraction(0))
        if e_sup > prices.ask[n][i] or e_sub < prices.bid[n][i]:
            return False
    return True


def _local_transition(tree, prices, n, sup, sub) -> dict[str, Fraction] | None:
    """Conditional law at ``n`` keeping E(Ŝ) <= ask and E(Š) >= bid, with the
    largest smallest branch weight; None if no strictly positive one exists."""
    kids = tree.children(n)
    k = len(kids)
    lp = LinearProgram([0] * k + [1])
    lp.add({j: 1 for j in range(k)}, Relation.EQ, 1)
    for j in range(k):
        lp.add({j: 1, k: -1}, Relation.GE, 0)
    for i in range(prices.dim):
        lp.add({j: sup[c][i] for j, c in enumerate(kids)}, Relation.LE, prices.ask[n][i])
        lp.add({j: sub[c][i] for j, c in enumerate(kids)}, Relation.GE, prices.bid[n][i])
    outcome = solve(lp)
    if outcome.status is not Status.OPTIMAL or outcome.objective_value <= 0:
        return None
    return {c: outcome.primal[j] for j, c in enumerate(kids)}


@dataclass
class PriceSystems:
    sup: PricedSystem
    sub: PricedSystem
    seed: Ebamm
    reseeded: bool = False
    local_repairs: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def measure(self) -> Measure:
        return self.sup.measure

    def to_json(self) -> dict:
        return {"supermartingale": self.sup.to_json(), "submartingale": self.sub.to_json(),
                "reseeded": self.reseeded, "local_repairs": self.local_repairs}


def extend_cps_backward(tree: ScenarioTree, prices: BidAskProcess, ebamm: Ebamm,
                        sup: PricedSystem, sub: PricedSystem) -> tuple[PricedSystem, PricedSystem, int]:
    """One backward induction step.

    ``sup`` and ``sub`` are valid on times t..T under a common measure. At each
    time-(t-1) atom the conditional law of ``ebamm`` is kept when it already
    satisfies E(Ŝ_t) <= ask_{t-1} and E(Š_t) >= bid_{t-1}; otherwise a fresh
    strictly positive law is solved for locally. The new law is pasted onto
    the existing measure (later conditionals untouched) and the processes are
    extended by Ŝ_{t-1} = max(bid, E Ŝ_t), Š_{t-1} = min(ask, E Š_t).

    Returns the extended systems and the number of atoms that needed a local
    law. Raises :class:`CpsConstructionError` when some atom admits none.
    """
    start = min(tree.time(n) for n in sup.process)
    if start == 0:
        raise ValueError("systems already cover time 0")
    t = start
    for system in (sup, sub):
        issues = verify_priced_system(tree, prices, system, start=t)
        if issues:
            raise CpsConstructionError(f"existing {system.kind} system is invalid: {issues[0]}")
    seed_masses = node_masses(tree, ebamm.measure)
    laws: dict[str, dict[str, Fraction]] = {}
    repairs = 0
    for n in tree.atoms_at(t - 1):
        pi = transition(tree, ebamm.measure, n, seed_masses)
        if not (all(w > 0 for w in pi.values()) and _step_ok(tree, prices, n, pi, sup.process, sub.process)):
            pi = _local_transition(tree, prices, n, sup.process, sub.process)
            repairs += 1
            if pi is None:
                raise CpsConstructionError(f"no strictly positive conditional law at atom {n} (time {t - 1})")
        laws[n] = pi
    base = sup.measure
    pasted = _retransition(tree, base, t - 1, laws)
    new_sup = dict(sup.process)
    new_sub = dict(sub.process)
    for n, pi in laws.items():
        e_sup = [sum((pi[c] * sup.process[c][i] for c in pi), Fraction(0)) for i in range(prices.dim)]
        e_sub = [sum((pi[c] * sub.process[c][i] for c in pi), Fraction(0)) for i in range(prices.dim)]
        new_sup[n] = tuple(max(b, e) for b, e in zip(prices.bid[n], e_sup))
        new_sub[n] = tuple(min(a, e) for a, e in zip(prices.ask[n], e_sub))
    return (PricedSystem(new_sup, pasted, SUPERMARTINGALE),
            PricedSystem(new_sub, pasted, SUBMARTINGALE), repairs)


def _construct(tree, prices, seed: Ebamm) -> PriceSystems:
    T = tree.horizon
    sup_slice, sub_slice = cps_from_ebamm_one_step(tree, prices, seed, T)
    measure = seed.measure
    sup = PricedSystem({n: sup_slice[n] for n in tree.atoms_at(T)}, measure, SUPERMARTINGALE)
    sub = PricedSystem({n: sub_slice[n] for n in tree.atoms_at(T)}, measure, SUBMARTINGALE)
    repairs = 0
    for _ in range(T):
        sup, sub, r = extend_cps_backward(tree, prices, seed, sup, sub)
        repairs += r
    return PriceSystems(sup, sub, seed, local_repairs=repairs)


def joint_system_measure(tree: ScenarioTree, prices: BidAskProcess) -> Ebamm | None:
    """A measure carrying a pinched supermartingale and a pinched submartingale
    at once, found by one LP in mass-weighted form; None if no equivalent one exists.

    Variables are the leaf weights q, the minimum weight s and, on every node
    before T and every asset, A = Ŝ·Q(node) and B = Š·Q(node). Leaves carry
    A = bid·q and B = ask·q.
    """
    require_valid(tree, prices)
    leaves = tree.leaves
    d = prices.dim
    counter = itertools.count()
    qcol = {leaf: next(counter) for leaf in leaves}
    scol = next(counter)
    acol = {(n, i): next(counter) for n in tree.internal_nodes() for i in range(d)}
    bcol = {(n, i): next(counter) for n in tree.internal_nodes() for i in range(d)}
    nvar = next(counter)
    objective = [0] * nvar
    objective[scol] = 1
    lp = LinearProgram(objective)
    lp.add({qcol[leaf]: 1 for leaf in leaves}, Relation.EQ, 1)
    for leaf in leaves:
        lp.add({qcol[leaf]: 1, scol: -1}, Relation.GE, 0)

    def mass_weighted(node, i, cols, leaf_price):
        if not tree.children(node):
            return {qcol[node]: leaf_price[node][i]}
        return {cols[node, i]: Fraction(1)}

    for n in tree.internal_nodes():
        under = tree.leaves_under(n)
        for i in range(d):
            for cols, leaf_price, rel in ((acol, prices.bid, Relation.GE), (bcol, prices.ask, Relation.LE)):
                # bid*Q(n) <= X(n) <= ask*Q(n)
                lo = {cols[n, i]: Fraction(1)}
                hi = {cols[n, i]: Fraction(1)}
                for leaf in under:
                    lo[qcol[leaf]] = -prices.bid[n][i]
                    hi[qcol[leaf]] = -prices.ask[n][i]
                lp.add(lo, Relation.GE, 0)
                lp.add(hi, Relation.LE, 0)
                # supermartingale: A(n) >= sum A(c); submartingale: B(n) <= sum B(c)
                step = {cols[n, i]: Fraction(1)}
                for c in tree.children(n):
                    for j, a in mass_weighted(c, i, cols, leaf_price).items():
                        step[j] = step.get(j, Fraction(0)) - a
                lp.add(step, rel, 0)
    outcome = solve(lp)
    if outcome.status is Status.INFEASIBLE:
        return None
    if outcome.status is not Status.OPTIMAL:
        raise AssertionError(f"joint system LP returned {outcome.status.value}")
    if outcome.objective_value <= 0:
        return None
    return Ebamm(Measure({leaf: outcome.primal[qcol[leaf]] for leaf in leaves}), outcome.objective_value)


def build_price_systems(tree: ScenarioTree, prices: BidAskProcess, ebamm: Ebamm | None = None) -> PriceSystems:
    """Backward construction of a supCPS and a subCPS under one equivalent measure.

    The induction starts from ``ebamm`` (found with :func:`find_ebamm` if not
    supplied). Conditional laws that the seed cannot supply are solved for
    locally; if some atom then has no admissible law, the construction is
    restarted once from the measure of :func:`joint_system_measure`, whose
    own conditional laws are admissible at every step. Raises
    :class:`CpsConstructionError` when no equivalent measure supports both
    systems.
    """
    require_valid(tree, prices)
    if ebamm is None:
        ebamm = find_ebamm(tree, prices)
        if ebamm is None:
            raise CpsConstructionError("no EBAMM exists, so there is nothing to start the induction from")
    try:
        result = _construct(tree, prices, ebamm)
    except CpsConstructionError as first:
        seed = joint_system_measure(tree, prices)
        if seed is None:
            raise CpsConstructionError(f"{first}; and no equivalent measure supports both systems") from None
        result = _construct(tree, prices, seed)
        result.reseeded = True
        result.notes.append(str(first))
    for system in (result.sup, result.sub):
        issues = verify_priced_system(tree, prices, system)
        if issues:
            raise CpsConstructionError(f"constructed {system.kind} system fails verification: {issues[0]}")
        if not system.measure.is_equivalent() or system.measure.total != 1:
            raise CpsConstructionError("constructed measure is not an equivalent probability")
    return result


# -- one-period full CPS ------------------------------------------------------------

def cps_one_step(tree: ScenarioTree, prices: BidAskProcess, ebamm: Ebamm) -> PricedSystem:
    """A pinched martingale on a one-period market.

    Per asset, S̃_1 = α·bid_1 + (1 - α)·ask_1 with α chosen so that
    S̃_0 = E_Q(S̃_1) equals max(bid_0, E_Q(bid_1)), which lies in [bid_0, ask_0]
    whenever Q is an EBAMM.
    """
    if tree.horizon != 1:
        raise ValueError("cps_one_step needs a one-period tree")
    issues = verify_ebamm(tree, prices, ebamm.measure)
    if issues:
        raise EbammViolation(issues)
    root = tree.root
    kids = tree.children(root)
    e_bid = conditional_expectation(tree, ebamm.measure, {c: prices.bid[c] for c in kids}, 0)[root]
    e_ask = conditional_expectation(tree, ebamm.measure, {c: prices.ask[c] for c in kids}, 0)[root]
    alphas = []
    for i in range(prices.dim):
        target = max(prices.bid[root][i], e_bid[i])
        width = e_ask[i] - e_bid[i]
        alphas.append(Fraction(1) if width == 0 else (e_ask[i] - target) / width)
    process = {c: tuple(a * b + (1 - a) * s for a, b, s in zip(alphas, prices.bid[c], prices.ask[c]))
               for c in kids}
    process[root] = conditional_expectation(tree, ebamm.measure, process, 0)[root]
    system = PricedSystem(process, ebamm.measure, MARTINGALE)
    problems = verify_priced_system(tree, prices, system)
    if problems:
        raise InvalidCps(f"one-period construction failed: {problems[0]}")
    return system


def search_cps(tree: ScenarioTree, prices: BidAskProcess) -> PricedSystem | None:
    """Experimental: look for a full pinched martingale under some equivalent measure.

    Solved as one LP in mass-weighted form (Z = S̃·Q(node), Z(n) = sum of
    Z(children), bid·Q <= Z <= ask·Q). Not part of the equivalence checks.
    """
    require_valid(tree, prices)
    leaves = tree.leaves
    d = prices.dim
    counter = itertools.count()
    qcol = {leaf: next(counter) for leaf in leaves}
    scol = next(counter)
    zcol = {(n, i): next(counter) for n in tree.all_nodes() for i in range(d)}
    nvar = next(counter)
    objective = [0] * nvar
    objective[scol] = 1
    lp = LinearProgram(objective)
    lp.add({qcol[leaf]: 1 for leaf in leaves}, Relation.EQ, 1)
    for leaf in leaves:
        lp.add({qcol[leaf]: 1, scol: -1}, Relation.GE, 0)
    for n in tree.all_nodes():
        under = tree.leaves_under(n)
        for i in range(d):
            lo = {zcol[n, i]: Fraction(1)}
            hi = {zcol[n, i]: Fraction(1)}
            for leaf in under:
                lo[qcol[leaf]] = -prices.bid[n][i]
                hi[qcol[leaf]] = -prices.ask[n][i]
            lp.add(lo, Relation.GE, 0)
            lp.add(hi, Relation.LE, 0)
            if tree.children(n):
                row = {zcol[n, i]: Fraction(1)}
                for c in tree.children(n):
                    row[zcol[c, i]] = Fraction(-1)
                lp.add(row, Relation.EQ, 0)
    outcome = solve(lp)
    if outcome.status is Status.INFEASIBLE:
        return None
    if outcome.status is not Status.OPTIMAL:
        raise AssertionError(f"CPS search LP returned {outcome.status.value}")
    if outcome.objective_value <= 0:
        return None
    q = {leaf: outcome.primal[qcol[leaf]] for leaf in leaves}
    measure = Measure(q)
    masses = node_masses(tree, measure)
    process = {n: tuple(outcome.primal[zcol[n, i]] / masses[n] for i in range(d)) for n in tree.all_nodes()}
    return PricedSystem(process, measure, MARTINGALE)


# -- Snell envelope --------------------------------------------------------------

@dataclass(frozen=True)
class StoppingTime:
    """``stop_at[n]`` is True exactly at the first node of each path where the
    envelope meets the process. Every path stops at T at the latest."""

    stop_at: Mapping[str, bool]

    def time_on(self, tree: ScenarioTree, leaf: str) -> int:
        for n in tree.path(leaf):
            if self.stop_at.get(n):
                return tree.time(n)
        return tree.horizon


@dataclass(frozen=True)
class SnellEnvelope:
    envelope: Mapping[str, tuple[Fraction, ...]]
    stopping: tuple[StoppingTime, ...]  # one per asset


def snell_envelope(tree: ScenarioTree, measure: Measure, process: Mapping[str, Sequence[Fraction]]
                   ) -> SnellEnvelope:
    """S̃_T = Ŝ_T, S̃_{t-1} = max(Ŝ_{t-1}, E(S̃_t | F_{t-1})), and τ = first t with S̃_t = Ŝ_t."""
    T = tree.horizon
    env: dict[str, tuple[Fraction, ...]] = {n: tuple(process[n]) for n in tree.atoms_at(T)}
    for t in range(T, 0, -1):
        ce = conditional_expectation(tree, measure, env, t - 1)
        for n, e in ce.items():
            env[n] = tuple(max(p, x) for p, x in zip(process[n], e))
    dim = len(env[tree.root])
    stops = []
    for i in range(dim):
        marks: dict[str, bool] = {}
        done: dict[str, bool] = {}  # some strict ancestor is already marked
        for n in tree.all_nodes():
            parent = tree.parent(n)
            done[n] = parent is not None and (done[parent] or marks[parent])
            marks[n] = not done[n] and env[n][i] == process[n][i]
        stops.append(StoppingTime(marks))
    return SnellEnvelope(env, tuple(stops))


def stopped_process(tree: ScenarioTree, values: Mapping[str, Sequence[Fraction]],
                    stopping: Sequence[StoppingTime]) -> dict[str, tuple[Fraction, ...]]:
    """X_{t∧τ} per asset: the value at the stopping node once the path has stopped."""
    out = {}
    for n in tree.all_nodes():
        vec = []
        for i, tau in enumerate(stopping):
            frozen_at = next((a for a in tree.path(n) if tau.stop_at.get(a)), n)
            vec.append(values[frozen_at][i])
        out[n] = tuple(vec)
    return out
