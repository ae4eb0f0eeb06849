"""Command-line front end.

Every subcommand prints one canonical JSON report (sorted keys, rationals as
lowest-terms strings) on standard output. Exit codes: 0 when the analysis
completed, whatever the verdict; 2 for malformed input; 3 when a certificate
fails its own re-verification; 1 when the LP pivot budget runs out.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import random
import re
import sys
from fractions import Fraction

from . import __version__
from .arbitrage import InternalInvariantError, detect_arbitrage, is_arbitrage, one_step_scan
from .crr import CrrParams, DegenerateDynamics, SpreadConstraintViolated, ebamm_interval, generate_tree, na_conditions
from .generate import random_market
from .lp import PivotBudgetExceeded
from .portfolio import UndefinedHolding, Strategy, terminal_values, value_process
from .pricing import (CpsConstructionError, build_price_systems, find_ebamm, search_cps, verify_ebamm,
                      verify_priced_system)
from .rational import fmt, to_fraction
from .tree import MarketError, market_from_dict, market_to_dict, require_valid, validate

EXIT_OK = 0
EXIT_BUDGET = 1
EXIT_MALFORMED = 2
EXIT_INVARIANT = 3


class MalformedInput(ValueError):
    pass


def _read(path: str) -> tuple[bytes, dict]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise MalformedInput(f"cannot read {path}: {exc.strerror}") from exc
    try:
        return raw, json.loads(raw)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedInput(f"{path}: invalid JSON: {exc}") from exc


def _load_market(path: str, require: bool = True):
    raw, data = _read(path)
    tree, prices = market_from_dict(data)
    if require:
        require_valid(tree, prices)
    return hashlib.sha256(raw).hexdigest(), tree, prices


def _args_digest(args) -> str:
    """Digest of the parsed flags, for subcommands that read no input file."""
    flags = {k: (fmt(v) if isinstance(v, Fraction) else v) for k, v in vars(args).items() if k != "func"}
    return hashlib.sha256(json.dumps(flags, sort_keys=True).encode()).hexdigest()


def _check(condition: bool, message: str) -> None:
    if not condition:
        raise InternalInvariantError(message)


def _verify_witness(tree, prices, verdict) -> None:
    if verdict.has_arbitrage:
        replay = terminal_values(tree, prices, verdict.witness)
        _check(replay == dict(verdict.witness_values), "witness values do not replay")
        _check(is_arbitrage(replay), "witness is not an arbitrage")


def cmd_validate(args) -> tuple[str, dict]:
    digest, tree, prices = _load_market(args.market, require=False)
    return digest, validate(tree, prices).to_json()


def cmd_arbitrage(args) -> tuple[str, dict]:
    digest, tree, prices = _load_market(args.market)
    verdict = detect_arbitrage(tree, prices)
    _verify_witness(tree, prices, verdict)
    result = verdict.to_json()
    if args.scan:
        scan = []
        for t, v in one_step_scan(tree, prices):
            _verify_witness(tree, prices, v)
            scan.append({"t": t, **v.to_json()})
        result["one_step_scan"] = scan
    return digest, result


def cmd_ebamm(args) -> tuple[str, dict]:
    digest, tree, prices = _load_market(args.market)
    ebamm = find_ebamm(tree, prices)
    if ebamm is None:
        return digest, {"exists": False}
    _check(not verify_ebamm(tree, prices, ebamm.measure), "returned measure fails the EBAMM inequalities")
    return digest, {"exists": True, **ebamm.to_json()}


def cmd_cps(args) -> tuple[str, dict]:
    digest, tree, prices = _load_market(args.market)
    if args.search:
        found = search_cps(tree, prices)
        result: dict = {"experimental": True, "exists": found is not None}
        if found is not None:
            _check(not verify_priced_system(tree, prices, found), "searched CPS fails verification")
            result["system"] = found.to_json()
        return digest, result
    try:
        systems = build_price_systems(tree, prices)
    except CpsConstructionError as exc:
        return digest, {"exists": False, "reason": str(exc)}
    for system in (systems.sup, systems.sub):
        _check(not verify_priced_system(tree, prices, system), f"{system.kind} system fails verification")
    return digest, {"exists": True, **systems.to_json()}


def cmd_value(args) -> tuple[str, dict]:
    digest, tree, prices = _load_market(args.market)
    _, data = _read(args.strategy)
    try:
        strategy = Strategy.from_lists(data["holdings"])
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedInput(f"{args.strategy}: malformed strategy: {exc}") from exc
    for n, h in strategy.holdings.items():
        if len(h) != prices.dim:
            raise MalformedInput(f"holding at node {n} has length {len(h)}, expected {prices.dim}")
    per_time = {}
    for t in range(1, tree.horizon + 1):
        per_time[str(t)] = {n: fmt(v) for n, v in value_process(tree, prices, strategy, t).items()}
    return digest, {"terminal": per_time[str(tree.horizon)], "values": per_time}


def cmd_crr(args) -> tuple[str, dict]:
    params = CrrParams(u_bid=args.u_bid, d_bid=args.d_bid, u_ask=args.u_ask, d_ask=args.d_ask,
                       s_bid_0=args.s_bid0, s_ask_0=args.s_ask0, p=args.p, steps=args.steps)
    interval = ebamm_interval(params)
    result = {"interval": interval.to_json(), "na_conditions": na_conditions(params).to_json()}
    try:
        tree, prices = generate_tree(params)
    except SpreadConstraintViolated as exc:
        result["market"] = None
        result["spread_violation"] = {"node": exc.node, "ratio": fmt(exc.ratio), "bound": fmt(exc.bound)}
    else:
        _check(validate(tree, prices).ok, "generated market fails validation")
        result["market"] = market_to_dict(tree, prices)
    return _args_digest(args), result


def equivalence_row(tree, prices) -> dict:
    """NA, EBAMM existence and successful system construction for one market."""
    verdict = detect_arbitrage(tree, prices)
    _verify_witness(tree, prices, verdict)
    ebamm = find_ebamm(tree, prices)
    if ebamm is not None:
        _check(not verify_ebamm(tree, prices, ebamm.measure), "EBAMM fails verification")
    try:
        systems = build_price_systems(tree, prices, ebamm)
    except CpsConstructionError:
        systems = None
    built = systems is not None and not any(
        verify_priced_system(tree, prices, s) for s in (systems.sup, systems.sub))
    na = not verdict.has_arbitrage
    return {"no_arbitrage": na, "ebamm": ebamm is not None, "systems": built,
            "agree": na == (ebamm is not None) == built}


def cmd_equivalence(args) -> tuple[str, dict]:
    rng = random.Random(args.seed)
    rows = []
    for k in range(args.count):
        tree, prices = random_market(rng, args.max_horizon, args.max_branching, args.max_dim)
        rows.append({"index": k, "leaves": len(tree.leaves), "horizon": tree.horizon,
                     "dim": prices.dim, **equivalence_row(tree, prices)})
    agreed = sum(r["agree"] for r in rows)
    return _args_digest(args), {"count": args.count, "agreements": agreed, "markets": rows}


def _rational(text: str) -> Fraction:
    try:
        return to_fraction(text)
    except (TypeError, ValueError) as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spreadbench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"spreadbench {__version__}")
    parser.add_argument("--summary", action="store_true", help="also print a short summary on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check market invariants")
    p.add_argument("market")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("arbitrage", help="decide no-arbitrage and print a witness if there is one")
    p.add_argument("market")
    p.add_argument("--scan", action="store_true", help="also report every one-period submarket")
    p.set_defaults(func=cmd_arbitrage)

    p = sub.add_parser("ebamm", help="search for an equivalent bid-ask martingale measure")
    p.add_argument("market")
    p.set_defaults(func=cmd_ebamm)

    p = sub.add_parser("cps", help="build supermartingale and submartingale price systems")
    p.add_argument("market")
    p.add_argument("--search", action="store_true",
                   help="experimental: look for a full pinched martingale instead")
    p.set_defaults(func=cmd_cps)

    p = sub.add_parser("value", help="liquidation values of a strategy")
    p.add_argument("market")
    p.add_argument("--strategy", required=True)
    p.set_defaults(func=cmd_value)

    p = sub.add_parser("crr", help="bid-ask binomial model: interval, conditions and market")
    p.add_argument("--s-bid0", type=_rational, default=Fraction(1))
    p.add_argument("--s-ask0", type=_rational, default=Fraction(1))
    p.add_argument("--u-bid", type=_rational, required=True)
    p.add_argument("--d-bid", type=_rational, required=True)
    p.add_argument("--u-ask", type=_rational, required=True)
    p.add_argument("--d-ask", type=_rational, required=True)
    p.add_argument("-p", type=_rational, default=Fraction(1, 2))
    p.add_argument("--steps", type=int, default=1)
    p.set_defaults(func=cmd_crr)

    p = sub.add_parser("equivalence", help="three-way agreement check on seeded random markets")
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-horizon", type=int, default=3)
    p.add_argument("--max-branching", type=int, default=3)
    p.add_argument("--max-dim", type=int, default=2)
    p.set_defaults(func=cmd_equivalence)
    return parser


def _summary(command: str, result: dict) -> str:
    if command == "validate":
        return "valid" if result["ok"] else f"{len(result['problems'])} problem(s)"
    if command == "arbitrage":
        return "arbitrage found" if result["has_arbitrage"] else "no arbitrage"
    if command in ("ebamm", "cps"):
        return "exists" if result["exists"] else "none"
    if command == "equivalence":
        return f"{result['agreements']}/{result['count']} agree"
    if command == "crr":
        iv = result["interval"]
        return f"interval [{iv['q_lo']}, {iv['q_hi']}], conditions hold: {result['na_conditions']['holds']}"
    return f"{len(result['terminal'])} terminal values"


_NEGATIVE = re.compile(r"^-\d+(/\d+|\.\d+)?$")


def _attach_negative_values(argv: list[str]) -> list[str]:
    """Rewrite ``--flag -1/4`` as ``--flag=-1/4`` so argparse does not read the
    value as an option."""
    out: list[str] = []
    for token in argv:
        if out and out[-1].startswith("-") and "=" not in out[-1] and not _NEGATIVE.match(out[-1]) \
                and _NEGATIVE.match(token) and "/" in token:
            out[-1] = f"{out[-1]}={token}"
        else:
            out.append(token)
    return out


def run(argv=None) -> int:
    argv = _attach_negative_values(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_MALFORMED
    try:
        digest, result = args.func(args)
    except (MarketError, MalformedInput, UndefinedHolding, DegenerateDynamics) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    except InternalInvariantError as exc:
        print(f"internal invariant breach: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except PivotBudgetExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BUDGET
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MALFORMED
    report = {"command": args.command, "input_sha256": digest, "result": result, "version": __version__}
    print(json.dumps(report, sort_keys=True, indent=2))
    if args.summary:
        print(_summary(args.command, result), file=sys.stderr)
    return EXIT_OK


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
