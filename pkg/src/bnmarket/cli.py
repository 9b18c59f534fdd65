"""Operator command line.

Markets live in a store directory (default ``./markets``), one subdirectory
per market, in the same layout the HTTP service uses; ``--market`` takes
either a market id under the store or a path to a market directory.

Exit codes: 0 success, 2 validation problems, 3 engine refusals.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .bayesnet import conditional_query
from .errors import (
    BadSpecError,
    CompatCheckTooLargeError,
    DegeneratePriceError,
    MarketError,
    NotStructurePreservingError,
    NullEventError,
)
from .lmsr import price_of
from .oracle import densify, oracle_update_prices, satisfaction_vector
from .service import (
    MarketStore,
    marginals_payload,
    quote_payload,
    receipt_payload,
)

_VALIDATION_ERRORS = (BadSpecError,)
_ENGINE_ERRORS = (
    DegeneratePriceError,
    NotStructurePreservingError,
    CompatCheckTooLargeError,
    NullEventError,
)


def _table(rows: list[tuple[str, str]]) -> str:
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)


def _resolve(store_arg: str, market_arg: str) -> tuple[MarketStore, str]:
    path = Path(market_arg)
    if path.is_dir() and (path / "market.json").exists():
        return MarketStore(path.parent), path.name
    return MarketStore(store_arg), market_arg


def _cmd_create(args) -> int:
    store = MarketStore(args.store)
    body: dict = {"b": args.b}
    if args.id:
        body["id"] = args.id
    if args.preset:
        body["preset"] = args.preset
        if args.teams:
            body["teams"] = args.teams.split(",")
    elif args.spec:
        body.update(json.loads(Path(args.spec).read_text()))
        body["b"] = args.b
    else:
        raise BadSpecError("create needs --preset or --spec")
    if args.allow_nondecomposable:
        body["allow_nondecomposable"] = True
    market = store.create_market(body)
    info = store.describe(market.id)
    if args.json:
        print(json.dumps(info, indent=1))
    else:
        print(
            _table(
                [
                    ("market", info["id"]),
                    ("b", f"{info['b']:.12g}"),
                    ("variables", str(len(info["variables"]))),
                    ("decomposable", str(info["decomposable"]).lower()),
                    ("directory", str(store.root / market.id)),
                ]
            )
        )
    return 0


def _cmd_quote(args) -> int:
    store, market_id = _resolve(args.store, args.market)
    q, revision = store.get_quote(market_id, args.security, args.shares, args.budget)
    payload = quote_payload(q, revision)
    if args.oracle:
        payload["oracle_max_deviation"] = _oracle_check_quote(store, market_id, args)
    if args.json:
        print(json.dumps(payload, indent=1))
    else:
        rows = [(k, f"{v}") for k, v in payload.items() if v is not None]
        print(_table(rows))
    return 0


def _cmd_trade(args) -> int:
    store, market_id = _resolve(args.store, args.market)
    deviation = None
    if args.oracle:
        deviation = _oracle_check_trade(store, market_id, args)
    receipt = store.post_trade(
        market_id, args.security, args.shares, args.budget, args.mode
    )
    payload = receipt_payload(receipt)
    if deviation is not None:
        payload["oracle_max_deviation"] = deviation
    if args.json:
        print(json.dumps(payload, indent=1))
    else:
        print(_table([(k, f"{v}") for k, v in payload.items() if v is not None]))
    return 0


def _cmd_marginals(args) -> int:
    store, market_id = _resolve(args.store, args.market)
    names = args.vars.split(",") if args.vars else None
    rows = marginals_payload(store.get_marginals(market_id, names))
    if args.json:
        print(json.dumps(rows, indent=1))
        return 0
    lines = []
    for name, row in rows.items():
        for label, p in row.items():
            lines.append((f"{name}={label}", f"{p:.12g}"))
    print(_table(lines))
    return 0


def _cmd_check_compat(args) -> int:
    store, market_id = _resolve(args.store, args.market)
    report = store.check_compat(market_id, args.security)
    if report.compatible:
        print("compatible")
    else:
        w = report.witness
        print("not compatible")
        print(
            _table(
                [
                    ("variable", w.variable),
                    ("values", f"{w.value_a} vs {w.value_b}"),
                    ("blanket", json.dumps(w.blanket)),
                    ("context_a", json.dumps(w.context_a)),
                    ("context_b", json.dumps(w.context_b)),
                ]
            )
        )
    return 0


def _outcome_count(bn) -> int:
    n = 1
    for v in bn.variables:
        n *= v.size
    return n


def _oracle_check_quote(store: MarketStore, market_id: str, args) -> float:
    market = store.get(market_id)
    state = market.state
    if _outcome_count(state.distribution) > 2**16:
        raise BadSpecError("oracle cross-check is limited to 2^16 outcomes")
    f = market.parse(args.security)
    dense = densify(state.distribution)
    dense_price = float(np.dot(dense.values, satisfaction_vector(f)))
    return abs(price_of(state, f) - dense_price)


def _oracle_check_trade(store: MarketStore, market_id: str, args) -> float:
    """Dense dry run of the trade about to execute; returns the largest
    disagreement between engine and dense pricing."""
    market = store.get(market_id)
    state = market.state
    if _outcome_count(state.distribution) > 2**16:
        raise BadSpecError("oracle cross-check is limited to 2^16 outcomes")
    from .updater import apply_trade

    f = market.parse(args.security)
    if args.shares is not None:
        delta = args.shares / state.b
    else:
        from .lmsr import shares_for_budget

        delta = shares_for_budget(state, f, args.budget)
    new_state, receipt = apply_trade(state, f, delta, args.mode)
    dense_before = densify(state.distribution)
    dense_after = oracle_update_prices(dense_before, f, delta)
    ind = satisfaction_vector(f)
    deviations = [abs(receipt.pre_price - float(np.dot(dense_before.values, ind)))]
    if receipt.mode == "exact":
        engine_after = densify(new_state.distribution)
        deviations.append(float(np.max(np.abs(engine_after.values - dense_after.values))))
        deviations.append(abs(receipt.post_price - float(np.dot(dense_after.values, ind))))
    return max(deviations)


def _cmd_oracle_verify(args) -> int:
    store, market_id = _resolve(args.store, args.market)
    market = store.get(market_id)
    state = market.state
    if _outcome_count(state.distribution) > 2**16:
        print("market too large for dense verification (over 2^16 outcomes)")
        return 2
    worst = 0.0
    checks = 0

    dense = densify(state.distribution)
    total = float(dense.values.sum())
    worst = max(worst, abs(total - 1.0))
    checks += 1

    # Marginals against dense sums.
    grid = dense.grid()
    for i, v in enumerate(state.distribution.variables):
        axes = tuple(j for j in range(len(state.distribution.variables)) if j != i)
        dense_row = grid.sum(axis=axes)
        row = conditional_query(state.distribution, v.name, {})
        for k, label in enumerate(v.domain):
            worst = max(worst, abs(row[label] - float(dense_row[k])))
            checks += 1

    # Every security that ever traded, priced both ways.
    for entry in store.log_entries(market_id):
        f = market.parse(entry.security)
        dense_price = float(np.dot(dense.values, satisfaction_vector(f)))
        worst = max(worst, abs(price_of(state, f) - dense_price))
        checks += 1

    # Replay the whole log and compare fingerprints.
    replayed = store.open_market(market_id, verify_log=True)
    replay_ok = replayed.state.fingerprint() == state.fingerprint()

    print(
        _table(
            [
                ("checks", str(checks)),
                ("max_deviation", f"{worst:.3e}"),
                ("replay_bit_identical", str(replay_ok).lower()),
            ]
        )
    )
    return 0 if (worst <= 1e-9 and replay_ok) else 3


def _cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(MarketStore(args.store))
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bnmarket")
    parser.add_argument("--store", default="markets", help="market store directory")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("create", help="create a market")
    p.add_argument("--preset", help="e.g. tournament:m=3")
    p.add_argument("--teams", help="comma-separated team labels for presets")
    p.add_argument("--spec", help="path to a network JSON file")
    p.add_argument("--b", type=float, default=1.0, help="liquidity")
    p.add_argument("--id", help="market id (default: random)")
    p.add_argument("--allow-nondecomposable", action="store_true")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=_cmd_create)

    for name, func, needs_security in (
        ("quote", _cmd_quote, True),
        ("trade", _cmd_trade, True),
        ("check-compat", _cmd_check_compat, True),
        ("marginals", _cmd_marginals, False),
        ("oracle-verify", _cmd_oracle_verify, False),
    ):
        p = sub.add_parser(name)
        p.add_argument("--market", required=True, help="market id or directory")
        if needs_security:
            p.add_argument("--security", required=True)
        if name in ("quote", "trade"):
            p.add_argument("--shares", type=float)
            p.add_argument("--budget", type=float)
            p.add_argument("--oracle", action="store_true", help="cross-check densely")
        if name == "trade":
            p.add_argument("--mode", default="auto", choices=["exact", "approx", "auto"])
        if name == "marginals":
            p.add_argument("--vars", help="comma-separated variable names")
        p.add_argument("--json", action="store_true")
        p.set_defaults(func=func)

    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8720)
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except KeyError as exc:
        print(f"error: no market {exc.args[0]!r}", file=sys.stderr)
        return 2
    except _ENGINE_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except _VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MarketError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
