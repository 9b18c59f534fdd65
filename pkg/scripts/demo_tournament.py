#!/usr/bin/env python3
"""Walk an eight-team tournament market through a short trading session and
print how championship odds move.

Usage: python scripts/demo_tournament.py [--b LIQUIDITY]
"""

import argparse

import bnmarket as bm


def championship_line(state):
    row = bm.conditional_query(state.distribution, "X1", {})
    return "  ".join(f"{team}:{p:6.3f}" for team, p in row.items())


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--b", type=float, default=2.0)
    args = parser.parse_args()

    spec = bm.default_spec(3)
    _, bn = bm.build_tournament(spec)
    state = bm.MarketState.fresh(args.b, bn)
    print("fresh market, championship odds:")
    print(" ", championship_line(state))

    session = [
        ("X1=T1", 1.5),            # back T1 to win it all
        ("X2=T1 & X4=T1", 1.0),    # parlay: T1 through both rounds
        ("X3=T5", -0.5),           # fade T5's semifinal
        ("X1=T8", 2.0),            # longshot flyer
    ]
    for text, shares in session:
        f = bm.parse_security(text, state.distribution.variables)
        q = bm.quote(state, f, shares / state.b)
        state, receipt = bm.apply_trade(state, f, shares / state.b, "auto")
        print(
            f"\n{shares:+.1f} shares of {text!r}: cost ${receipt.dollar_cost:.4f} "
            f"({receipt.mode}), price {receipt.pre_price:.4f} -> {receipt.post_price:.4f}"
        )
        assert q.dollar_cost == receipt.dollar_cost
        print(" ", championship_line(state))


if __name__ == "__main__":
    main()
