#!/usr/bin/env python3
"""Randomized engine-vs-oracle sweep: exact updates, costs, and conditionals
against dense recomputation. Prints the worst deviation seen per check.

Usage: python scripts/oracle_sweep.py [--trials N] [--seed S]
"""

import argparse
import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))

import bnmarket as bm
from bnmarket.oracle import (
    densify,
    oracle_trade,
    oracle_update_prices,
    quantities_from,
    satisfaction_vector,
)
from generators import (
    random_clique_security,
    random_decomposable_dag,
    random_net,
    random_security,
)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--trials", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)

    worst = {"update": 0.0, "cost": 0.0, "price": 0.0, "conditional": 0.0}
    for _ in range(args.trials):
        dag = random_decomposable_dag(rng, int(rng.integers(2, 7)))
        bn = random_net(rng, dag)
        dense = densify(bn)

        f = random_clique_security(rng, dag)
        delta = float(rng.uniform(-2.5, 2.5))
        updated = bm.comp_price(dag, bn, f, delta)
        expected = oracle_update_prices(dense, f, delta)
        worst["update"] = max(
            worst["update"], float(np.max(np.abs(densify(updated).values - expected.values)))
        )

        g = random_security(rng, dag.variables)
        ms = bm.MarketState.fresh(float(rng.uniform(0.2, 20)), bn)
        p = bm.price_of(ms, g)
        worst["price"] = max(
            worst["price"],
            abs(p - float(np.dot(dense.values, satisfaction_vector(g)))),
        )
        if 0.0 < p < 1.0:
            q = quantities_from(dense, ms.b)
            _, cost = oracle_trade(q, g, delta, ms.b)
            worst["cost"] = max(worst["cost"], abs(bm.cost_of(ms, g, delta) - cost))

        target = dag.variables[int(rng.integers(0, len(dag.variables)))]
        row = bm.conditional_query(bn, target.name, {})
        grid = dense.grid()
        axes = tuple(i for i in range(len(dag.variables)) if i != target.index)
        marginal = grid.sum(axis=axes)
        for i, label in enumerate(target.domain):
            worst["conditional"] = max(
                worst["conditional"], abs(row[label] - float(marginal[i]))
            )

    for check, dev in worst.items():
        print(f"{check:<12} worst deviation {dev:.3e}")
    if max(worst.values()) > 1e-9:
        print("DEVIATION OVER TOLERANCE", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
