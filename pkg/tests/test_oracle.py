import math

import numpy as np
import pytest

import bnmarket as bm
from bnmarket.oracle import (
    JointTable,
    densify,
    formula_table,
    from_golden,
    oracle_cost,
    oracle_local_markov,
    oracle_logop,
    oracle_prices,
    oracle_trade,
    quantities_from,
    refit_bayesnet,
    satisfaction_vector,
    to_golden,
)

from generators import random_dag, random_net

E = math.e


def single_var(n, name="X"):
    return (bm.VariableSpec(name, tuple(f"o{i}" for i in range(n)), 0),)


def quantity(variables, values):
    return JointTable(tuple(variables), np.asarray(values, dtype=float), "quantity")


class TestDensify:
    def test_uniform_net_is_constant(self, rng):
        dag = random_dag(rng, 3, max_domain=3, edge_p=0.5)
        table = densify(bm.uniform_net(dag))
        assert np.allclose(table.values, table.values[0])

    def test_biased_collider_values(self, collider_net):
        table = densify(collider_net)
        idx = table.index_of({"X1": "v1", "X2": "v1", "X3": "v1"})
        assert table.values[idx] == 1 / 16
        assert table.values.sum() == pytest.approx(1.0, abs=1e-12)

    def test_refit_round_trips(self, rng):
        for _ in range(10):
            dag = random_dag(rng, 4, max_domain=3)
            bn = random_net(rng, dag)
            again = refit_bayesnet(densify(bn), dag)
            assert np.max(np.abs(densify(again).values - densify(bn).values)) < 1e-12

    def test_size_guard(self):
        variables = tuple(
            bm.VariableSpec(f"B{i}", ("v1", "v2"), i) for i in range(21)
        )
        dag = bm.Dag(variables, [])
        with pytest.raises(bm.MarketError):
            densify(bm.uniform_net(dag))

    def test_index_encoding_last_variable_fastest(self):
        variables = (
            bm.VariableSpec("A", ("x", "y"), 0),
            bm.VariableSpec("B", ("p", "q", "r"), 1),
        )
        t = JointTable(variables, np.full(6, 1 / 6))
        assert t.index_of({"A": "x", "B": "p"}) == 0
        assert t.index_of({"A": "x", "B": "r"}) == 2
        assert t.index_of({"A": "y", "B": "p"}) == 3
        assert t.valuation_at(5) == {"A": "y", "B": "r"}


class TestCostAndPrices:
    def test_zero_quantities_uniform(self):
        q = quantity(single_var(4), [0, 0, 0, 0])
        assert oracle_cost(q, 1.0) == pytest.approx(math.log(4), abs=1e-15)
        assert np.allclose(oracle_prices(q, 1.0).values, 0.25)

    def test_log_three_split(self):
        for b in (0.5, 1.0, 7.0):
            q = quantity(single_var(2), [b * math.log(3), 0.0])
            prices = oracle_prices(q, b).values
            assert prices[0] == pytest.approx(0.75, abs=1e-12)
            assert prices[1] == pytest.approx(0.25, abs=1e-12)

    def test_prices_sum_to_one(self, rng):
        q = quantity(single_var(8), rng.normal(0, 5, 8))
        assert oracle_prices(q, 2.0).values.sum() == pytest.approx(1.0, abs=1e-12)

    def test_translation_invariance(self, rng):
        values = rng.normal(0, 3, 6)
        q1 = quantity(single_var(6), values)
        q2 = quantity(single_var(6), values + 17.5)
        p1 = oracle_prices(q1, 1.3).values
        p2 = oracle_prices(q2, 1.3).values
        assert np.max(np.abs(p1 - p2)) < 1e-12

    def test_infinite_negative_quantities(self):
        q = quantity(single_var(3), [0.0, -np.inf, 0.0])
        prices = oracle_prices(q, 1.0).values
        assert prices[1] == 0.0
        assert prices[0] == pytest.approx(0.5)


class TestOracleTrade:
    def test_tautology_shifts_cost_by_delta_b(self, rng):
        variables = single_var(2, "X")
        f = bm.parse_security("(X=o0 | X!=o0)", variables)
        q = quantity(variables, rng.normal(0, 1, 2))
        b, delta = 3.0, 0.7
        t, cost = oracle_trade(q, f, delta, b)
        assert cost == pytest.approx(delta * b, abs=1e-9)
        assert np.allclose(
            oracle_prices(t, b).values, oracle_prices(q, b).values, atol=1e-12
        )

    def test_zero_delta_is_identity(self, rng):
        variables = single_var(3)
        f = bm.parse_security("X=o1", variables)
        q = quantity(variables, rng.normal(0, 1, 3))
        t, cost = oracle_trade(q, f, 0.0, 2.0)
        assert cost == 0.0
        assert np.array_equal(t.values, q.values)

    def test_matches_engine_update(self, rng):
        for _ in range(10):
            dag = random_dag(rng, 3, max_domain=3)
            bn = random_net(rng, dag)
            from generators import random_security

            f = random_security(rng, dag.variables, max_clauses=2)
            b, delta = 2.0, 0.9
            ms = bm.MarketState.fresh(b, bn)
            p = bm.price_of(ms, f)
            if not 0.0 < p < 1.0:
                continue
            new_ms, receipt = bm.apply_trade(ms, f, delta, "approx")
            q = quantities_from(densify(bn), b)
            t, cost = oracle_trade(q, f, delta, b)
            assert receipt.dollar_cost == pytest.approx(cost, abs=1e-9)


class TestFormulaTable:
    def test_single_binary(self):
        variables = single_var(2)
        f = bm.parse_security("X=o0", variables)
        t = formula_table(f)
        assert t.values[0] == pytest.approx(E / (E + 1), abs=1e-15)
        assert t.values[1] == pytest.approx(1 / (E + 1), abs=1e-15)

    def test_satisfaction_vector_matches_eval(self, rng):
        from generators import random_security

        dag = random_dag(rng, 3, max_domain=3)
        f = random_security(rng, dag.variables)
        vec = satisfaction_vector(f)
        t = formula_table(f)
        for idx in range(vec.size):
            val = t.valuation_at(idx)
            assert vec[idx] == bm.eval_formula(f, val)


class TestOracleLogop:
    def test_idempotent_on_equal_inputs(self, rng):
        dag = random_dag(rng, 3)
        p = densify(random_net(rng, dag))
        pooled = oracle_logop(p, 0.5, p, 0.5)
        assert np.max(np.abs(pooled.values - p.values)) < 1e-12

    def test_zero_weight_drops_input(self, rng):
        dag = random_dag(rng, 3)
        p1 = densify(random_net(rng, dag))
        p2 = densify(random_net(rng, dag))
        pooled = oracle_logop(p1, 1.0, p2, 0.0)
        assert np.max(np.abs(pooled.values - p1.values)) < 1e-12
        # nonunit first weight: normalize(p1 ** w1)
        powered = oracle_logop(p1, 2.0, p2, 0.0)
        direct = p1.values**2.0
        direct /= direct.sum()
        assert np.max(np.abs(powered.values - direct)) < 1e-12

    def test_direct_pointwise_formula(self, rng):
        variables = single_var(16)
        w = rng.uniform(0.1, 1, 16)
        p1 = JointTable(variables, w / w.sum())
        w2 = rng.uniform(0.1, 1, 16)
        p2 = JointTable(variables, w2 / w2.sum())
        pooled = oracle_logop(p1, 1.0, p2, 2.5)
        direct = p1.values * p2.values**2.5
        direct /= direct.sum()
        assert np.max(np.abs(pooled.values - direct)) < 1e-12

    def test_empty_support_raises(self):
        variables = single_var(2)
        p1 = JointTable(variables, np.array([1.0, 0.0]))
        p2 = JointTable(variables, np.array([0.0, 1.0]))
        with pytest.raises(bm.MarketError):
            oracle_logop(p1, 1.0, p2, 1.0)

    def test_negative_weight_on_zero_raises(self):
        variables = single_var(2)
        p1 = JointTable(variables, np.array([0.6, 0.4]))
        p2 = JointTable(variables, np.array([1.0, 0.0]))
        with pytest.raises(bm.MarketError):
            oracle_logop(p1, 1.0, p2, -1.0)


class TestLocalMarkov:
    def test_densified_network_satisfies_its_own_graph(self, rng):
        for _ in range(10):
            dag = random_dag(rng, int(rng.integers(2, 6)))
            bn = random_net(rng, dag)
            assert oracle_local_markov(densify(bn), dag)

    def test_detects_violation(self, collider_net):
        # the biased collider's joint does not satisfy an edgeless graph
        dag = bm.Dag(collider_net.variables, [])
        table = densify(collider_net)
        retabled = JointTable(dag.variables, table.values)
        assert not oracle_local_markov(retabled, dag)


class TestGolden:
    def test_round_trip(self, rng):
        dag = random_dag(rng, 3)
        table = densify(random_net(rng, dag))
        text = to_golden(table)
        again = from_golden(table.variables, text)
        assert np.array_equal(again.values, table.values)
        assert again.kind == table.kind
