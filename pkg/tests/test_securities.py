import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bnmarket as bm
from bnmarket.oracle import formula_table, oracle_local_markov, satisfaction_vector

from generators import random_dag, random_security

E = math.e


def tourney_vars():
    return bm.tournament_variables(bm.default_spec(3))


def binary_vars(n):
    return tuple(bm.VariableSpec(f"X{i+1}", ("v1", "v2"), i) for i in range(n))


class TestParsing:
    def test_two_literal_conjunction(self):
        f = bm.parse_security("X2=T1 & X5=T3", tourney_vars())
        assert len(f.clauses) == 2
        assert f.clauses[0].literals == (bm.Literal("X2", "T1", False),)
        assert f.clauses[1].literals == (bm.Literal("X5", "T3", False),)

    def test_tautology_over_one_variable(self):
        f = bm.parse_security("(X1=T1 | X1!=T1)", tourney_vars())
        assert len(f.clauses) == 1
        assert f.clauses[0].literals[1].negated

    def test_unknown_variable_offset(self):
        with pytest.raises(bm.SecurityParseError) as err:
            bm.parse_security("X9=T1", tourney_vars())
        assert err.value.offset == 0

    def test_unknown_value(self):
        with pytest.raises(bm.SecurityParseError) as err:
            bm.parse_security("X4=T9", tourney_vars())
        assert err.value.offset == 3

    def test_empty_clause(self):
        with pytest.raises(bm.SecurityParseError):
            bm.parse_security("X1=T1 & ()", tourney_vars())

    def test_syntax_error_offset(self):
        with pytest.raises(bm.SecurityParseError) as err:
            bm.parse_security("X1=T1 && X2=T2", tourney_vars())
        assert err.value.offset == 7

    def test_whitespace_insignificant(self):
        variables = tourney_vars()
        a = bm.parse_security("(X2=T1|X2=T2)&X5!=T3", variables)
        b = bm.parse_security("  ( X2 = T1 | X2 = T2 )  &  X5 != T3 ", variables)
        assert a.structurally_equal(b)


@st.composite
def securities(draw):
    variables = binary_vars(4)
    n_clauses = draw(st.integers(1, 4))
    clauses = []
    for _ in range(n_clauses):
        n_lits = draw(st.integers(1, 3))
        lits = []
        for _ in range(n_lits):
            var = variables[draw(st.integers(0, 3))]
            lits.append(
                bm.Literal(
                    var.name,
                    var.domain[draw(st.integers(0, 1))],
                    draw(st.booleans()),
                )
            )
        clauses.append(bm.Clause(tuple(lits)))
    return bm.CnfSecurity(clauses, variables)


class TestRoundTrip:
    @given(securities())
    @settings(max_examples=200, deadline=None)
    def test_parse_render_identity(self, f):
        again = bm.parse_security(f.render(), f.variables)
        assert again.structurally_equal(f)
        assert again.render() == f.render()


class TestEvaluation:
    def test_satisfied_parlay(self):
        f = bm.parse_security("X2=T1 & X5=T3", tourney_vars())
        v = {"X1": "T5", "X2": "T1", "X3": "T5", "X4": "T1",
             "X5": "T3", "X6": "T5", "X7": "T7"}
        assert bm.eval_formula(f, v) == 1

    def test_unsatisfied_when_second_leg_fails(self):
        f = bm.parse_security("X2=T1 & X5=T3", tourney_vars())
        v = {"X1": "T5", "X2": "T1", "X3": "T5", "X4": "T1",
             "X5": "T4", "X6": "T5", "X7": "T7"}
        assert bm.eval_formula(f, v) == 0

    def test_negation_tautology(self):
        variables = binary_vars(2)
        f = bm.parse_security("(X1=v1 | X1!=v1)", variables)
        for a, b in itertools.product(("v1", "v2"), repeat=2):
            assert bm.eval_formula(f, {"X1": a, "X2": b}) == 1

    def test_partial_valuation_rejected(self):
        f = bm.parse_security("X1=v1", binary_vars(2))
        with pytest.raises(bm.BadSpecError):
            bm.eval_formula(f, {"X1": "v1"})


class TestCounting:
    def test_single_literal_over_three_binary(self):
        f = bm.parse_security("X1=v1", binary_vars(3))
        assert bm.count_models(f) == 4

    def test_tautology_counts_whole_space(self):
        variables = tourney_vars()
        f = bm.parse_security("(X1=T1 | X1!=T1)", variables)
        full = 1
        for v in variables:
            full *= v.size
        assert bm.count_models(f) == full == 2048

    def test_parlay_count_matches_dense_enumeration(self):
        f = bm.parse_security("X2=T1 & X5=T3", tourney_vars())
        dense = int(satisfaction_vector(f).sum())
        assert bm.count_models(f) == dense == 256

    def test_fixed_assignment(self):
        f = bm.parse_security("X1=v1", binary_vars(3))
        assert bm.count_models(f, {"X1": "v2"}) == 0
        assert bm.count_models(f, {"X2": "v1"}) == 2

    def test_monotone_restriction_random(self, rng):
        for _ in range(25):
            variables = binary_vars(4)
            f = random_security(rng, variables)
            pick = variables[int(rng.integers(0, 4))]
            total = sum(
                bm.count_models(f, {pick.name: label}) for label in pick.domain
            )
            assert total == bm.count_models(f)

    @given(securities(), st.integers(0, 3))
    @settings(max_examples=60, deadline=None)
    def test_monotone_restriction(self, f, which):
        var = f.variables[which]
        assert bm.count_models(f) == sum(
            bm.count_models(f, {var.name: label}) for label in var.domain
        )


class TestPivotal:
    def test_single_literal(self):
        f = bm.parse_security("X1=v1", binary_vars(3))
        assert bm.pivotal_variables(f) == {"X1"}

    def test_tautology_has_none(self):
        f = bm.parse_security("(X1=v1 | X1=v2)", binary_vars(2))
        assert bm.pivotal_variables(f) == frozenset()

    def test_parlay(self):
        f = bm.parse_security("X2=T1 & X5=T3", tourney_vars())
        assert bm.pivotal_variables(f) == {"X2", "X5"}

    def test_flip_oracle(self, rng):
        # brute force: a variable is pivotal iff flipping it changes the
        # formula somewhere in the full space
        for _ in range(20):
            variables = binary_vars(4)
            f = random_security(rng, variables)
            expected = set()
            for v in variables:
                for combo in itertools.product((0, 1), repeat=4):
                    val = {u.name: c for u, c in zip(variables, combo)}
                    out = {f.evaluate_indices({**val, v.name: k}) for k in (0, 1)}
                    if len(out) == 2:
                        expected.add(v.name)
                        break
            assert bm.pivotal_variables(f) == expected


class TestCompatibility:
    def test_parent_child_parlay_compatible(self, eight_team):
        _, dag, _ = eight_team
        f = bm.parse_security("X2=T1 & X5=T3", tourney_vars())
        assert bm.is_compatible(f, dag).compatible

    def test_extra_leg_incompatible_with_verifiable_witness(self, eight_team):
        _, dag, _ = eight_team
        f = bm.parse_security("X2=T1 & X5=T3 & X3=T8", tourney_vars())
        report = bm.is_compatible(f, dag)
        assert not report.compatible
        assert report.witness is not None
        assert report.witness.verify(f)

    def test_any_formula_on_complete_dag(self, rng):
        variables = binary_vars(3)
        dag = bm.Dag(variables, [("X1", "X2"), ("X1", "X3"), ("X2", "X3")])
        for _ in range(15):
            f = random_security(rng, variables)
            assert bm.is_compatible(f, dag).compatible

    def test_width_guard(self):
        variables = tuple(
            bm.VariableSpec(f"X{i+1}", ("v1", "v2"), i) for i in range(25)
        )
        dag = bm.Dag(variables, [])
        clause = bm.Clause(tuple(bm.Literal(v.name, "v1", False) for v in variables))
        f = bm.CnfSecurity([clause], variables)
        with pytest.raises(bm.CompatCheckTooLargeError):
            bm.is_compatible(f, dag)

    def test_matches_markov_check_on_induced_distribution(self, rng):
        # the verdict must coincide with the induced belief satisfying every
        # local Markov property of the graph
        agreements = 0
        for _ in range(40):
            dag = random_dag(rng, int(rng.integers(2, 6)), max_domain=3, edge_p=0.45)
            f = random_security(rng, dag.variables, max_clauses=3)
            verdict = bm.is_compatible(f, dag).compatible
            dense = oracle_local_markov(formula_table(f), dag, tol=1e-12)
            assert verdict == dense
            agreements += 1
        assert agreements == 40

    def test_witness_replays(self, rng):
        found = 0
        for _ in range(60):
            dag = random_dag(rng, 4, max_domain=3, edge_p=0.3)
            f = random_security(rng, dag.variables, max_clauses=3)
            report = bm.is_compatible(f, dag)
            if not report.compatible:
                assert report.witness.verify(f)
                found += 1
        assert found > 5


class TestCliqueScope:
    def test_parent_child_pair(self, eight_team):
        _, dag, _ = eight_team
        f = bm.parse_security("X2=T1 & X5=T3", tourney_vars())
        assert bm.clique_scoped(f, dag)

    def test_siblings_are_not_a_clique(self, eight_team):
        _, dag, _ = eight_team
        f = bm.parse_security("X2=T1 & X3=T5", tourney_vars())
        assert not bm.clique_scoped(f, dag)

    def test_single_variable(self, eight_team):
        _, dag, _ = eight_team
        f = bm.parse_security("X6=T5", tourney_vars())
        assert bm.clique_scoped(f, dag)

    def test_requires_decomposable(self):
        variables = binary_vars(3)
        dag = bm.Dag(variables, [("X1", "X3"), ("X2", "X3")])
        f = bm.parse_security("X1=v1", variables)
        with pytest.raises(bm.BadSpecError):
            bm.clique_scoped(f, dag)

    def test_clique_implies_compatible(self, rng):
        from generators import random_clique_security, random_decomposable_dag

        for _ in range(30):
            dag = random_decomposable_dag(rng, int(rng.integers(2, 7)))
            f = random_clique_security(rng, dag)
            assert bm.clique_scoped(f, dag)
            assert bm.is_compatible(f, dag).compatible


class TestFormulaConditional:
    def test_single_binary_variable(self):
        variables = binary_vars(1)
        f = bm.parse_security("X1=v1", variables)
        row = bm.formula_conditional(f, "X1")
        assert row["v1"] == pytest.approx(E / (E + 1), abs=1e-15)
        assert row["v2"] == pytest.approx(1 / (E + 1), abs=1e-15)

    def test_tautology_gives_uniform(self):
        variables = tourney_vars()
        f = bm.parse_security("(X1=T1 | X1!=T1)", variables)
        row = bm.formula_conditional(f, "X2")
        assert all(p == pytest.approx(0.25, abs=1e-15) for p in row.values())

    def test_conjunction_under_contradicting_evidence(self):
        variables = binary_vars(2)
        f = bm.parse_security("X1=v1 & X2=v1", variables)
        row = bm.formula_conditional(f, "X1", {"X2": "v2"})
        # no models remain: both counts are zero, leaving 1/2
        assert row["v1"] == pytest.approx(0.5, abs=1e-15)

    def test_rows_always_positive(self, rng):
        variables = binary_vars(3)
        f = bm.parse_security("X1=v1 & X1=v2", variables)  # contradiction
        row = bm.formula_conditional(f, "X2")
        assert all(p > 0 for p in row.values())

    def test_matches_dense_conditional(self, rng):
        for _ in range(40):
            n = int(rng.integers(2, 5))
            dag = random_dag(rng, n, max_domain=3)
            f = random_security(rng, dag.variables, max_clauses=3)
            table = formula_table(f)
            target = dag.variables[int(rng.integers(0, n))]
            others = [v for v in dag.variables if v.name != target.name]
            k = int(rng.integers(0, len(others) + 1))
            given = {
                others[i].name: others[i].domain[int(rng.integers(0, others[i].size))]
                for i in rng.choice(len(others), size=k, replace=False)
            }
            row = bm.formula_conditional(f, target.name, given)
            # dense: sum matching outcomes
            num = np.zeros(target.size)
            den = 0.0
            for idx, p in enumerate(table.values):
                val = table.valuation_at(idx)
                if any(val[name] != label for name, label in given.items()):
                    continue
                den += p
                num[target.value_index(val[target.name])] += p
            for i, label in enumerate(target.domain):
                assert abs(row[label] - num[i] / den) < 1e-12
