import numpy as np
import pytest

import bnmarket as bm
from bnmarket.oracle import densify


class TestBracketShape:
    def test_eight_team_domains(self, eight_team):
        spec, dag, bn = eight_team
        assert len(dag.variables) == 7
        assert dag.variable("X1").domain == tuple(f"T{i}" for i in range(1, 9))
        assert dag.variable("X2").domain == ("T1", "T2", "T3", "T4")
        assert dag.variable("X3").domain == ("T5", "T6", "T7", "T8")
        assert dag.variable("X4").domain == ("T1", "T2")
        assert dag.variable("X7").domain == ("T7", "T8")

    def test_edges_run_root_to_leaves(self, eight_team):
        _, dag, _ = eight_team
        assert dag.parents("X4") == ("X2",)
        assert dag.children("X1") == ("X2", "X3")
        assert dag.parents("X1") == ()

    def test_tree_is_decomposable(self, eight_team):
        _, dag, _ = eight_team
        assert bm.is_decomposable(dag)

    def test_round_sizes(self):
        spec = bm.default_spec(4)
        dag, _ = bm.build_tournament(spec)
        assert len(dag.variables) == 15
        assert dag.variable("X1").size == 16
        assert dag.variable("X8").size == 2

    def test_bad_specs_rejected(self):
        with pytest.raises(bm.BadSpecError):
            bm.TournamentSpec(1, ("A", "B"))
        with pytest.raises(bm.BadSpecError):
            bm.TournamentSpec(2, ("A", "B", "C"))
        with pytest.raises(bm.BadSpecError):
            bm.TournamentSpec(2, ("A", "A", "B", "C"))
        with pytest.raises(bm.BadSpecError):
            bm.TournamentSpec(2, ("A", "B", "C", "9D"))


class TestConsistentUniform:
    def test_championship_probabilities_uniform(self, eight_team):
        _, _, bn = eight_team
        row = bm.conditional_query(bn, "X1", {})
        assert all(p == 0.125 for p in row.values())
        # cross-checked densely over all 2048 outcomes
        grid = densify(bn).grid()
        champs = grid.reshape(8, -1).sum(axis=1)
        assert np.allclose(champs, 0.125, atol=1e-12)

    def test_inconsistent_outcomes_are_exactly_zero(self, eight_team):
        _, _, bn = eight_team
        table = densify(bn)
        zero = 0
        for idx, p in enumerate(table.values):
            val = table.valuation_at(idx)
            consistent = all(
                val[f"X{j}"] in (val[f"X{2*j}"], val[f"X{2*j+1}"])
                for j in (1, 2, 3)
            )
            if consistent:
                assert p > 0.0
            else:
                assert p == 0.0
                zero += 1
        assert zero == 2048 - 128

    def test_consistent_outcomes_equiprobable(self, eight_team):
        _, _, bn = eight_team
        values = densify(bn).values
        positive = values[values > 0]
        assert positive.size == 128
        assert np.allclose(positive, 1 / 128, atol=1e-15)

    def test_positive_preset_has_full_support(self):
        spec = bm.default_spec(3)
        _, bn = bm.build_tournament(spec, positive_epsilon=1e-6)
        values = densify(bn).values
        assert np.all(values > 0.0)
        # and it stays close to the consistent-uniform start
        _, hard = bm.build_tournament(spec)
        assert np.max(np.abs(values - densify(hard).values)) < 1e-5


class TestSecurities:
    def test_team_security_text(self, eight_team):
        spec, _, _ = eight_team
        f = bm.team_security(spec, "X2", "T1")
        assert f.render() == "X2=T1"

    def test_parlay_security_text(self, eight_team):
        spec, _, _ = eight_team
        f = bm.parlay_security(spec, "X2", "T1", "X5", "T3")
        assert f.render() == "X2=T1 & X5=T3"

    def test_sibling_parlay_rejected(self, eight_team):
        spec, _, _ = eight_team
        with pytest.raises(bm.BadSpecError):
            bm.parlay_security(spec, "X4", "T1", "X5", "T3")

    def test_team_not_in_domain_rejected(self, eight_team):
        spec, _, _ = eight_team
        with pytest.raises(bm.BadSpecError):
            bm.team_security(spec, "X4", "T5")

    def test_every_single_game_and_parlay_is_structure_preserving(self, eight_team):
        spec, dag, _ = eight_team
        for j in range(1, 8):
            game = spec.game_name(j)
            for team in spec.domain_of(j):
                f = bm.team_security(spec, game, team)
                assert bm.clique_scoped(f, dag)
                assert bm.is_compatible(f, dag).compatible
        for j in range(1, 4):
            for c in (2 * j, 2 * j + 1):
                for t1 in spec.domain_of(j):
                    for t2 in spec.domain_of(c):
                        f = bm.parlay_security(
                            spec, spec.game_name(j), t1, spec.game_name(c), t2
                        )
                        assert bm.is_compatible(f, dag).compatible


class TestZeroPreservation:
    def test_exact_updates_never_revive_zeros(self, eight_team, rng):
        spec, dag, bn = eight_team
        ms = bm.MarketState.fresh(1.0, bn)
        zero_mask = densify(bn).values == 0.0
        for _ in range(15):
            j = int(rng.integers(1, 8))
            game = spec.game_name(j)
            team = spec.domain_of(j)[int(rng.integers(0, len(spec.domain_of(j))))]
            f = bm.team_security(spec, game, team)
            p = bm.price_of(ms, f)
            if not 0.0 < p < 1.0:
                continue
            ms, receipt = bm.apply_trade(ms, f, float(rng.uniform(-1, 1.5)), "auto")
            assert receipt.mode == "exact"
        final = densify(ms.distribution).values
        assert np.all(final[zero_mask] == 0.0)
        assert np.all(final[~zero_mask] > 0.0)


class TestPreset:
    def test_preset_string(self):
        spec, dag, bn = bm.from_preset("tournament:m=3")
        assert spec.rounds == 3
        assert len(dag.variables) == 7

    def test_preset_with_teams(self):
        teams = [f"Club{i}" for i in range(8)]
        spec, dag, _ = bm.from_preset("tournament:m=3", teams=teams)
        assert dag.variable("X1").domain == tuple(teams)

    def test_unknown_preset(self):
        with pytest.raises(bm.BadSpecError):
            bm.from_preset("roundrobin:m=3")
