"""Cross-checks that work beyond dense-oracle scale, plus frozen goldens.

A sixteen-team bracket has 2^26 outcomes, far past any dense pass, but the
closed-form post-trade conditional needs only local enumeration. Exact
network updates and that closed form are fully independent code paths, so
their agreement at this scale is strong evidence for both.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import bnmarket as bm
from bnmarket.oracle import densify, from_golden, oracle_update_prices, to_golden

from generators import random_security


class TestSixteenTeamBracket:
    def test_update_agrees_with_closed_form_conditionals(self, rng):
        spec = bm.default_spec(4)
        dag, bn = bm.build_tournament(spec)
        outcome_count = int(np.prod([v.size for v in dag.variables]))
        assert outcome_count == 2**26  # past dense-oracle scale
        state = bm.MarketState.fresh(1.5, bn)

        for _ in range(6):
            j = int(rng.integers(1, spec.game_count + 1))
            game = spec.game_name(j)
            dom = spec.domain_of(j)
            f = bm.team_security(spec, game, dom[int(rng.integers(0, len(dom)))])
            p = bm.price_of(state, f)
            if not 0.0 < p < 1.0:
                continue
            delta = float(rng.uniform(-1.0, 1.0)) or 0.4
            new_state, receipt = bm.apply_trade(state, f, delta, "auto")
            assert receipt.mode == "exact"

            # closed form on the PRE-trade net vs queries on the POST-trade net
            for _check in range(5):
                k = int(rng.integers(1, spec.game_count + 1))
                b_game = spec.game_name(k)
                b_dom = spec.domain_of(k)
                b_evt = {b_game: b_dom[int(rng.integers(0, len(b_dom)))]}
                e_evt = {}
                if rng.random() < 0.5 and k > 1:
                    parent = spec.game_name(k // 2)
                    p_dom = spec.domain_of(k // 2)
                    e_evt = {parent: p_dom[int(rng.integers(0, len(p_dom)))]}
                    if bm.event_probability(state.distribution, {**e_evt, **b_evt}) == 0.0:
                        continue
                closed = bm.conditional_after_trade(
                    state.distribution, f, b_evt, e_evt, delta
                )
                direct_num = bm.event_probability(
                    new_state.distribution, {**e_evt, **b_evt}
                )
                direct_den = bm.event_probability(new_state.distribution, e_evt)
                assert closed == pytest.approx(direct_num / direct_den, abs=1e-9)
            state = new_state

    def test_sixty_four_team_bracket_stays_interactive(self, rng):
        # 64 teams, 63 games, ~10^36 outcomes: updates and queries must stay
        # local. The bound is generous (typically well under 0.5s); it exists
        # to catch an accidental return to exponential-in-depth behavior.
        import time

        spec = bm.default_spec(6)
        dag, bn = bm.build_tournament(spec)
        state = bm.MarketState.fresh(3.0, bn)
        started = time.monotonic()
        f = bm.team_security(spec, "X32", "T1")
        state, receipt = bm.apply_trade(state, f, 1.0, "auto")
        assert receipt.mode == "exact"
        f2 = bm.parlay_security(spec, "X1", "T1", "X2", "T1")
        state, _ = bm.apply_trade(state, f2, 0.8, "auto")
        rows = [
            bm.conditional_query(state.distribution, v.name, {})
            for v in state.distribution.variables
        ]
        assert len(rows) == 63
        assert time.monotonic() - started < 10.0

        # closed form agrees with the updated network at this scale
        f3 = bm.team_security(spec, "X4", "T1")
        closed = bm.conditional_after_trade(state.distribution, f3, {"X8": "T1"}, {}, 0.5)
        after, _ = bm.apply_trade(state, f3, 0.5, "auto")
        direct = bm.event_probability(after.distribution, {"X8": "T1"})
        assert closed == pytest.approx(direct, abs=1e-9)

    def test_prices_remain_coherent(self, rng):
        spec = bm.default_spec(4)
        dag, bn = bm.build_tournament(spec)
        state = bm.MarketState.fresh(2.0, bn)
        f = bm.parlay_security(spec, "X2", "T1", "X4", "T1")
        state, receipt = bm.apply_trade(state, f, 1.2, "auto")
        # every game's marginal row still sums to one
        for v in state.distribution.variables:
            row = bm.conditional_query(state.distribution, v.name, {})
            assert sum(row.values()) == pytest.approx(1.0, abs=1e-9)
        # and the championship distribution respects the parlay's direction
        champ = bm.conditional_query(state.distribution, "X1", {})
        assert champ["T1"] > 1 / 16


class TestParserFuzz:
    @given(st.text(max_size=40))
    @settings(max_examples=300, deadline=None)
    def test_garbage_never_escapes_parse_errors(self, text):
        variables = bm.tournament_variables(bm.default_spec(3))
        try:
            f = bm.parse_security(text, variables)
        except bm.SecurityParseError:
            return
        # anything accepted must round-trip
        again = bm.parse_security(f.render(), variables)
        assert again.structurally_equal(f)

    @given(st.text(alphabet="X1234567=T!&|() ", max_size=30))
    @settings(max_examples=300, deadline=None)
    def test_near_miss_grammar(self, text):
        variables = bm.tournament_variables(bm.default_spec(3))
        try:
            bm.parse_security(text, variables)
        except bm.SecurityParseError as err:
            assert 0 <= err.offset <= len(text)


class TestGolden:
    def test_collider_unit_trade_matches_frozen_table(self, collider_net):
        from pathlib import Path

        a = bm.parse_security("X3=v1", collider_net.variables)
        after = oracle_update_prices(densify(collider_net), a, 1.0)
        frozen = Path(__file__).parent / "golden" / "collider_after_unit_trade.json"
        assert to_golden(after) == frozen.read_text()
        table = from_golden(after.variables, frozen.read_text())
        assert np.array_equal(table.values, after.values)
