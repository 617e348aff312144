import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose
from pydantic import ValidationError

from eqsel.exceptions import GuardExceededError, NonErgodicError
from eqsel.game import NormalFormGame
from eqsel.rules import (
    LearnerCell,
    LearningRuleSpec,
    LogLinearRule,
    MardenRule,
    Mood,
    PradelskiYoungRule,
    analytic_resistance,
    best_response_mass,
    check_ergodicity,
    kernel_matrix,
    normalize_payoffs,
    resistance_edges,
    rule_from_name,
    simulate,
    stage_normalization,
    state_space,
    step,
    validate_epsilon,
)


@pytest.fixture
def unit_coordination():
    """Identical interest, 1 on the diagonal and 0 elsewhere"""
    return NormalFormGame.identical((2, 2), [1.0, 0.0, 0.0, 1.0])


def _grid_game(seed, values=(0.0, 0.5, 1.0)):
    rng = np.random.default_rng(seed)
    return NormalFormGame((2, 2), rng.choice(values, size=(2, 4)))


class TestEpsilon(object):
    @pytest.mark.parametrize("eps", [0.0, 1.0, -0.1, 1.5])
    def test_outside_open_interval(self, eps):
        with pytest.raises(NonErgodicError, match="mistake rate in \\(0, 1\\)"):
            validate_epsilon(eps)

    def test_zero_names_ergodicity_assumption(self):
        with pytest.raises(NonErgodicError, match="\\(Assumption 1\\)"):
            validate_epsilon(0.0)

    def test_is_value_error(self):
        with pytest.raises(ValueError):
            validate_epsilon(0)


class TestNormalization(object):
    def test_identity_range_returns_same(self, coordination):
        assert normalize_payoffs(coordination, 0, 1) is coordination

    def test_affine(self, coordination):
        nfg = normalize_payoffs(coordination, 0.0, 2.0)
        assert_allclose(nfg.payoffs[0], [0.25, 0.0, 0.0, 0.5])

    def test_clipping_warns(self, coordination):
        with pytest.warns(RuntimeWarning, match="1 payoff\\(s\\) fall outside"):
            nfg = normalize_payoffs(coordination, 0.0, 0.5)
        assert_allclose(nfg.payoffs[0], [1.0, 0.0, 0.0, 1.0])

    def test_bad_range(self, coordination):
        with pytest.raises(ValueError, match="hi > lo"):
            normalize_payoffs(coordination, 1.0, 1.0)

    def test_stage_normalization(self, treasure):
        assert stage_normalization(treasure, 0) == (0.0, 4.0)
        assert stage_normalization(treasure, 1) == (0.0, 2.0)


class TestLogLinear(object):
    def test_kernel_values(self, unit_coordination):
        K = kernel_matrix(LogLinearRule(2), unit_coordination, 0.1).dense()
        assert_allclose(K[0], [10 / 11, 1 / 22, 1 / 22, 0.0])
        assert_allclose(K[1], [5 / 11, 1 / 11, 0.0, 5 / 11])
        assert_allclose(K.sum(axis=1), 1.0)

    def test_resistance(self, unit_coordination):
        rule = LogLinearRule(2)
        assert analytic_resistance(
            rule, unit_coordination, LearnerCell(0), LearnerCell(2)
        ) == pytest.approx(1.0)
        assert analytic_resistance(
            rule, unit_coordination, LearnerCell(0), LearnerCell(0)
        ) == pytest.approx(0.0)
        assert math.isinf(
            analytic_resistance(
                rule, unit_coordination, LearnerCell(0), LearnerCell(3)
            )
        )

    def test_best_response_mass(self, unit_coordination):
        mass = best_response_mass(unit_coordination, 0, 1, 0.1)
        assert mass == pytest.approx(10 / 11)

    def test_state_space_is_joint_actions(self, coordination):
        space = state_space(LogLinearRule(2), coordination)
        assert len(space) == 4
        assert space.closed
        assert space.action_tuple(2) == "1,0"
        assert space.hidden_desc(2) == ""

    def test_guard(self, coordination):
        with pytest.raises(GuardExceededError, match="node guard"):
            state_space(LogLinearRule(2), coordination, guard=3)

    def test_agent_count_checked(self, coordination):
        with pytest.raises(ValueError, match="built for 3 agents"):
            kernel_matrix(LogLinearRule(3), coordination, 0.1)


class TestMarden(object):
    def test_needs_normalized_payoffs(self):
        nfg = NormalFormGame.identical((2, 2), [2.0, 0.0, 0.0, 1.0])
        with pytest.raises(ValueError, match="normalize_payoffs"):
            kernel_matrix(MardenRule(2), nfg, 0.1)

    def test_initial_cell_content(self, coordination):
        cell = MardenRule(2).initial_cell(coordination, 3)
        assert cell == LearnerCell(3, (Mood.C, Mood.C))
        assert MardenRule(2).describe_hidden(cell.hidden) == "C,C"

    def test_experiment_resistance(self, unit_coordination):
        rule = MardenRule(2)
        start = rule.initial_cell(unit_coordination, 0)
        # agent 0 experiments (c = 2) and (1, 0) pays nothing: staying
        # content costs 1 - 0 per agent
        content = LearnerCell(2, (Mood.C, Mood.C))
        discontent = LearnerCell(2, (Mood.D, Mood.D))
        assert analytic_resistance(
            rule, unit_coordination, start, content
        ) == pytest.approx(4.0)
        assert analytic_resistance(
            rule, unit_coordination, start, discontent
        ) == pytest.approx(2.0)

    def test_custom_c(self, unit_coordination):
        rule = MardenRule(2, c=3.0)
        start = rule.initial_cell(unit_coordination, 0)
        target = LearnerCell(2, (Mood.D, Mood.D))
        assert analytic_resistance(
            rule, unit_coordination, start, target
        ) == pytest.approx(3.0)

    def test_state_space_closed(self, unit_coordination):
        space = state_space(MardenRule(2), unit_coordination)
        assert space.closed
        assert 0 < len(space) <= 16


class TestPradelskiYoung(object):
    @pytest.fixture
    def improving(self):
        """Agent 0 switching from (0, 0) to (1, 0) raises both payoffs"""
        return NormalFormGame.identical((2, 2), [0.2, 0.0, 0.6, 0.0])

    def test_defaults(self):
        rule = PradelskiYoungRule(2)
        assert rule.F(0.0) == pytest.approx(0.5)
        assert rule.G(0.0) == pytest.approx(0.25)
        assert rule.quantize(0.6) == 600000

    def test_describe_hidden(self):
        rule = PradelskiYoungRule(2)
        hidden = ((Mood.C, 0, 500000), (Mood.D, 1, 250000))
        assert rule.describe_hidden(hidden) == "C(0,0.5);D(1,0.25)"

    def test_experiment_adopted(self, improving):
        rule = PradelskiYoungRule(2)
        start = rule.initial_cell(improving, 0)
        adopted = LearnerCell(
            2, ((Mood.C, 1, 600000), (Mood.C_PLUS, 0, 200000))
        )
        assert analytic_resistance(
            rule, improving, start, adopted
        ) == pytest.approx(1.0 + rule.G(0.4))

    def test_literal_case_order(self, improving):
        rule = PradelskiYoungRule(2, literal_case_order=True)
        start = rule.initial_cell(improving, 0)
        adopted = LearnerCell(
            2, ((Mood.C, 1, 600000), (Mood.C_PLUS, 0, 200000))
        )
        assert math.isinf(analytic_resistance(rule, improving, start, adopted))

    def test_kernel_rows(self, coordination):
        K = kernel_matrix(PradelskiYoungRule(2), coordination, 0.05)
        assert_allclose(K.dense().sum(axis=1), 1.0)
        assert K.space.closed


class TestRuleSpec(object):
    def test_builds(self):
        assert isinstance(LearningRuleSpec(rule="log_linear").build(2),
                          LogLinearRule)
        rule = LearningRuleSpec(rule="marden_mood").build(3)
        assert rule.c == 3.0

    def test_marden_c_below_n(self):
        with pytest.raises(ValueError, match="at least the number of agents"):
            LearningRuleSpec(rule="marden_mood", c=1.0).build(2)

    def test_pradelski_young_f_band(self):
        with pytest.raises(ValueError, match="F must stay"):
            LearningRuleSpec(rule="pradelski_young", phi2=1.5).build(2)

    def test_pradelski_young_g_band(self):
        with pytest.raises(ValueError, match="G must stay"):
            LearningRuleSpec(rule="pradelski_young", gamma2=0.6).build(2)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"rule": "fictitious_play"},
            {"rule": "log_linear", "temperature": 1.0},
            {"rule": "marden_mood", "c": -1.0},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValidationError):
            LearningRuleSpec(**kwargs)

    def test_rule_from_name(self):
        assert rule_from_name("pradelski_young", 2, gamma1=0.1).gamma1 == 0.1
        with pytest.raises(ValueError, match="unknown rule"):
            rule_from_name("best_reply", 2)


class TestDynamics(object):
    @settings(max_examples=25, deadline=None)
    @given(
        st.integers(0, 2**32 - 1),
        st.sampled_from(["log_linear", "marden_mood", "pradelski_young"]),
        st.floats(0.01, 0.5),
    )
    def test_transitions_sum_to_one(self, seed, name, eps):
        nfg = _grid_game(seed, values=(0.0, 0.25, 0.5, 0.75, 1.0))
        rule = rule_from_name(name, 2)
        rng = np.random.default_rng(seed)
        cell = rule.initial_cell(nfg, int(rng.integers(4)))
        total = sum(tr.probability(eps) for tr in rule.transitions(cell, nfg))
        assert total == pytest.approx(1.0, abs=1e-12)

    def test_step_consumes_one_uniform(self, coordination, rule_spec):
        rule = rule_spec.build(2)
        cell = rule.initial_cell(coordination, 1)
        rng_a = np.random.default_rng(11)
        rng_b = np.random.default_rng(11)
        step(rule, cell, coordination, 0.1, rng_a)
        rng_b.random()
        assert rng_a.random() == rng_b.random()

    def test_step_stays_at_strict_optimum(self, unit_coordination):
        rule = LogLinearRule(2)
        rng = np.random.default_rng(0)
        cell = LearnerCell(3)
        for _ in range(50):
            cell = step(rule, cell, unit_coordination, 1e-12, rng)
        assert cell == LearnerCell(3)

    def test_simulate_length(self, coordination, rule_spec):
        path = simulate(rule_spec.build(2), coordination, 0.1, 25, rng=3)
        assert len(path) == 26
        assert all(isinstance(cell, LearnerCell) for cell in path)

    def test_simulate_reproducible(self, coordination):
        a = simulate(MardenRule(2), coordination, 0.1, 50, rng=8)
        b = simulate(MardenRule(2), coordination, 0.1, 50, rng=8)
        assert a == b

    def test_ergodicity(self, unit_coordination, rule_spec):
        assert check_ergodicity(rule_spec.build(2), unit_coordination, 0.1)

    def test_zero_resistance_support_not_ergodic(self, unit_coordination):
        assert not check_ergodicity(LogLinearRule(2), unit_coordination, 0.0)

    @pytest.mark.parametrize("name", ["log_linear", "marden_mood"])
    @pytest.mark.parametrize("seed", range(5))
    def test_resistance_calibration(self, name, seed):
        """log-log slope of kernel entries matches the resistances"""
        nfg = _grid_game(seed)
        rule = rule_from_name(name, 2)
        space, src, dst, weight = resistance_edges(rule, nfg)
        e1, e2 = 1e-10, 1e-12
        K1 = kernel_matrix(rule, nfg, e1, space=space).dense()
        K2 = kernel_matrix(rule, nfg, e2, space=space).dense()
        slopes = (np.log(K2[src, dst]) - np.log(K1[src, dst])) / (
            np.log(e2) - np.log(e1)
        )
        assert_allclose(slopes, weight, atol=1e-2)
