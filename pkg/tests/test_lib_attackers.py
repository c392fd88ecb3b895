#!/usr/bin/env python3
"""Tests for scripts/lib/attackers.py: white-box and black-box action poisoning."""

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

sys.path.insert(0, str(Path(__file__).parent.parent / "scripts"))

from lib.attackers import (
    ATTACKER_KINDS,
    AttackDecision,
    AttackerState,
    BlackBoxAttacker,
    NoAttacker,
    WhiteBoxAttacker,
    attacker_observe,
    blackbox_transform,
    clip,
    make_attacker,
    whitebox_epsilon,
    whitebox_transform,
)
from lib.environment import Environment, make_dataset_environment, make_synthetic_environment
from lib.errors import AssumptionViolated, ConfigError, DegenerateDenominator, NumericError
from lib.params import ModelParams, beta_attacker

X = np.array([1.0])


@pytest.fixture  # type: ignore[untyped-decorator]
def env() -> Environment:
    """Three arms on one context: means 0.2, 0.6 and 1.0 (target)."""
    return make_dataset_environment(np.array([[1.0]]), np.array([[0.2], [0.6], [1.0]]))


@pytest.fixture  # type: ignore[untyped-decorator]
def state() -> AttackerState:
    """Black-box state for three arms in one dimension, alpha = 0.2."""
    return AttackerState(ModelParams(d=1, K=3, L=1.0, S=1.0, alpha=0.2, T=1000), target=2)


def set_estimates(st_: AttackerState, values: list[float]) -> None:
    st_.ridge.theta = np.array(values, dtype=np.float64).reshape(-1, 1)


class TestWhiteBoxEpsilon:
    """Test the white-box mixing probability."""

    def test_worked_example(self) -> None:
        assert whitebox_epsilon(1.0, 0.2, 0.2) == pytest.approx(0.75)

    def test_degenerate(self) -> None:
        with pytest.raises(DegenerateDenominator):
            whitebox_epsilon(0.5, 0.5, 0.2)

    def test_margin_too_large(self) -> None:
        with pytest.raises(AssumptionViolated):
            whitebox_epsilon(1.0, 0.95, 0.2)

    def test_random_mean_identity(self) -> None:
        rng = np.random.default_rng(2022)
        for _ in range(10_000):
            target_mean = rng.uniform(0.1, 2.0)
            worst_mean = target_mean * rng.uniform(0.01, 0.99)
            alpha = 0.9 * (1.0 - worst_mean / target_mean) / 2.0
            eps = whitebox_epsilon(target_mean, worst_mean, alpha)
            mixed = eps * target_mean + (1.0 - eps) * worst_mean
            assert abs(mixed - (1.0 - alpha) * target_mean) <= 1e-12
            assert 0.5 < eps <= 1.0 - alpha + 1e-12


class TestWhiteBoxTransform:
    """Test white-box interception against the true means."""

    def test_target_round_untouched(self, env: Environment) -> None:
        decision = whitebox_transform(env, 0.2, X, 2, np.random.default_rng(0))
        assert decision == AttackDecision(2, 2, 1.0, False, 2)

    def test_non_target_round(self, env: Environment) -> None:
        decision = whitebox_transform(env, 0.2, X, 1, np.random.default_rng(0))
        assert decision.epsilon_used == pytest.approx(0.75)
        assert decision.dag_arm == 0
        assert decision.post_action in (0, 2)
        assert decision.attacked

    def test_dagger_choice_unattacked_when_coin_says_dagger(self, env: Environment) -> None:
        rng = np.random.default_rng(1)
        decisions = [whitebox_transform(env, 0.2, X, 0, rng) for _ in range(2000)]
        for d in decisions:
            assert d.attacked == (d.post_action == 2)
        served_target = sum(d.post_action == 2 for d in decisions) / len(decisions)
        assert served_target == pytest.approx(0.75, abs=4 * math.sqrt(0.75 * 0.25 / 2000))

    def test_coin_deterministic(self, env: Environment) -> None:
        first = [whitebox_transform(env, 0.2, X, 1, np.random.default_rng(7)) for _ in range(5)]
        second = [whitebox_transform(env, 0.2, X, 1, np.random.default_rng(7)) for _ in range(5)]
        assert first == second

    def test_unreachable_margin_serves_worst_arm(self) -> None:
        close = make_dataset_environment(np.array([[1.0]]), np.array([[0.9], [0.95], [1.0]]))
        decision = whitebox_transform(close, 0.2, X, 1, np.random.default_rng(0))
        assert decision == AttackDecision(1, 0, 0.0, True, 0, saturated=True)

    def test_target_worst_serves_target(self) -> None:
        swapped = make_dataset_environment(
            np.array([[1.0, 0.0]]), np.array([[0.2, 1.0], [1.0, 0.2]])
        )
        for x in (np.array([0.0, 1.0]), np.array([1.0, 1.0])):
            decision = whitebox_transform(swapped, 0.2, x, 0, np.random.default_rng(0))
            assert decision == AttackDecision(0, 1, 1.0, True, 1, saturated=True)

    def test_saturation_draws_one_coin(self) -> None:
        close = make_dataset_environment(np.array([[1.0]]), np.array([[0.9], [0.95], [1.0]]))
        rng = np.random.default_rng(3)
        whitebox_transform(close, 0.2, X, 1, rng)
        reference = np.random.default_rng(3)
        reference.random()
        assert rng.random() == reference.random()

    @given(st.integers(0, 200), st.integers(0, 2**32 - 1))
    @settings(max_examples=50, deadline=None)
    def test_served_mean_is_scaled_target(self, env_seed: int, seed: int) -> None:
        environment = make_synthetic_environment(d=3, n_arms=4, seed=env_seed, n_probes=300)
        alpha = environment.compute_alpha(shrink=0.9, alpha_min=0.0)
        assume(alpha > 0)
        rng = np.random.default_rng(seed)
        x = environment.probes[int(rng.integers(len(environment.probes)))]
        means = environment.means(x)
        decision = whitebox_transform(environment, alpha, x, 0, rng)
        eps = decision.epsilon_used
        served = eps * means[environment.target] + (1.0 - eps) * means[decision.dag_arm]
        assert abs(served - (1.0 - alpha) * means[environment.target]) <= 1e-12
        assert 0.5 < eps <= 1.0 - alpha + 1e-12


class TestBlackBoxTransform:
    """Test black-box interception on the attacker's own estimates."""

    @pytest.mark.parametrize(
        ("estimates", "expected"),
        [
            ([0.2, 0.9, 1.0], 0.75),
            ([0.9, 0.95, 1.0], 0.5),
            ([-0.5, 0.3, 1.0], 0.8),
            ([1.0, 2.0, 0.5], 0.8),
        ],
    )
    def test_clipped_epsilon(
        self, state: AttackerState, estimates: list[float], expected: float
    ) -> None:
        set_estimates(state, estimates)
        decision = blackbox_transform(state, X, 1, 1, np.random.default_rng(0))
        assert decision.dag_arm == 0
        assert decision.epsilon_used == pytest.approx(expected)
        assert state.degenerate_rounds == 0

    def test_degenerate_uses_upper_rail(self, state: AttackerState) -> None:
        decision = blackbox_transform(state, X, 0, 1, np.random.default_rng(0))
        assert decision.epsilon_used == pytest.approx(0.8)
        assert state.degenerate_rounds == 1

    def test_target_round_untouched(self, state: AttackerState) -> None:
        decision = blackbox_transform(state, X, 2, 5, np.random.default_rng(0))
        assert decision == AttackDecision(2, 2, 1.0, False, 2)

    def test_round_index_starts_at_one(self, state: AttackerState) -> None:
        with pytest.raises(ConfigError):
            blackbox_transform(state, X, 0, 0, np.random.default_rng(0))

    def test_dagger_has_lowest_lower_bound(self, state: AttackerState) -> None:
        for _ in range(40):
            state.ridge.update(1, X, 0.0, grow_only=True)
        set_estimates(state, [0.3, 0.25, 1.0])
        estimates, half_widths = state.confidence_intervals(X)
        decision = blackbox_transform(state, X, 0, 1, np.random.default_rng(0))
        lower = estimates - half_widths
        assert decision.dag_arm == int(np.argmin(lower[:2]))

    @given(st.lists(st.floats(-2, 2), min_size=3, max_size=3), st.integers(0, 2**32 - 1))
    @settings(max_examples=200, deadline=None)
    def test_epsilon_range(self, values: list[float], seed: int) -> None:
        st_ = AttackerState(ModelParams(d=1, K=3, L=1.0, S=1.0, alpha=0.2, T=1000), target=2)
        set_estimates(st_, values)
        decision = blackbox_transform(st_, X, 0, 1, np.random.default_rng(seed))
        assert 0.5 <= decision.epsilon_used <= 0.8

    def test_clip(self) -> None:
        assert clip(0.5, 0.3, 0.8) == 0.5
        assert clip(0.5, 0.9, 0.8) == 0.8
        assert clip(0.5, 0.6, 0.8) == 0.6


class TestAttackerObserve:
    """Test the importance-weighted attacker update."""

    def test_target_round(self, state: AttackerState) -> None:
        attacker_observe(state, X, AttackDecision(2, 2, 1.0, False, 2), 0.9)
        assert state.counts.tolist() == [0, 0, 1]
        assert state.ridge.b[2, 0] == pytest.approx(0.9)

    def test_served_target_on_attacked_round(self, state: AttackerState) -> None:
        attacker_observe(state, X, AttackDecision(1, 2, 0.6, True, 0), 0.9)
        assert state.counts.tolist() == [1, 0, 1]
        assert state.ridge.b[2, 0] == pytest.approx(0.9 / 0.6)
        assert state.ridge.b[0, 0] == 0.0
        assert state.ridge.V[0, 0, 0] == pytest.approx(state.ridge.lam + 1.0)

    def test_served_dagger(self, state: AttackerState) -> None:
        attacker_observe(state, X, AttackDecision(1, 0, 0.6, True, 0), 0.3)
        assert state.counts.tolist() == [1, 0, 1]
        assert state.ridge.b[2, 0] == 0.0
        assert state.ridge.b[0, 0] == pytest.approx(0.3 / 0.4)

    def test_rejects_invalid_epsilon(self, state: AttackerState) -> None:
        with pytest.raises(NumericError):
            attacker_observe(state, X, AttackDecision(1, 0, 0.0, True, 0), 0.3)

    def test_counts_invariants(self, env: Environment) -> None:
        p = ModelParams(d=1, K=3, L=1.0, S=1.0, alpha=0.2, T=1000)
        attacker = BlackBoxAttacker(p, env.target, np.random.default_rng(3))
        rng = np.random.default_rng(4)
        non_target = 0
        for t in range(1, 301):
            arm = int(rng.integers(3))
            decision = attacker.transform(X, arm, t)
            reward = env.draw_reward(X, decision.post_action, rng)
            attacker.observe(X, decision, reward)
            non_target += arm != env.target
        counts = attacker.state.counts
        assert counts[env.target] == 300
        assert int(counts.sum()) - 300 == non_target

    def test_weighted_estimates_unbiased(self, state: AttackerState) -> None:
        rng = np.random.default_rng(2022)
        n = 100_000
        eps = 0.6
        target_mean, dagger_mean, noise = 1.0, 0.3, 0.1
        for _ in range(n):
            if rng.random() < eps:
                decision = AttackDecision(1, 2, eps, True, 0)
                reward = target_mean + noise * rng.standard_normal()
            else:
                decision = AttackDecision(1, 0, eps, True, 0)
                reward = dagger_mean + noise * rng.standard_normal()
            attacker_observe(state, X, decision, float(reward))
        target_sd = math.sqrt((target_mean**2 + noise**2) / eps - target_mean**2)
        dagger_sd = math.sqrt((dagger_mean**2 + noise**2) / (1 - eps) - dagger_mean**2)
        assert abs(state.ridge.theta[2, 0] - target_mean) <= 4 * target_sd / math.sqrt(n)
        assert abs(state.ridge.theta[0, 0] - dagger_mean) <= 4 * dagger_sd / math.sqrt(n)


class TestAttackers:
    """Test the attacker classes used by the trial loop."""

    def test_no_attacker_passes_through(self) -> None:
        decision = NoAttacker(target=2).transform(X, 1, 1)
        assert decision.post_action == 1
        assert not decision.attacked

    def test_make_attacker(self, env: Environment) -> None:
        p = ModelParams(d=1, K=3, L=1.0, S=1.0, alpha=0.2)
        for kind in ATTACKER_KINDS:
            attacker = make_attacker(kind, env, p, np.random.default_rng(0))
            assert attacker.kind == kind
            assert attacker.target == 2
        whitebox = make_attacker("whitebox", env, p, np.random.default_rng(0))
        assert isinstance(whitebox, WhiteBoxAttacker)

    def test_unknown_kind(self, env: Environment) -> None:
        p = ModelParams(d=1, K=3, L=1.0, S=1.0)
        with pytest.raises(ConfigError, match="unknown attacker kind"):
            make_attacker("greybox", env, p, np.random.default_rng(0))

    def test_discrepancy_bound_positive(self, state: AttackerState) -> None:
        assert state.mean_discrepancy_bound(X, 0) > 0

    def test_whitebox_counts_unreachable_rounds(self) -> None:
        close = make_dataset_environment(np.array([[1.0]]), np.array([[0.9], [0.95], [1.0]]))
        attacker = WhiteBoxAttacker(close, 0.2, np.random.default_rng(0))
        decisions = [attacker.transform(X, arm, t) for t, arm in enumerate([0, 2, 1, 0], start=1)]
        assert attacker.unattackable_rounds == 3
        assert [d.saturated for d in decisions] == [True, False, True, True]

    def test_state_widths_follow_counts(self, state: AttackerState) -> None:
        rng = np.random.default_rng(5)
        for t in range(1, 41):
            decision = blackbox_transform(state, X, int(rng.integers(3)), t, rng)
            attacker_observe(state, X, decision, float(rng.normal(0.5, 0.1)))
            expected = [
                beta_attacker(int(n), i == state.target, state.params)
                for i, n in enumerate(state.counts)
            ]
            np.testing.assert_allclose(state.widths(), expected, rtol=1e-15)
