#!/usr/bin/env python3
"""Tests for scripts/lib/agents.py: LinUCB, LinTS and epsilon-greedy victims."""

import math
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "scripts"))

from lib.agents import (
    AGENT_KINDS,
    EpsilonGreedyAgent,
    LinTSAgent,
    LinUCBAgent,
    default_exploration,
    make_agent,
)
from lib.errors import ConfigError
from lib.params import ModelParams, omega, omega_array


@pytest.fixture  # type: ignore[untyped-decorator]
def params() -> ModelParams:
    """Four arms in two dimensions."""
    return ModelParams(d=2, K=4, T=10_000)


class TestLinUCB:
    """Test optimistic selection."""

    def test_fresh_agent_picks_first_arm(self, params: ModelParams) -> None:
        agent = LinUCBAgent(params)
        assert agent.select(np.array([1.0, 0.3])) == 0

    def test_two_arm_worked_example(self) -> None:
        p = ModelParams(d=1, K=2, L=1.0, S=1.0, lam=2.0)
        agent = LinUCBAgent(p)
        x = np.array([1.0])
        agent.observe(x, 0, 1.0)
        bounds = agent.upper_bounds(x)
        assert bounds[0] == pytest.approx(1 / 3 + omega(1, p) / math.sqrt(3))
        assert bounds[1] == pytest.approx(omega(0, p) / math.sqrt(2))
        assert agent.select(x) == int(np.argmax(bounds))

    def test_observe_touches_only_chosen_arm(self, params: ModelParams) -> None:
        agent = LinUCBAgent(params)
        rng = np.random.default_rng(0)
        for _ in range(30):
            agent.observe(rng.normal(size=2), int(rng.integers(4)), float(rng.normal()))
        before_v = agent.ridge.V.copy()
        before_b = agent.ridge.b.copy()
        agent.observe(np.array([0.5, -0.5]), 2, 0.7)
        for arm in (0, 1, 3):
            np.testing.assert_array_equal(agent.ridge.V[arm], before_v[arm])
            np.testing.assert_array_equal(agent.ridge.b[arm], before_b[arm])
        assert int(agent.counts.sum()) == agent.t == 31

    def test_observe_rejects_bad_arm(self, params: ModelParams) -> None:
        agent = LinUCBAgent(params)
        with pytest.raises(ConfigError):
            agent.observe(np.ones(2), 4, 0.0)

    def test_estimate_converges_on_fixed_direction(self, params: ModelParams) -> None:
        agent = LinUCBAgent(params)
        x = np.array([1.0, 0.0])
        n = 5000
        for _ in range(n):
            agent.observe(x, 1, 0.8)
        estimate = float(agent.ridge.theta[1] @ x)
        assert abs(estimate - 0.8) <= params.lam / n

    def test_bounds_use_current_widths(self, params: ModelParams) -> None:
        agent = LinUCBAgent(params)
        rng = np.random.default_rng(8)
        for _ in range(200):
            x = rng.uniform(-1, 1, size=2) / 2
            expected = agent.ridge.estimates(x) + omega_array(
                agent.counts, params
            ) * agent.ridge.norms(x)
            np.testing.assert_allclose(agent.upper_bounds(x), expected, rtol=1e-12, atol=1e-15)
            arm = agent.select(x)
            agent.observe(x, arm, float(rng.normal(0.3, 0.1)))

    def test_learns_best_arm(self) -> None:
        p = ModelParams(d=2, K=3, T=3000)
        thetas = np.array([[0.2, 0.1], [0.3, 0.0], [0.9, 0.2]])
        agent = LinUCBAgent(p)
        rng = np.random.default_rng(8)
        late = []
        for t in range(3000):
            x = np.array([1.0, rng.uniform(-1, 1)])
            arm = agent.select(x)
            agent.observe(x, arm, float(thetas[arm] @ x + rng.normal(0, 0.1)))
            if t >= 2000:
                late.append(arm)
        assert late.count(2) / len(late) > 0.8


class TestLinTS:
    """Test posterior sampling."""

    def test_zero_scale_is_greedy(self, params: ModelParams) -> None:
        agent = LinTSAgent(params, np.random.default_rng(1), scale=0.0)
        x = np.array([1.0, 0.0])
        agent.observe(x, 3, 1.0)
        agent.observe(x, 1, 0.5)
        np.testing.assert_array_equal(agent.sample_coefficients(), agent.ridge.theta)
        assert agent.select(x) == 3

    def test_fresh_agent_uniform(self, params: ModelParams) -> None:
        agent = LinTSAgent(params, np.random.default_rng(2), scale=1.0)
        x = np.array([1.0, 0.5])
        n = 10_000
        hits = np.bincount([agent.select(x) for _ in range(n)], minlength=4)
        sigma = math.sqrt(0.25 * 0.75 / n)
        assert (np.abs(hits / n - 0.25) <= 4 * sigma).all()

    def test_sample_covariance(self) -> None:
        p = ModelParams(d=2, K=2)
        agent = LinTSAgent(p, np.random.default_rng(3), scale=1.0)
        draws = np.array([agent.sample_coefficients()[0] for _ in range(20_000)])
        np.testing.assert_allclose(np.cov(draws.T), np.eye(2) / p.lam, atol=0.02)

    def test_default_scale_uses_omega(self, params: ModelParams) -> None:
        agent = LinTSAgent(params, np.random.default_rng(4))
        assert agent.scale is None
        assert agent.sample_coefficients().shape == (4, 2)

    def test_negative_scale_rejected(self, params: ModelParams) -> None:
        with pytest.raises(ConfigError):
            LinTSAgent(params, np.random.default_rng(0), scale=-1.0)

    def test_deterministic_given_stream(self, params: ModelParams) -> None:
        x = np.array([1.0, -0.2])
        runs = []
        for _ in range(2):
            agent = LinTSAgent(params, np.random.default_rng(99), scale=0.5)
            picks = []
            for _ in range(200):
                arm = agent.select(x)
                agent.observe(x, arm, 0.1 * arm)
                picks.append(arm)
            runs.append(picks)
        assert runs[0] == runs[1]


class TestEpsilonGreedy:
    """Test decaying exploration."""

    def test_default_schedule(self) -> None:
        schedule = default_exploration(1.0, 10)
        assert schedule(1) == 1.0
        assert schedule(10) == 1.0
        assert schedule(100) == pytest.approx(0.1)

    def test_exploration_probability_tracks_rounds(self, params: ModelParams) -> None:
        agent = EpsilonGreedyAgent(params, np.random.default_rng(0), c=1.0)
        assert agent.exploration_probability() == 1.0
        x = np.ones(2)
        for _ in range(99):
            agent.observe(x, 0, 0.0)
        assert agent.exploration_probability() == pytest.approx(4 / 100)

    def test_never_exploring_is_greedy(self, params: ModelParams) -> None:
        agent = EpsilonGreedyAgent(params, np.random.default_rng(0), schedule=lambda _: 0.0)
        x = np.array([1.0, 0.0])
        agent.observe(x, 2, 1.0)
        assert all(agent.select(x) == 2 for _ in range(50))

    def test_always_exploring_is_uniform(self, params: ModelParams) -> None:
        agent = EpsilonGreedyAgent(params, np.random.default_rng(5), schedule=lambda _: 1.0)
        x = np.array([1.0, 0.0])
        agent.observe(x, 2, 1.0)
        n = 10_000
        hits = np.bincount([agent.select(x) for _ in range(n)], minlength=4)
        sigma = math.sqrt(0.25 * 0.75 / n)
        assert (np.abs(hits / n - 0.25) <= 4 * sigma).all()

    def test_negative_constant_rejected(self, params: ModelParams) -> None:
        with pytest.raises(ConfigError):
            EpsilonGreedyAgent(params, np.random.default_rng(0), c=-1.0)


class TestMakeAgent:
    """Test construction by kind name."""

    def test_every_kind(self, params: ModelParams) -> None:
        for kind in AGENT_KINDS:
            agent = make_agent(kind, params, np.random.default_rng(0))
            assert agent.kind == kind

    def test_unknown_kind(self, params: ModelParams) -> None:
        with pytest.raises(ConfigError, match="unknown agent kind"):
            make_agent("exp3", params, np.random.default_rng(0))
