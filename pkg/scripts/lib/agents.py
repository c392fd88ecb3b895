"""Victim bandit algorithms.

All agents share one interface: select(x) picks an arm for context x, and
observe(x, arm, reward) feeds back the reward under the arm label the agent
chose. An agent never learns which arm actually generated the reward.

    LinUCBAgent         argmax of estimate + omega(N_i) * ||x||_{V_i^-1}
    LinTSAgent          argmax of <x, theta~_i>, theta~_i ~ N(theta_i, v^2 V_i^-1)
    EpsilonGreedyAgent  uniform arm w.p. min(1, c K / t), else greedy estimate
"""

from abc import ABC, abstractmethod
from collections.abc import Callable
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError
from .params import ModelParams, WidthCache, omega
from .ridge import RidgeState

AgentKind = Literal["linucb", "lints", "epsgreedy"]
AGENT_KINDS: tuple[AgentKind, ...] = ("epsgreedy", "linucb", "lints")

AGENT_LABELS: dict[str, str] = {
    "epsgreedy": "epsilon-Greedy",
    "linucb": "LinUCB",
    "lints": "LinTS",
}


class Agent(ABC):
    """Common state: one ridge accumulator per arm and the round counter."""

    kind: AgentKind

    def __init__(self, params: ModelParams) -> None:
        self.params = params
        self.ridge = RidgeState(params.K, params.d, params.lam)
        self.t = 0
        self._widths = WidthCache(lambda _arm, n: omega(n, params), params.K)

    @property
    def counts(self) -> NDArray[np.int64]:
        """Pull counts N_i(t) as the agent sees them."""
        return self.ridge.counts

    def widths(self) -> NDArray[np.float64]:
        """omega(N_i) for every arm (cached between count changes)."""
        return self._widths.current(self.ridge.counts)

    @abstractmethod
    def select(self, x: NDArray[np.float64]) -> int:
        """Choose an arm for context x."""

    def observe(self, x: NDArray[np.float64], arm: int, reward: float) -> None:
        """Record reward for the arm the agent chose; other arms are untouched."""
        if not 0 <= arm < self.params.K:
            raise ConfigError(f"arm index {arm} out of range for K={self.params.K}")
        self.ridge.update(arm, x, reward)
        self.t += 1


class LinUCBAgent(Agent):
    """Optimistic ridge agent with OFUL widths (lowest index wins ties)."""

    kind: AgentKind = "linucb"

    def upper_bounds(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """p_{t,i} = <x, theta_i> + omega(N_i) ||x||_{V_i^-1} for every arm."""
        bounds: NDArray[np.float64] = self.ridge.estimates(x) + self.widths() * self.ridge.norms(x)
        return bounds

    def select(self, x: NDArray[np.float64]) -> int:
        return int(np.argmax(self.upper_bounds(x)))


class LinTSAgent(Agent):
    """Linear Thompson sampling with a Gaussian posterior per arm.

    Args:
        params: Model parameters
        rng: Random stream owned by this agent
        scale: Posterior scale v; None means v = omega(N_i) per arm
    """

    kind: AgentKind = "lints"

    def __init__(
        self, params: ModelParams, rng: np.random.Generator, scale: float | None = None
    ) -> None:
        super().__init__(params)
        if scale is not None and scale < 0:
            raise ConfigError(f"posterior scale must be >= 0 (got {scale})")
        self.rng = rng
        self.scale = scale

    def sample_coefficients(self) -> NDArray[np.float64]:
        """Draw theta~_i for every arm; covariance v^2 V_i^-1 via the Cholesky factor of V_i."""
        if self.scale is None:
            scales = self.widths()
        else:
            scales = np.full(self.params.K, self.scale)
        z = self.rng.standard_normal((self.params.K, self.params.d))
        chol = np.linalg.cholesky(self.ridge.V)
        # V = C C^T, so C^-T z has covariance V^-1
        offsets = np.linalg.solve(np.swapaxes(chol, 1, 2), z[..., None])[..., 0]
        sampled: NDArray[np.float64] = self.ridge.theta + scales[:, None] * offsets
        return sampled

    def select(self, x: NDArray[np.float64]) -> int:
        return int(np.argmax(self.sample_coefficients() @ x))


def default_exploration(c: float, n_arms: int) -> Callable[[int], float]:
    """Schedule eps(t) = min(1, c K / t)."""

    def schedule(t: int) -> float:
        return min(1.0, c * n_arms / t)

    return schedule


class EpsilonGreedyAgent(Agent):
    """Greedy on ridge estimates with decaying uniform exploration.

    Every selection consumes one uniform draw; exploring rounds consume one
    more for the arm.
    """

    kind: AgentKind = "epsgreedy"

    def __init__(
        self,
        params: ModelParams,
        rng: np.random.Generator,
        c: float = 1.0,
        schedule: Callable[[int], float] | None = None,
    ) -> None:
        super().__init__(params)
        if c < 0:
            raise ConfigError(f"exploration constant must be >= 0 (got {c})")
        self.rng = rng
        self.schedule = schedule or default_exploration(c, params.K)

    def exploration_probability(self) -> float:
        """eps for the upcoming round t + 1."""
        return self.schedule(self.t + 1)

    def select(self, x: NDArray[np.float64]) -> int:
        if self.rng.random() < self.exploration_probability():
            return int(self.rng.integers(self.params.K))
        return int(np.argmax(self.ridge.estimates(x)))


def make_agent(
    kind: str,
    params: ModelParams,
    rng: np.random.Generator,
    ts_scale: float | None = None,
    eps_c: float = 1.0,
) -> Agent:
    """Construct an agent by kind name."""
    if kind == "linucb":
        return LinUCBAgent(params)
    if kind == "lints":
        return LinTSAgent(params, rng, scale=ts_scale)
    if kind == "epsgreedy":
        return EpsilonGreedyAgent(params, rng, c=eps_c)
    raise ConfigError(f"unknown agent kind {kind!r} (expected one of {', '.join(AGENT_KINDS)})")
