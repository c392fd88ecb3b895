"""Action-poisoning adversaries sitting between the agent and the environment.

When the agent picks the target arm nothing happens. Otherwise the attacker
replaces the agent's arm by the target with probability eps_t and by a
"dagger" arm with probability 1 - eps_t, so that the reward the agent sees
for its non-target arm averages (1 - alpha) times the target's mean.

    white-box  dagger = true worst arm, eps_t from the true means (exact identity)
    black-box  dagger = lowest LCB among non-target arms on the attacker's own
               importance-weighted ridge estimates, eps_t clipped to [1/2, 1 - alpha]

A white-box context where the margin alpha cannot be reached (the worst mean
is above (1 - alpha) times the target's, or the target is itself the worst)
is saturated: the lowest-mean arm is served outright and the decision is
flagged.

The Bernoulli(eps_t) coin consumes exactly one uniform draw per attacked-eligible
round and none on target rounds.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Literal

import numpy as np
from numpy.typing import NDArray

from .environment import Environment
from .errors import AssumptionViolated, ConfigError, DegenerateDenominator, NumericError
from .logging import debug, warn
from .params import ModelParams, WidthCache, beta_attacker
from .ridge import RidgeState

AttackerKind = Literal["none", "whitebox", "blackbox"]
ATTACKER_KINDS: tuple[AttackerKind, ...] = ("none", "whitebox", "blackbox")

ATTACKER_LABELS: dict[str, str] = {
    "none": "without attacks",
    "whitebox": "white-box attack",
    "blackbox": "black-box attack",
}


@dataclass(frozen=True, slots=True)
class AttackDecision:
    """Outcome of one round's interception.

    Attributes:
        original_action: Arm the agent chose (I_t)
        post_action: Arm sent to the environment (I0_t)
        epsilon_used: Probability of serving the target; 1 on target rounds
        attacked: post_action != original_action
        dag_arm: Dagger arm of this round; the target on target rounds
        saturated: The margin was unreachable and the lowest-mean arm was served
    """

    original_action: int
    post_action: int
    epsilon_used: float
    attacked: bool
    dag_arm: int
    saturated: bool = False


def _untouched(agent_arm: int, dag_arm: int) -> AttackDecision:
    return AttackDecision(
        original_action=agent_arm,
        post_action=agent_arm,
        epsilon_used=1.0,
        attacked=False,
        dag_arm=dag_arm,
    )


def _flip(
    agent_arm: int,
    target: int,
    dag_arm: int,
    epsilon: float,
    rng: np.random.Generator,
    saturated: bool = False,
) -> AttackDecision:
    post = target if rng.random() < epsilon else dag_arm
    return AttackDecision(
        original_action=agent_arm,
        post_action=post,
        epsilon_used=epsilon,
        attacked=post != agent_arm,
        dag_arm=dag_arm,
        saturated=saturated,
    )


def whitebox_epsilon(target_mean: float, worst_mean: float, alpha: float) -> float:
    """eps = ((1 - alpha) m_K - m_min) / (m_K - m_min).

    Raises:
        DegenerateDenominator: If m_K == m_min
        AssumptionViolated: If the result is not a probability in (0, 1]
    """
    denominator = target_mean - worst_mean
    if denominator == 0:
        raise DegenerateDenominator(
            f"target mean equals the worst mean ({target_mean:.17g}); environment is broken"
        )
    epsilon = ((1.0 - alpha) * target_mean - worst_mean) / denominator
    if not 0.0 < epsilon <= 1.0:
        raise AssumptionViolated(
            f"white-box mixing probability {epsilon:.6g} outside (0, 1]: margin alpha={alpha} "
            f"too large for this context"
        )
    return epsilon


def whitebox_transform(
    env: Environment,
    alpha: float,
    x: NDArray[np.float64],
    agent_arm: int,
    rng: np.random.Generator,
) -> AttackDecision:
    """White-box interception using the true coefficient vectors.

    Where whitebox_epsilon has no valid answer the round is saturated: the
    worst arm is served with eps = 0, or the target with eps = 1 when the
    target's mean is the lowest. The coin is still drawn once.
    """
    target = env.target
    if agent_arm == target:
        return _untouched(agent_arm, target)
    means = env.means(x)
    dag_arm = int(np.argmin(means))
    target_mean, worst_mean = float(means[target]), float(means[dag_arm])
    try:
        epsilon = whitebox_epsilon(target_mean, worst_mean, alpha)
    except (DegenerateDenominator, AssumptionViolated):
        if target_mean <= worst_mean:
            return _flip(agent_arm, target, target, 1.0, rng, saturated=True)
        return _flip(agent_arm, target, dag_arm, 0.0, rng, saturated=True)
    return _flip(agent_arm, target, dag_arm, epsilon, rng)


def clip(lower: float, value: float, upper: float) -> float:
    """min(upper, max(value, lower))."""
    return min(upper, max(value, lower))


class AttackerState:
    """Black-box attacker's importance-weighted ridge estimates.

    counts[target] grows every round; counts[i] for i != target counts the
    rounds where i was the dagger arm.
    """

    def __init__(self, params: ModelParams, target: int) -> None:
        if not 0 <= target < params.K:
            raise ConfigError(f"target arm {target} out of range for K={params.K}")
        self.params = params
        self.target = target
        self.ridge = RidgeState(params.K, params.d, params.lam)
        self.degenerate_rounds = 0
        self._widths = WidthCache(
            lambda arm, n: beta_attacker(n, arm == target, params), params.K
        )

    @property
    def alpha(self) -> float:
        return self.params.alpha

    @property
    def counts(self) -> NDArray[np.int64]:
        """N-dagger counts per arm."""
        return self.ridge.counts

    def widths(self) -> NDArray[np.float64]:
        """beta0_i for every arm at the current counts."""
        return self._widths.current(self.ridge.counts)

    def confidence_intervals(
        self, x: NDArray[np.float64]
    ) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        """Attacker estimates and interval half-widths beta0_i ||x||_{(V0_i)^-1}."""
        return self.ridge.estimates(x), self.widths() * self.ridge.norms(x)

    def mean_discrepancy_bound(self, x: NDArray[np.float64], dag_arm: int) -> float:
        """Bound on |E[reward seen by agent] - (1 - alpha) <x, theta_K>| on a non-target round.

        (1 - alpha) beta0_K ||x||_{V0_K^-1} + (1 + alpha) beta0_dag ||x||_{V0_dag^-1}
        """
        _, half_widths = self.confidence_intervals(x)
        return float(
            (1.0 - self.alpha) * half_widths[self.target]
            + (1.0 + self.alpha) * half_widths[dag_arm]
        )


def blackbox_transform(
    st: AttackerState,
    x: NDArray[np.float64],
    agent_arm: int,
    t: int,
    rng: np.random.Generator,
) -> AttackDecision:
    """Black-box interception on the attacker's own estimates.

    Args:
        st: Attacker state (updated afterwards by attacker_observe)
        x: Context of round t
        agent_arm: Arm chosen by the agent
        t: Round index, starting at 1
        rng: Attacker's coin stream
    """
    if t < 1:
        raise ConfigError(f"round index must be >= 1 (got {t})")
    target = st.target
    if agent_arm == target:
        return _untouched(agent_arm, target)

    estimates, half_widths = st.confidence_intervals(x)
    lower = estimates - half_widths
    lower[target] = np.inf
    dag_arm = int(np.argmin(lower))

    upper_rail = 1.0 - st.alpha
    denominator = estimates[target] - estimates[dag_arm]
    if denominator == 0:
        st.degenerate_rounds += 1
        debug(f"round {t}: equal attacker estimates, eps set to {upper_rail}")
        epsilon = upper_rail
    else:
        raw = (upper_rail * estimates[target] - estimates[dag_arm]) / denominator
        epsilon = clip(0.5, float(raw), upper_rail)
    return _flip(agent_arm, target, dag_arm, epsilon, rng)


def attacker_observe(
    st: AttackerState, x: NDArray[np.float64], decision: AttackDecision, reward: float
) -> AttackerState:
    """Importance-weighted update after the reward of decision.post_action is revealed.

    The target's design matrix grows every round, the dagger arm's whenever it
    differs from the target; only the arm actually served gets a nonzero
    response, weighted by 1/eps (target) or 1/(1 - eps) (dagger).
    """
    epsilon = decision.epsilon_used
    if not 0.0 < epsilon <= 1.0:
        raise NumericError(f"importance weight undefined for eps={epsilon}")
    target = st.target
    served = decision.post_action

    if served == target:
        st.ridge.update(target, x, reward / epsilon)
    else:
        st.ridge.update(target, x, 0.0, grow_only=True)

    dag_arm = decision.dag_arm
    if dag_arm != target:
        if served == dag_arm:
            if epsilon >= 1.0:
                raise NumericError("dagger arm served with eps=1")
            st.ridge.update(dag_arm, x, reward / (1.0 - epsilon))
        else:
            st.ridge.update(dag_arm, x, 0.0, grow_only=True)
    return st


class Attacker(ABC):
    """Interface used by the trial loop."""

    kind: AttackerKind

    def __init__(self, target: int) -> None:
        self.target = target

    @abstractmethod
    def transform(self, x: NDArray[np.float64], agent_arm: int, t: int) -> AttackDecision:
        """Decide which arm the environment serves this round."""

    def observe(  # noqa: B027
        self, x: NDArray[np.float64], decision: AttackDecision, reward: float
    ) -> None:
        """See the revealed reward (default: ignore it)."""
        ...


class NoAttacker(Attacker):
    """Pass-through; every round is served as chosen."""

    kind: AttackerKind = "none"

    def transform(  # noqa: ARG002
        self, x: NDArray[np.float64], agent_arm: int, t: int
    ) -> AttackDecision:
        return _untouched(agent_arm, agent_arm)


class WhiteBoxAttacker(Attacker):
    """Attacker that knows every coefficient vector."""

    kind: AttackerKind = "whitebox"

    def __init__(self, env: Environment, alpha: float, rng: np.random.Generator) -> None:
        super().__init__(env.target)
        self.env = env
        self.alpha = alpha
        self.rng = rng
        self.unattackable_rounds = 0

    def transform(self, x: NDArray[np.float64], agent_arm: int, t: int) -> AttackDecision:
        decision = whitebox_transform(self.env, self.alpha, x, agent_arm, self.rng)
        if decision.saturated:
            if not self.unattackable_rounds:
                warn(
                    f"round {t}: margin alpha={self.alpha} unreachable at this context; "
                    f"serving the lowest-mean arm (further such rounds are only counted)"
                )
            self.unattackable_rounds += 1
        return decision


class BlackBoxAttacker(Attacker):
    """Attacker that learns the arms from the rewards it observes."""

    kind: AttackerKind = "blackbox"

    def __init__(self, params: ModelParams, target: int, rng: np.random.Generator) -> None:
        super().__init__(target)
        self.state = AttackerState(params, target)
        self.rng = rng

    def transform(self, x: NDArray[np.float64], agent_arm: int, t: int) -> AttackDecision:
        return blackbox_transform(self.state, x, agent_arm, t, self.rng)

    def observe(self, x: NDArray[np.float64], decision: AttackDecision, reward: float) -> None:
        attacker_observe(self.state, x, decision, reward)


def make_attacker(
    kind: str,
    env: Environment,
    params: ModelParams,
    rng: np.random.Generator,
) -> Attacker:
    """Construct an attacker by kind name; params.alpha is the margin used."""
    if kind == "none":
        return NoAttacker(env.target)
    if kind == "whitebox":
        return WhiteBoxAttacker(env, params.alpha, rng)
    if kind == "blackbox":
        return BlackBoxAttacker(params, env.target, rng)
    raise ConfigError(
        f"unknown attacker kind {kind!r} (expected one of {', '.join(ATTACKER_KINDS)})"
    )
