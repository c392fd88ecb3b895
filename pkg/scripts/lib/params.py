"""Model constants and the confidence-width formulas shared by agents and attackers.

All logarithms are natural. The OFUL-style width is

    omega(N) = sqrt(lam) * S + R * sqrt(2 ln(K/delta) + d ln(1 + L^2 N / (lam d)))

and the attacker-side width for arm i is

    beta0_i(N) = phi_i * (omega(N) + L S sqrt(0.5 ln(2 K T / delta)))

with phi = 2 for the target arm and 1/alpha otherwise.
"""

import math
from collections.abc import Callable
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigError

# Defaults of the synthetic experiment (d=6, K=10, T=1e6, delta=0.1, lam=2).
DEFAULT_L = math.sqrt(2.0)
DEFAULT_S = math.sqrt(2.0)
DEFAULT_R = 0.1  # sqrt of the N(0, 0.01) noise variance


@dataclass(frozen=True, slots=True)
class ModelParams:
    """Global constants governing every width and bound.

    Attributes:
        d: Context dimension
        K: Number of arms
        L: Upper bound on context l2-norm
        S: Upper bound on coefficient l2-norm
        R: Sub-Gaussian noise scale
        lam: Ridge regularization
        delta: Confidence level
        alpha: Attack margin
        T: Horizon
    """

    d: int
    K: int
    L: float = DEFAULT_L
    S: float = DEFAULT_S
    R: float = DEFAULT_R
    lam: float = 2.0
    delta: float = 0.1
    alpha: float = 0.2
    T: int = 1_000_000

    def __post_init__(self) -> None:
        problems = []
        if self.d < 1:
            problems.append(f"d must be >= 1 (got {self.d})")
        if self.K < 2:
            problems.append(f"K must be >= 2 (got {self.K})")
        if not self.L > 0:
            problems.append(f"L must be > 0 (got {self.L})")
        if not self.S > 0:
            problems.append(f"S must be > 0 (got {self.S})")
        if not self.R >= 0:
            problems.append(f"R must be >= 0 (got {self.R})")
        if not self.lam > 0:
            problems.append(f"lambda must be > 0 (got {self.lam})")
        if not 0 < self.delta < 1:
            problems.append(f"delta must lie in (0, 1) (got {self.delta})")
        if not 0 < self.alpha < 0.5:
            problems.append(f"alpha must lie in (0, 1/2) (got {self.alpha})")
        if self.T < 1:
            problems.append(f"T must be >= 1 (got {self.T})")
        if self.lam < self.L:
            problems.append(f"lambda must be >= L (got {self.lam} < {self.L})")
        if problems:
            raise ConfigError("invalid model parameters: " + "; ".join(problems))

    def with_alpha(self, alpha: float) -> "ModelParams":
        """Return a copy with a different attack margin."""
        values = asdict(self)
        values["alpha"] = alpha
        return ModelParams(**values)

    def to_dict(self) -> dict[str, Any]:
        """Return the parameters as a plain dictionary."""
        return asdict(self)

    @property
    def horizon_term(self) -> float:
        """L S sqrt(0.5 ln(2 K T / delta)), the additive attacker-side slack."""
        return _horizon_term(self, self.T)


def omega(n: int, p: ModelParams) -> float:
    """Confidence width after n observations; nondecreasing in n."""
    log_det = p.d * math.log1p(p.L**2 * n / (p.lam * p.d))
    return math.sqrt(p.lam) * p.S + p.R * math.sqrt(2.0 * math.log(p.K / p.delta) + log_det)


def omega_array(counts: NDArray[np.int64], p: ModelParams) -> NDArray[np.float64]:
    """Vectorized omega over an array of observation counts."""
    log_det = p.d * np.log1p(p.L**2 * counts / (p.lam * p.d))
    widths: NDArray[np.float64] = np.sqrt(p.lam) * p.S + p.R * np.sqrt(
        2.0 * math.log(p.K / p.delta) + log_det
    )
    return widths


def beta_attacker(n_dag: int, is_target: bool, p: ModelParams) -> float:
    """Attacker-side width for one arm (phi = 2 on the target, 1/alpha elsewhere)."""
    phi = 2.0 if is_target else 1.0 / p.alpha
    return phi * (omega(n_dag, p) + p.horizon_term)


def _log_det_growth(p: ModelParams, T: int) -> float:
    return math.log1p(T * p.L**2 / (p.d * p.lam))


def _horizon_term(p: ModelParams, T: int) -> float:
    return p.L * p.S * math.sqrt(0.5 * math.log(2.0 * p.K * T / p.delta))


def whitebox_cost_bound(p: ModelParams, gamma: float, T: int) -> float:
    """High-probability upper bound on |C| for the white-box attack on LinUCB.

    Args:
        p: Model parameters (alpha is the margin the attacker uses)
        gamma: Smallest target-arm mean over the context domain
        T: Horizon

    Returns:
        2d(K-1)/(alpha gamma)^2 * ln(1 + T L^2/(d lam)) * (2 omega(T) + horizon slack)^2
    """
    if gamma <= 0:
        raise ConfigError(f"gamma must be positive (got {gamma})")
    lead = 2.0 * p.d * (p.K - 1) / (p.alpha * gamma) ** 2
    width = 2.0 * omega(T, p) + _horizon_term(p, T)
    return lead * _log_det_growth(p, T) * width**2


def blackbox_cost_bound(p: ModelParams, gamma: float, T: int) -> float:
    """High-probability upper bound on |C| for the black-box attack on LinUCB.

    Carries one extra logarithmic factor over the white-box bound.
    """
    if gamma <= 0:
        raise ConfigError(f"gamma must be positive (got {gamma})")
    growth = _log_det_growth(p, T)
    lead = 2.0 * p.d * (p.K - 1) / (p.alpha * gamma) ** 2
    inflation = (2.0 + 4.0 * p.d / p.alpha * math.sqrt(p.K * growth)) ** 2
    width = omega(T, p) + _horizon_term(p, T)
    return lead * inflation * growth * width**2


class WidthCache:
    """Per-arm widths, recomputed only for arms whose observation count changed.

    width(arm, n) gives the width of arm after n observations.
    """

    def __init__(self, width: Callable[[int, int], float], n_arms: int) -> None:
        self._width = width
        self.counts: NDArray[np.int64] = np.zeros(n_arms, dtype=np.int64)
        self.values: NDArray[np.float64] = np.array([width(arm, 0) for arm in range(n_arms)])

    def current(self, counts: NDArray[np.int64]) -> NDArray[np.float64]:
        """Widths at counts; the returned array is shared, do not modify it."""
        for arm in np.flatnonzero(counts != self.counts):
            n = int(counts[arm])
            self.values[arm] = self._width(int(arm), n)
            self.counts[arm] = n
        return self.values
