"""Ground-truth linear contextual bandit environments.

An Environment holds the arm coefficient vectors, a context sampler and a
Gaussian noise model. Mean rewards are <x, theta_i>; every environment is
checked on construction against a probe set of contexts: all means must be
positive and the target arm must never be the worst arm.

Two kinds of environment exist:
    synthetic  first entry of every context and coefficient is 1, the rest
               uniform on (-1/sqrt(d-1), 1/sqrt(d-1)), so all norms are <= sqrt(2)
    dataset    contexts replayed uniformly from a pool of user feature rows,
               coefficients taken from item feature rows (see lib.ratings)

Every synthetic arm has mean exactly 1 at the context (1, 0, ..., 0), so the
margin over the whole synthetic domain is 0 and the probe margin only
measures how close the sample comes to that context.
"""

import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
from numpy.typing import NDArray

from .errors import AssumptionViolated, ConfigError, DataError
from .logging import debug, info, warn

DEFAULT_PROBES = 10_000
DEFAULT_ALPHA_MIN = 1e-3
DEFAULT_ALPHA_SHRINK = 0.9
DEFAULT_NOISE_VARIANCE = 0.01
DEFAULT_MIN_MARGIN = 0.0
MAX_SYNTHETIC_ATTEMPTS = 1000
SYNTHETIC_NORM_BOUND = math.sqrt(2.0)

SamplerMode = Literal["synthetic", "dataset"]


@dataclass(frozen=True, slots=True)
class NoiseModel:
    """Zero-mean Gaussian reward noise."""

    variance: float = DEFAULT_NOISE_VARIANCE

    def __post_init__(self) -> None:
        if not self.variance >= 0:
            raise ConfigError(f"noise variance must be >= 0 (got {self.variance})")

    @property
    def scale(self) -> float:
        return math.sqrt(self.variance)

    def draw(self, rng: np.random.Generator) -> float:
        """Draw one noise value (consumes one normal draw even at zero variance)."""
        return float(rng.normal(0.0, self.scale))


@dataclass(frozen=True, slots=True)
class ContextSampler:
    """Source of contexts: synthetic uniform draws or uniform replay of a pool."""

    mode: SamplerMode
    d: int
    pool: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        if self.mode == "synthetic" and self.d < 2:
            raise ConfigError(f"synthetic contexts need d >= 2 (got {self.d})")
        if self.mode == "dataset":
            if self.pool is None or len(self.pool) == 0:
                raise DataError("dataset context pool is empty")
            if self.pool.shape[1] != self.d:
                raise DataError(
                    f"context pool has dimension {self.pool.shape[1]}, expected {self.d}"
                )

    def sample(self, rng: np.random.Generator) -> tuple[int, NDArray[np.float64]]:
        """Draw one context.

        Returns:
            Tuple of (pool index or -1 for synthetic, context vector)
        """
        if self.pool is not None:
            index = int(rng.integers(len(self.pool)))
            return index, self.pool[index]
        return -1, synthetic_vector(self.d, rng)

    def sample_many(self, rng: np.random.Generator, n: int) -> NDArray[np.float64]:
        """Draw n contexts as an (n, d) array."""
        return self.sample_block(rng, n)[1]

    def sample_block(
        self, rng: np.random.Generator, n: int
    ) -> tuple[NDArray[np.int64], NDArray[np.float64]]:
        """Draw n contexts at once: (pool indices or -1, (n, d) contexts)."""
        if self.pool is not None:
            indices = rng.integers(len(self.pool), size=n)
            return indices, self.pool[indices]
        return np.full(n, -1, dtype=np.int64), synthetic_matrix(n, self.d, rng)

    def norm_bound(self) -> float:
        """Largest l2-norm a sampled context can have."""
        if self.pool is not None:
            return float(np.linalg.norm(self.pool, axis=1).max())
        return SYNTHETIC_NORM_BOUND


def synthetic_vector(d: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """One synthetic vector: leading 1, then d-1 uniforms on (-h, h), h = 1/sqrt(d-1)."""
    half_width = 1.0 / math.sqrt(d - 1)
    x = np.empty(d)
    x[0] = 1.0
    x[1:] = rng.uniform(-half_width, half_width, size=d - 1)
    return x


def synthetic_matrix(n: int, d: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """n synthetic vectors stacked as rows."""
    half_width = 1.0 / math.sqrt(d - 1)
    rows = np.empty((n, d))
    rows[:, 0] = 1.0
    rows[:, 1:] = rng.uniform(-half_width, half_width, size=(n, d - 1))
    return rows


def check_assumptions(
    contexts: NDArray[np.float64], thetas: NDArray[np.float64], target: int
) -> None:
    """Check positivity of every mean and that the target is never the worst arm.

    Raises:
        AssumptionViolated: Naming the first offending context index
    """
    means = contexts @ thetas.T
    bad_rows = np.flatnonzero((means <= 0).any(axis=1))
    if bad_rows.size:
        row = int(bad_rows[0])
        arm = int(np.argmin(means[row]))
        raise AssumptionViolated(
            f"mean reward of arm {arm} is not positive at context {row} "
            f"({means[row, arm]:.6g})",
            context_index=row,
        )
    worst = means.min(axis=1)
    bad_rows = np.flatnonzero(means[:, target] <= worst)
    if bad_rows.size:
        row = int(bad_rows[0])
        raise AssumptionViolated(
            f"target arm {target} is the worst arm at context {row}", context_index=row
        )


def arm_margins(contexts: NDArray[np.float64], thetas: NDArray[np.float64]) -> NDArray[np.float64]:
    """Unfloored alpha of every arm as a candidate target over the contexts.

    Entry k is (1 - max_x min_i <x, theta_i> / <x, theta_k>) / 2; it is 0 for
    an arm that is the worst somewhere.

    Raises:
        AssumptionViolated: If some mean is not positive
    """
    means = contexts @ thetas.T
    if (means <= 0).any():
        row = int(np.flatnonzero((means <= 0).any(axis=1))[0])
        raise AssumptionViolated(f"mean reward is not positive at context {row}", row)
    ratios = means.min(axis=1)[:, None] / means
    margins: NDArray[np.float64] = (1.0 - ratios.max(axis=0)) / 2.0
    return margins


@dataclass(frozen=True)
class Environment:
    """A validated linear contextual bandit.

    Attributes:
        thetas: (K, d) arm coefficient vectors
        sampler: Context source
        noise: Reward noise model
        target: Target arm index
        probes: (n, d) contexts used for validation and alpha/gamma estimates
        label: Dataset label used in reports ("synthetic" or the feature file stem)
        metadata: Construction details (seed, redraw attempts, scaling)
    """

    thetas: NDArray[np.float64]
    sampler: ContextSampler
    noise: NoiseModel
    target: int
    probes: NDArray[np.float64]
    label: str = "synthetic"
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.thetas.ndim != 2 or self.thetas.shape[1] != self.sampler.d:
            raise DataError(
                f"coefficient matrix shape {self.thetas.shape} does not match d={self.sampler.d}"
            )
        if not 0 <= self.target < self.n_arms:
            raise ConfigError(f"target arm {self.target} out of range for K={self.n_arms}")
        if len(self.probes) == 0:
            raise DataError("environment needs at least one probe context")
        check_assumptions(self.probes, self.thetas, self.target)
        self.thetas.setflags(write=False)
        self.probes.setflags(write=False)

    @property
    def n_arms(self) -> int:
        return int(self.thetas.shape[0])

    @property
    def d(self) -> int:
        return int(self.thetas.shape[1])

    @property
    def coefficient_norm(self) -> float:
        """Largest arm coefficient l2-norm."""
        return float(np.linalg.norm(self.thetas, axis=1).max())

    def _check_arm(self, i: int) -> None:
        if not 0 <= i < self.n_arms:
            raise ConfigError(f"arm index {i} out of range for K={self.n_arms}")

    def sample_context(self, rng: np.random.Generator) -> tuple[int, NDArray[np.float64]]:
        """Draw the next context from the sampler."""
        return self.sampler.sample(rng)

    def means(self, x: NDArray[np.float64]) -> NDArray[np.float64]:
        """Mean rewards of all arms at x."""
        result: NDArray[np.float64] = self.thetas @ x
        return result

    def mean_reward(self, x: NDArray[np.float64], i: int) -> float:
        """Mean reward <x, theta_i>."""
        self._check_arm(i)
        return float(self.thetas[i] @ x)

    def draw_reward(self, x: NDArray[np.float64], i: int, rng: np.random.Generator) -> float:
        """Noisy reward of arm i at x."""
        return self.mean_reward(x, i) + self.noise.draw(rng)

    def worst_arm(self, x: NDArray[np.float64]) -> tuple[int, float]:
        """Arm with the smallest mean at x (lowest index on ties) and that mean."""
        means = self.means(x)
        arm = int(np.argmin(means))
        return arm, float(means[arm])

    def compute_alpha(
        self,
        probe_contexts: NDArray[np.float64] | None = None,
        alpha_min: float = DEFAULT_ALPHA_MIN,
        shrink: float = DEFAULT_ALPHA_SHRINK,
    ) -> float:
        """Largest margin alpha with min_i <x, theta_i> <= (1 - 2 alpha) <x, theta_K> on probes.

        Args:
            probe_contexts: (n, d) contexts; defaults to the environment's probes
            alpha_min: Floor applied to the result
            shrink: Safety factor multiplied into the probe estimate

        Raises:
            AssumptionViolated: If the target is the worst arm at some probe
        """
        probes = self.probes if probe_contexts is None else np.atleast_2d(probe_contexts)
        if len(probes) == 0:
            raise DataError("compute_alpha needs at least one probe context")
        means = probes @ self.thetas.T
        target_means = means[:, self.target]
        ratios = means.min(axis=1) / target_means
        bad = np.flatnonzero((ratios >= 1.0) | (target_means <= 0))
        if bad.size:
            row = int(bad[0])
            raise AssumptionViolated(
                f"target arm {self.target} is the worst arm at probe {row}", context_index=row
            )
        alpha = shrink * (1.0 - float(ratios.max())) / 2.0
        return max(alpha, alpha_min)

    def min_target_mean(self, probe_contexts: NDArray[np.float64] | None = None) -> float:
        """Smallest target-arm mean over the probes (the gamma of the cost bounds)."""
        probes = self.probes if probe_contexts is None else np.atleast_2d(probe_contexts)
        return float((probes @ self.thetas[self.target]).min())


def make_synthetic_environment(
    d: int,
    n_arms: int,
    seed: int,
    noise_variance: float = DEFAULT_NOISE_VARIANCE,
    target: int | None = None,
    n_probes: int = DEFAULT_PROBES,
    max_attempts: int = MAX_SYNTHETIC_ATTEMPTS,
    min_margin: float = DEFAULT_MIN_MARGIN,
) -> Environment:
    """Draw a synthetic environment that passes validation.

    Coefficients are redrawn (attempt k uses the stream (seed, k)) until the
    target's unfloored probe margin is positive and at least min_margin.
    Without an explicit target, the arm with the largest probe margin of the
    draw becomes the target and is moved to the last index.

    Raises:
        AssumptionViolated: If no draw qualifies within max_attempts
    """
    if not 0 <= min_margin < 0.5:
        raise ConfigError(f"min_margin must lie in [0, 1/2) (got {min_margin})")
    if target is not None and not 0 <= target < n_arms:
        raise ConfigError(f"target arm {target} out of range for K={n_arms}")
    sampler = ContextSampler(mode="synthetic", d=d)
    noise = NoiseModel(noise_variance)
    best_margin = 0.0

    for attempt in range(max_attempts):
        rng = np.random.default_rng((seed, attempt))
        thetas = synthetic_matrix(n_arms, d, rng)
        probes = sampler.sample_many(rng, n_probes)
        try:
            margins = arm_margins(probes, thetas)
        except AssumptionViolated as e:
            debug(f"synthetic draw {attempt} rejected: {e}")
            continue
        drawn = int(np.argmax(margins)) if target is None else target
        margin = float(margins[drawn])
        best_margin = max(best_margin, margin)
        if margin <= 0 or margin < min_margin:
            debug(f"synthetic draw {attempt} rejected: target margin {margin:.6g}")
            continue

        if target is None:
            order = [i for i in range(n_arms) if i != drawn] + [drawn]
            thetas = thetas[order]
        env = Environment(
            thetas=thetas,
            sampler=sampler,
            noise=noise,
            target=n_arms - 1 if target is None else target,
            probes=probes,
            label="synthetic",
            metadata={
                "seed": seed,
                "attempts": attempt + 1,
                "n_probes": n_probes,
                "probe_margin": margin,
                "drawn_target": drawn,
            },
        )
        info(
            f"Synthetic environment accepted after {attempt + 1} draws "
            f"(probe margin {margin:.6g})"
        )
        return env

    raise AssumptionViolated(
        f"no synthetic environment reached a target margin of {min_margin} in {max_attempts}"
        f" draws (best: {best_margin:.6g})"
    )


def fit_to_bounds(
    contexts: NDArray[np.float64],
    coefficients: NDArray[np.float64],
    L: float,
    S: float,
    augment: bool = True,
    margin: float = 0.05,
) -> tuple[NDArray[np.float64], NDArray[np.float64], dict[str, Any]]:
    """Make raw feature matrices usable as an environment.

    If some mean <x, theta> is not positive, a constant 1 is appended to every
    context and a bias entry (margin - smallest mean) to every coefficient.
    Then contexts and coefficients are shrunk uniformly so that all context
    norms are <= L and all coefficient norms are <= S.

    Returns:
        Tuple of (contexts, coefficients, metadata describing what was done)

    Raises:
        AssumptionViolated: If means are not positive and augmentation is disabled
    """
    metadata: dict[str, Any] = {"augmented": False, "bias_shift": 0.0}
    means = contexts @ coefficients.T
    min_mean = float(means.min())
    metadata["raw_min_mean"] = min_mean

    if min_mean <= 0:
        if not augment:
            row = int(np.argmin(means.min(axis=1)))
            raise AssumptionViolated(
                f"non-positive mean reward at context {row} and augmentation is disabled",
                context_index=row,
            )
        shift = margin - min_mean
        contexts = np.hstack([contexts, np.ones((len(contexts), 1))])
        coefficients = np.hstack([coefficients, np.full((len(coefficients), 1), shift)])
        metadata.update(augmented=True, bias_shift=shift)
        warn(f"Appended constant feature with bias shift {shift:.6g} for positivity")

    context_scale = min(1.0, L / float(np.linalg.norm(contexts, axis=1).max()))
    coefficient_scale = min(1.0, S / float(np.linalg.norm(coefficients, axis=1).max()))
    metadata.update(context_scale=context_scale, coefficient_scale=coefficient_scale)
    if context_scale < 1.0 or coefficient_scale < 1.0:
        info(f"Rescaled features: contexts x{context_scale:.6g}, items x{coefficient_scale:.6g}")
    return contexts * context_scale, coefficients * coefficient_scale, metadata


def make_dataset_environment(
    contexts: NDArray[np.float64],
    coefficients: NDArray[np.float64],
    noise_variance: float = DEFAULT_NOISE_VARIANCE,
    target: int | None = None,
    label: str = "dataset",
    metadata: dict[str, Any] | None = None,
) -> Environment:
    """Build a replay environment; every pool row is a probe, so validation is exact."""
    target = len(coefficients) - 1 if target is None else target
    pool = np.array(contexts, dtype=np.float64)
    sampler = ContextSampler(mode="dataset", d=pool.shape[1], pool=pool)
    return Environment(
        thetas=np.array(coefficients, dtype=np.float64),
        sampler=sampler,
        noise=NoiseModel(noise_variance),
        target=target,
        probes=pool.copy(),
        label=label,
        metadata=dict(metadata or {}),
    )
