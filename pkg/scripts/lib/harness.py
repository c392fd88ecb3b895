"""Trial loop, repeated-trial aggregation and the reported metrics.

One round of a trial, in order:

    x_t  <- environment sampler
    I_t  <- agent.select(x_t)
    I0_t <- attacker.transform(x_t, I_t, t)
    r_t  <- environment reward of arm I0_t at x_t
    agent.observe(x_t, I_t, r_t)          the agent keeps its own arm label
    attacker.observe(x_t, decision, r_t)

Each trial owns four random streams spawned from its seed (contexts, noise,
agent, attacker coin), so trials are independent of execution order and
can run in separate processes.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from datetime import datetime, timezone
from multiprocessing import Pool
from pathlib import Path
from typing import Any

import numpy as np
from numpy.typing import NDArray

from .agents import AGENT_LABELS, Agent, make_agent
from .attackers import (
    ATTACKER_LABELS,
    Attacker,
    BlackBoxAttacker,
    WhiteBoxAttacker,
    make_attacker,
)
from .config import DEFAULT_ARMS, DEFAULT_D, PROBE_ESTIMATE, ExperimentConfig, resolve_workers
from .environment import (
    Environment,
    make_dataset_environment,
    make_synthetic_environment,
)
from .errors import ConfigError, DataError, NumericError, PoisonLabError, TrialError
from .logging import debug, info, section, success, warn
from .params import ModelParams, blackbox_cost_bound, omega_array, whitebox_cost_bound
from .ratings import load_features
from .report_base import ReportBase

UTC = timezone.utc  # datetime.UTC alias is Python 3.11+

COVERAGE_MIN_PULLS = 50
AGENT_COVERAGE_PROBES = 1000
PROGRESS_EVERY = 100_000
CONTEXT_BLOCK = 4096
NORM_TOLERANCE = 1.0 + 1e-12


@dataclass(frozen=True, slots=True)
class RoundRecord:
    """Log entry for one round.

    context_index is the pool row in dataset mode and the row of
    TrialResult.contexts in synthetic mode.
    """

    t: int
    context_index: int
    agent_arm: int
    post_arm: int
    epsilon: float
    reward: float
    attacked: bool
    regret: float


@dataclass
class TrialResult(ReportBase):
    """Metrics of one trial."""

    seed: int
    agent: str
    attacker: str
    horizon: int
    target: int
    target_pulls: int
    attack_cost: int
    final_regret: float
    checkpoints: list[int]
    cost_curve: list[int]
    regret_curve: list[float]
    pull_counts: list[int]
    degenerate_rounds: int = 0
    unattackable_rounds: int = 0
    attacker_coverage: list[float | None] | None = None
    agent_coverage: list[float | None] | None = None
    rounds: list[RoundRecord] | None = field(default=None, metadata={"report": False})
    contexts: NDArray[np.float64] | None = field(default=None, metadata={"report": False})
    _source: dict[str, str] = field(default_factory=dict)
    _method: dict[str, str] = field(default_factory=dict)


class CoverageTally:
    """Counts how often the attacker's intervals contain the true means.

    Only arms with at least min_pulls attacker-side observations are tallied.
    """

    def __init__(self, n_arms: int, min_pulls: int = COVERAGE_MIN_PULLS) -> None:
        self.min_pulls = min_pulls
        self.hits = np.zeros(n_arms, dtype=np.int64)
        self.totals = np.zeros(n_arms, dtype=np.int64)

    def record(self, attacker: BlackBoxAttacker, x: NDArray[np.float64], means: Any) -> None:
        eligible = attacker.state.counts >= self.min_pulls
        if not eligible.any():
            return
        estimates, half_widths = attacker.state.confidence_intervals(x)
        inside = np.abs(estimates - means) <= half_widths
        self.hits += inside & eligible
        self.totals += eligible

    def fractions(self) -> list[float | None]:
        return [
            float(h) / float(n) if n else None
            for h, n in zip(self.hits, self.totals, strict=True)
        ]


def default_checkpoints(horizon: int) -> list[int]:
    """Powers of 10 below the horizon, then the horizon itself."""
    points = []
    value = 10
    while value < horizon:
        points.append(value)
        value *= 10
    points.append(horizon)
    return points


def trial_seeds(master_seed: int, n_trials: int) -> list[int]:
    """Seed of trial k: first 64-bit word of the k-th child of SeedSequence(master_seed)."""
    children = np.random.SeedSequence(master_seed).spawn(n_trials)
    return [int(child.generate_state(1, dtype=np.uint64)[0]) for child in children]


def trial_streams(seed: int) -> tuple[np.random.Generator, ...]:
    """Context, noise, agent and attacker streams of one trial."""
    return tuple(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(4))


def simulate(
    env: Environment,
    agent: Agent,
    attacker: Attacker,
    horizon: int,
    context_rng: np.random.Generator,
    noise_rng: np.random.Generator,
    checkpoints: Sequence[int] | None = None,
    record_rounds: bool = False,
    track_coverage: bool = False,
    seed: int = 0,
) -> TrialResult:
    """Run the round loop for horizon rounds and collect metrics.

    Contexts and their mean rewards are drawn CONTEXT_BLOCK rounds at a time.

    Raises:
        NumericError: If a reward is not finite
    """
    points = list(checkpoints) if checkpoints else default_checkpoints(horizon)
    if points[-1] > horizon:
        raise ConfigError(f"checkpoint {points[-1]} beyond horizon {horizon}")

    thetas = env.thetas
    target = env.target
    pulls = np.zeros(env.n_arms, dtype=np.int64)
    cost = 0
    regret = 0.0
    cost_curve: list[int] = []
    regret_curve: list[float] = []
    next_point = 0

    rounds: list[RoundRecord] | None = [] if record_rounds else None
    contexts: list[NDArray[np.float64]] | None = (
        [] if record_rounds and env.sampler.mode == "synthetic" else None
    )
    blackbox = attacker if isinstance(attacker, BlackBoxAttacker) else None
    whitebox = attacker if isinstance(attacker, WhiteBoxAttacker) else None
    tally = CoverageTally(env.n_arms) if track_coverage and blackbox is not None else None

    for start in range(0, horizon, CONTEXT_BLOCK):
        indices, block = env.sampler.sample_block(context_rng, min(CONTEXT_BLOCK, horizon - start))
        block_means = block @ thetas.T
        block_best = block_means.max(axis=1)
        for k, x in enumerate(block):
            t = start + k + 1
            means = block_means[k]
            arm = agent.select(x)
            if tally is not None and blackbox is not None:
                tally.record(blackbox, x, means)
            decision = attacker.transform(x, arm, t)
            reward = env.draw_reward(x, decision.post_action, noise_rng)
            if not math.isfinite(reward):
                raise NumericError(f"non-finite reward at round {t}")
            agent.observe(x, arm, reward)
            attacker.observe(x, decision, reward)

            gap = float(block_best[k] - means[arm])
            regret += gap
            pulls[arm] += 1
            if decision.attacked:
                cost += 1

            if rounds is not None:
                index = int(indices[k])
                if contexts is not None:
                    index = len(contexts)
                    contexts.append(x)
                rounds.append(
                    RoundRecord(
                        t=t,
                        context_index=index,
                        agent_arm=arm,
                        post_arm=decision.post_action,
                        epsilon=decision.epsilon_used,
                        reward=reward,
                        attacked=decision.attacked,
                        regret=gap,
                    )
                )
            if t == points[next_point]:
                cost_curve.append(cost)
                regret_curve.append(regret)
                next_point = min(next_point + 1, len(points) - 1)
            if t % PROGRESS_EVERY == 0:
                debug(f"seed {seed}: round {t}, target pulls {int(pulls[target])}, cost {cost}")

    if not math.isfinite(regret):
        raise NumericError("pseudo-regret is not finite")

    return TrialResult(
        seed=seed,
        agent=agent.kind,
        attacker=attacker.kind,
        horizon=horizon,
        target=target,
        target_pulls=int(pulls[target]),
        attack_cost=cost,
        final_regret=regret,
        checkpoints=points,
        cost_curve=cost_curve,
        regret_curve=regret_curve,
        pull_counts=[int(n) for n in pulls],
        degenerate_rounds=blackbox.state.degenerate_rounds if blackbox is not None else 0,
        unattackable_rounds=whitebox.unattackable_rounds if whitebox is not None else 0,
        attacker_coverage=tally.fractions() if tally is not None else None,
        rounds=rounds,
        contexts=np.array(contexts) if contexts else None,
    )


def agent_bias_coverage(
    agent: Agent,
    env: Environment,
    alpha: float,
    contexts: NDArray[np.float64],
    p: ModelParams,
    min_pulls: int = COVERAGE_MIN_PULLS,
) -> list[float | None]:
    """Per-arm fraction of contexts where the agent estimate tracks (1 - alpha) <x, theta_K>.

    For arm i != target with at least min_pulls pulls, counts contexts with
    |<x, theta_i> - (1 - alpha) <x, theta_K>| <= (omega(N_i) + horizon slack) ||x||_{V_i^-1}.
    The target arm and rarely pulled arms get None.
    """
    ridge = agent.ridge
    estimates = contexts @ ridge.theta.T
    quad = np.einsum("nd,kde,ne->nk", contexts, ridge.v_inv, contexts)
    norms = np.sqrt(np.maximum(quad, 0.0))
    widths = omega_array(ridge.counts, p) + p.horizon_term
    goal = (1.0 - alpha) * (contexts @ env.thetas[env.target])
    inside = np.abs(estimates - goal[:, None]) <= widths * norms

    result: list[float | None] = []
    for i in range(env.n_arms):
        if i == env.target or ridge.counts[i] < min_pulls:
            result.append(None)
        else:
            result.append(float(inside[:, i].mean()))
    return result


def run_trial(
    env: Environment,
    agent_kind: str,
    attacker_kind: str,
    params: ModelParams,
    seed: int,
    checkpoints: Sequence[int] | None = None,
    record_rounds: bool = False,
    track_coverage: bool = False,
    ts_scale: float | None = None,
    eps_c: float = 1.0,
) -> TrialResult:
    """Run one trial of params.T rounds; deterministic given (env, kinds, params, seed).

    Raises:
        ConfigError: If params disagree with the environment's dimensions
            or its context and coefficient norms exceed L and S
    """
    if params.d != env.d or params.K != env.n_arms:
        raise ConfigError(
            f"model parameters (d={params.d}, K={params.K}) do not match the environment "
            f"(d={env.d}, K={env.n_arms})"
        )
    if env.sampler.norm_bound() > params.L * NORM_TOLERANCE:
        raise ConfigError(
            f"contexts of {env.label} reach norm {env.sampler.norm_bound():.6g} above L={params.L}"
        )
    if env.coefficient_norm > params.S * NORM_TOLERANCE:
        raise ConfigError(
            f"coefficients of {env.label} reach norm {env.coefficient_norm:.6g} above S={params.S}"
        )
    context_rng, noise_rng, agent_rng, attacker_rng = trial_streams(seed)
    agent = make_agent(agent_kind, params, agent_rng, ts_scale=ts_scale, eps_c=eps_c)
    attacker = make_attacker(attacker_kind, env, params, attacker_rng)

    result = simulate(
        env,
        agent,
        attacker,
        params.T,
        context_rng,
        noise_rng,
        checkpoints=checkpoints,
        record_rounds=record_rounds,
        track_coverage=track_coverage,
        seed=seed,
    )
    if track_coverage and attacker_kind != "none":
        probes = env.probes[:AGENT_COVERAGE_PROBES]
        result.agent_coverage = agent_bias_coverage(agent, env, params.alpha, probes, params)
        result.add_metadata("agent_coverage", "final agent state", f"{len(probes)} probe contexts")
    return result


@dataclass(frozen=True, slots=True)
class GrowthSummary:
    """Cumulative values at checkpoints and the successive ratios between them.

    A ratio is None when the earlier value is zero.
    """

    checkpoints: list[int]
    values: list[float]
    ratios: list[float | None]

    def to_dict(self) -> dict[str, Any]:
        return {"checkpoints": self.checkpoints, "values": self.values, "ratios": self.ratios}


def cost_growth_summary(checkpoints: Sequence[int], values: Sequence[float]) -> GrowthSummary:
    """Ratio table of a cumulative curve (cost or regret) between successive checkpoints.

    Raises:
        ConfigError: If fewer than 2 checkpoints are given or the lengths differ
    """
    if len(checkpoints) < 2:
        raise ConfigError("growth summary needs at least 2 checkpoints")
    if len(checkpoints) != len(values):
        raise ConfigError(f"{len(checkpoints)} checkpoints but {len(values)} curve values")
    ratios: list[float | None] = [
        float(after) / float(before) if before > 0 else None
        for before, after in zip(values[:-1], values[1:], strict=True)
    ]
    return GrowthSummary(
        checkpoints=[int(t) for t in checkpoints],
        values=[float(v) for v in values],
        ratios=ratios,
    )


def _mean_std(values: Any) -> tuple[Any, Any]:
    data = np.asarray(values, dtype=np.float64)
    mean = data.mean(axis=0)
    std = data.std(axis=0, ddof=1) if len(data) > 1 else np.zeros_like(mean)
    return mean, std


@dataclass
class ExperimentReport(ReportBase):
    """Repeated trials of one (environment, agent, attacker) cell."""

    label: str
    agent: str
    attacker: str
    horizon: int
    n_trials: int
    master_seed: int
    target: int
    alpha: float
    params: dict[str, Any]
    environment: dict[str, Any]
    checkpoints: list[int]
    target_pulls_mean: float
    target_pulls_std: float
    attack_cost_mean: float
    attack_cost_std: float
    final_regret_mean: float
    final_regret_std: float
    cost_curve_mean: list[float]
    cost_curve_std: list[float]
    regret_curve_mean: list[float]
    regret_curve_std: list[float]
    degenerate_rounds: int
    trials: list[TrialResult]
    cost_growth: GrowthSummary | None = None
    regret_growth: GrowthSummary | None = None
    unattackable_rounds: int = 0
    gamma: float | None = None
    cost_bound: float | None = None
    attacker_coverage_min: float | None = None
    generated: str = field(default_factory=lambda: datetime.now(UTC).isoformat())
    _source: dict[str, str] = field(default_factory=dict)
    _method: dict[str, str] = field(default_factory=dict)

    def _convert_complex_field(self, key: str, value: Any) -> tuple[bool, Any]:
        if key == "trials":
            return True, [trial.to_dict() for trial in value]
        if key in ("cost_growth", "regret_growth"):
            return True, value.to_dict()
        return False, None

    @property
    def agent_label(self) -> str:
        return AGENT_LABELS.get(self.agent, self.agent)

    @property
    def attacker_label(self) -> str:
        return ATTACKER_LABELS.get(self.attacker, self.attacker)

    def summary_rows(self) -> list[list[Any]]:
        """Rows of summary.csv: seed, target_pulls, attack_cost, final_regret."""
        return [
            [trial.seed, trial.target_pulls, trial.attack_cost, trial.final_regret]
            for trial in self.trials
        ]

    def cost_curve_rows(self) -> list[list[Any]]:
        """Rows of cost_curve.csv: t, mean_cost, std_cost."""
        return [
            [t, float(mean), float(std)]
            for t, mean, std in zip(
                self.checkpoints, self.cost_curve_mean, self.cost_curve_std, strict=True
            )
        ]

    def table_line(self) -> str:
        """One summary line: mean target pulls for this cell."""
        return (
            f"{self.attacker_label} on {self.agent_label} ({self.label}): "
            f"{self.target_pulls_mean:.1f} target pulls of T={self.horizon}"
        )


def aggregate_trials(
    trials: Sequence[TrialResult],
    env: Environment,
    params: ModelParams,
    master_seed: int,
) -> ExperimentReport:
    """Mean and sample standard deviation over trials.

    Raises:
        DataError: If there are no trials or their checkpoints differ
    """
    if not trials:
        raise DataError("no trials to aggregate")
    first = trials[0]
    if any(trial.checkpoints != first.checkpoints for trial in trials):
        raise DataError("trials disagree on checkpoints")

    pulls_mean, pulls_std = _mean_std([trial.target_pulls for trial in trials])
    cost_mean, cost_std = _mean_std([trial.attack_cost for trial in trials])
    regret_mean, regret_std = _mean_std([trial.final_regret for trial in trials])
    cost_curve_mean, cost_curve_std = _mean_std([trial.cost_curve for trial in trials])
    regret_curve_mean, regret_curve_std = _mean_std([trial.regret_curve for trial in trials])

    report = ExperimentReport(
        label=env.label,
        agent=first.agent,
        attacker=first.attacker,
        horizon=params.T,
        n_trials=len(trials),
        master_seed=master_seed,
        target=env.target,
        alpha=params.alpha,
        params=params.to_dict(),
        environment=dict(env.metadata),
        checkpoints=list(first.checkpoints),
        target_pulls_mean=float(pulls_mean),
        target_pulls_std=float(pulls_std),
        attack_cost_mean=float(cost_mean),
        attack_cost_std=float(cost_std),
        final_regret_mean=float(regret_mean),
        final_regret_std=float(regret_std),
        cost_curve_mean=[float(v) for v in cost_curve_mean],
        cost_curve_std=[float(v) for v in cost_curve_std],
        regret_curve_mean=[float(v) for v in regret_curve_mean],
        regret_curve_std=[float(v) for v in regret_curve_std],
        degenerate_rounds=sum(trial.degenerate_rounds for trial in trials),
        unattackable_rounds=sum(trial.unattackable_rounds for trial in trials),
        trials=list(trials),
    )

    if len(first.checkpoints) >= 2:
        report.cost_growth = cost_growth_summary(first.checkpoints, report.cost_curve_mean)
        report.regret_growth = cost_growth_summary(first.checkpoints, report.regret_curve_mean)

    coverage = [
        value
        for trial in trials
        if trial.attacker_coverage is not None
        for value in trial.attacker_coverage
        if value is not None
    ]
    if coverage:
        report.attacker_coverage_min = min(coverage)
        report.add_metadata(
            "attacker_coverage_min",
            "trial tallies",
            f"minimum over arms with >= {COVERAGE_MIN_PULLS} attacker observations",
        )

    if first.agent == "linucb" and first.attacker in ("whitebox", "blackbox"):
        gamma = env.min_target_mean()
        bound = whitebox_cost_bound if first.attacker == "whitebox" else blackbox_cost_bound
        report.gamma = gamma
        report.cost_bound = bound(params, gamma, params.T)
        report.add_metadata(
            "gamma", "probe-estimate", f"min target mean over {len(env.probes)} probes"
        )
        report.add_metadata("cost_bound", "theory", f"{first.attacker} cost bound at T={params.T}")
    return report


def build_environment(cfg: ExperimentConfig) -> Environment:
    """Construct the environment a config describes.

    Raises:
        DataError: If the feature file is missing, disagrees with the config,
            or violates the context-norm bound L or the item-norm bound S
    """
    env_cfg = cfg.environment
    if env_cfg.kind == "synthetic":
        return make_synthetic_environment(
            d=env_cfg.d if env_cfg.d is not None else DEFAULT_D,
            n_arms=env_cfg.n_arms if env_cfg.n_arms is not None else DEFAULT_ARMS,
            seed=env_cfg.seed,
            noise_variance=env_cfg.noise_variance,
            target=env_cfg.target,
            n_probes=env_cfg.n_probes,
            min_margin=env_cfg.min_margin,
        )

    path = cfg.features_path
    assert path is not None  # guaranteed by validate_config
    features = load_features(path, expected_d=env_cfg.d)
    if env_cfg.n_arms is not None and env_cfg.n_arms != features.n_items:
        raise DataError(
            f"config expects {env_cfg.n_arms} arms but {path.name} has {features.n_items} items"
        )
    norms = np.linalg.norm(features.users, axis=1)
    if float(norms.max()) > cfg.model.L * NORM_TOLERANCE:
        raise DataError(
            f"context norm {float(norms.max()):.6g} in {path.name} exceeds L={cfg.model.L}"
        )
    item_norms = np.linalg.norm(features.items, axis=1)
    if float(item_norms.max()) > cfg.model.S * NORM_TOLERANCE:
        raise DataError(
            f"item norm {float(item_norms.max()):.6g} in {path.name} exceeds S={cfg.model.S}"
        )
    return make_dataset_environment(
        features.users,
        features.items,
        noise_variance=env_cfg.noise_variance,
        target=env_cfg.target,
        label=env_cfg.label or Path(path).stem,
        metadata={"features": str(path), **features.metadata},
    )


def resolve_alpha(cfg: ExperimentConfig, env: Environment) -> tuple[float, str, str]:
    """Attack margin and its provenance (value, source, method)."""
    alpha = cfg.attacker.alpha
    if alpha != PROBE_ESTIMATE:
        return float(alpha), "config", "attacker.alpha"
    shrink = cfg.environment.alpha_shrink
    value = env.compute_alpha(alpha_min=cfg.environment.alpha_min, shrink=shrink)
    method = f"compute_alpha over {len(env.probes)} probe contexts, shrink {shrink}"
    if cfg.attacker.kind == "blackbox":
        method += " (oracle-assisted)"
    return value, PROBE_ESTIMATE, method


def build_params(cfg: ExperimentConfig, env: Environment, alpha: float) -> ModelParams:
    model = cfg.model
    return ModelParams(
        d=env.d,
        K=env.n_arms,
        L=model.L,
        S=model.S,
        R=model.R,
        lam=model.lam,
        delta=model.delta,
        alpha=alpha,
        T=cfg.run.horizon,
    )


@dataclass(frozen=True, slots=True)
class TrialJob:
    """Everything a worker process needs to run one trial."""

    env: Environment
    agent_kind: str
    attacker_kind: str
    params: ModelParams
    seed: int
    checkpoints: tuple[int, ...]
    record_rounds: bool
    track_coverage: bool
    ts_scale: float | None
    eps_c: float


def run_job(job: TrialJob) -> TrialResult:
    """Run one trial; any failure is re-raised as TrialError carrying the seed."""
    try:
        return run_trial(
            job.env,
            job.agent_kind,
            job.attacker_kind,
            job.params,
            job.seed,
            checkpoints=job.checkpoints,
            record_rounds=job.record_rounds,
            track_coverage=job.track_coverage,
            ts_scale=job.ts_scale,
            eps_c=job.eps_c,
        )
    except TrialError:
        raise
    except (PoisonLabError, np.linalg.LinAlgError, ValueError, FloatingPointError) as e:
        raise TrialError(job.seed, e) from e


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Run n_trials trials of the configured cell and aggregate them.

    Raises:
        TrialError: If any trial fails (carries that trial's seed)
    """
    section(f"Experiment: {cfg.attacker.kind} attack on {cfg.agent.kind}")
    env = build_environment(cfg)
    alpha, alpha_source, alpha_method = resolve_alpha(cfg, env)
    params = build_params(cfg, env, alpha)
    checkpoints = tuple(cfg.run.checkpoints or default_checkpoints(params.T))
    info(f"Environment {env.label}: d={env.d}, K={env.n_arms}, target arm {env.target}")
    info(f"alpha = {alpha:.6g} ({alpha_source}), T = {params.T}, trials = {cfg.run.n_trials}")

    jobs = [
        TrialJob(
            env=env,
            agent_kind=cfg.agent.kind,
            attacker_kind=cfg.attacker.kind,
            params=params,
            seed=seed,
            checkpoints=checkpoints,
            record_rounds=cfg.run.record_rounds,
            track_coverage=cfg.run.track_coverage,
            ts_scale=cfg.agent.ts_scale,
            eps_c=cfg.agent.eps_c,
        )
        for seed in trial_seeds(cfg.run.seed, cfg.run.n_trials)
    ]

    workers = min(resolve_workers(cfg), len(jobs))
    if workers > 1:
        info(f"Running {len(jobs)} trials on {workers} worker processes")
        with Pool(workers) as pool:
            trials = pool.map(run_job, jobs)
    else:
        trials = []
        for k, job in enumerate(jobs, start=1):
            trials.append(run_job(job))
            debug(f"trial {k}/{len(jobs)} done (seed {job.seed})")

    report = aggregate_trials(trials, env, params, cfg.run.seed)
    report.add_metadata("alpha", alpha_source, alpha_method)
    if report.unattackable_rounds:
        warn(
            f"{report.unattackable_rounds} rounds over {len(trials)} trials could not reach "
            f"alpha={alpha:.6g}; the lowest-mean arm was served instead"
        )
        report.add_metadata(
            "unattackable_rounds", "trial counters", "saturated white-box rounds, summed"
        )
    success(report.table_line())
    return report
