"""Experiment configuration: TOML files read and written with tomlkit.

A config has five tables:

    [environment]  synthetic generation parameters or a feature file path
    [model]        L, S, R, lam, delta (d and K come from the environment)
    [agent]        victim algorithm and its knobs
    [attacker]     attack strategy and where alpha comes from
    [run]          horizon, trials, master seed, checkpoints, output directory

Arm indices are 0-based. A missing target means the last arm of a feature
file, or for synthetic generation the arm with the largest probe margin,
which is moved to the last index.
"""

import math
import os
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import tomlkit
import tomlkit.exceptions

from .agents import AGENT_KINDS
from .attackers import ATTACKER_KINDS
from .environment import (
    DEFAULT_ALPHA_MIN,
    DEFAULT_ALPHA_SHRINK,
    DEFAULT_MIN_MARGIN,
    DEFAULT_NOISE_VARIANCE,
    DEFAULT_PROBES,
)
from .errors import ConfigError
from .params import DEFAULT_L, DEFAULT_R, DEFAULT_S, ModelParams

PROBE_ESTIMATE = "probe-estimate"
ENVIRONMENT_KINDS = ("synthetic", "features")
WORKERS_ENV = "POISONLAB_WORKERS"

DEFAULT_D = 6
DEFAULT_ARMS = 10


@dataclass(frozen=True, slots=True)
class EnvironmentConfig:
    """Where the ground-truth bandit comes from.

    For kind="features", d and n_arms are optional; when given they must
    match the feature file.
    """

    kind: str = "synthetic"
    d: int | None = None
    n_arms: int | None = None
    seed: int = 0
    noise_variance: float = DEFAULT_NOISE_VARIANCE
    target: int | None = None
    n_probes: int = DEFAULT_PROBES
    features: str | None = None
    label: str | None = None
    alpha_shrink: float = DEFAULT_ALPHA_SHRINK
    alpha_min: float = DEFAULT_ALPHA_MIN
    min_margin: float = DEFAULT_MIN_MARGIN


@dataclass(frozen=True, slots=True)
class ModelConfig:
    L: float = DEFAULT_L
    S: float = DEFAULT_S
    R: float = DEFAULT_R
    lam: float = 2.0
    delta: float = 0.1


@dataclass(frozen=True, slots=True)
class AgentConfig:
    kind: str = "linucb"
    ts_scale: float | None = None
    eps_c: float = 1.0


@dataclass(frozen=True, slots=True)
class AttackerConfig:
    """alpha is a float in (0, 1/2) or "probe-estimate"."""

    kind: str = "whitebox"
    alpha: float | str = PROBE_ESTIMATE


@dataclass(frozen=True, slots=True)
class RunConfig:
    horizon: int = 1_000_000
    n_trials: int = 10
    seed: int = 0
    checkpoints: tuple[int, ...] | None = None
    output_dir: str = "results/run"
    workers: int = 1
    record_rounds: bool = False
    track_coverage: bool = False


@dataclass(frozen=True, slots=True)
class ExperimentConfig:
    """A complete experiment description.

    base_dir is the directory relative paths are resolved against; it is not
    part of the serialized config.
    """

    environment: EnvironmentConfig = field(default_factory=EnvironmentConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    attacker: AttackerConfig = field(default_factory=AttackerConfig)
    run: RunConfig = field(default_factory=RunConfig)
    base_dir: Path = field(default=Path(), compare=False)

    @property
    def features_path(self) -> Path | None:
        if self.environment.features is None:
            return None
        return self._resolve(self.environment.features)

    @property
    def output_path(self) -> Path:
        return self._resolve(self.run.output_dir)

    def _resolve(self, value: str) -> Path:
        path = Path(value)
        return path if path.is_absolute() else self.base_dir / path

    def with_run(self, **changes: Any) -> "ExperimentConfig":
        """Return a copy with [run] fields replaced (command-line overrides)."""
        updated = replace(self, run=replace(self.run, **changes))
        validate_config(updated)
        return updated


# Accepted TOML value types per key. Floats accept integers.
_SCHEMA: dict[str, tuple[type[Any], dict[str, tuple[type, ...]]]] = {
    "environment": (
        EnvironmentConfig,
        {
            "kind": (str,),
            "d": (int,),
            "n_arms": (int,),
            "seed": (int,),
            "noise_variance": (float,),
            "target": (int,),
            "n_probes": (int,),
            "features": (str,),
            "label": (str,),
            "alpha_shrink": (float,),
            "alpha_min": (float,),
            "min_margin": (float,),
        },
    ),
    "model": (
        ModelConfig,
        {"L": (float,), "S": (float,), "R": (float,), "lam": (float,), "delta": (float,)},
    ),
    "agent": (AgentConfig, {"kind": (str,), "ts_scale": (float,), "eps_c": (float,)}),
    "attacker": (AttackerConfig, {"kind": (str,), "alpha": (float, str)}),
    "run": (
        RunConfig,
        {
            "horizon": (int,),
            "n_trials": (int,),
            "seed": (int,),
            "checkpoints": (list,),
            "output_dir": (str,),
            "workers": (int,),
            "record_rounds": (bool,),
            "track_coverage": (bool,),
        },
    ),
}


def _coerce(section: str, key: str, value: Any, accepted: tuple[type, ...]) -> Any:
    where = f"[{section}].{key}"
    if isinstance(value, bool):
        if bool in accepted:
            return value
        raise ConfigError(f"{where}: expected {accepted[0].__name__}, got a boolean")
    if float in accepted and isinstance(value, int | float):
        if not math.isfinite(value):
            raise ConfigError(f"{where}: must be finite (got {value})")
        return float(value)
    if int in accepted and isinstance(value, int):
        return value
    if str in accepted and isinstance(value, str):
        return value
    if list in accepted and isinstance(value, list):
        if not all(isinstance(v, int) and not isinstance(v, bool) for v in value):
            raise ConfigError(f"{where}: expected a list of integers")
        return tuple(value)
    names = " or ".join(t.__name__ for t in accepted)
    raise ConfigError(f"{where}: expected {names}, got {type(value).__name__}")


def _build_section(name: str, table: Any) -> Any:
    cls, schema = _SCHEMA[name]
    if not isinstance(table, dict):
        raise ConfigError(f"[{name}] must be a table")
    unknown = sorted(set(table) - set(schema))
    if unknown:
        raise ConfigError(f"[{name}]: unknown keys {', '.join(unknown)}")
    values = {key: _coerce(name, key, value, schema[key]) for key, value in table.items()}
    return cls(**values)


def validate_config(cfg: ExperimentConfig) -> None:
    """Check cross-field constraints.

    Raises:
        ConfigError: Listing every problem found
    """
    problems: list[str] = []
    env, run, attacker = cfg.environment, cfg.run, cfg.attacker

    if env.kind not in ENVIRONMENT_KINDS:
        problems.append(f"environment.kind must be one of {', '.join(ENVIRONMENT_KINDS)}")
    if env.kind == "features" and env.features is None:
        problems.append("environment.features is required when kind = 'features'")
    if env.kind == "synthetic" and env.features is not None:
        problems.append("environment.features is only valid when kind = 'features'")
    if env.d is not None and env.d < 2:
        problems.append(f"environment.d must be >= 2 (got {env.d})")
    if env.n_arms is not None and env.n_arms < 2:
        problems.append(f"environment.n_arms must be >= 2 (got {env.n_arms})")
    if env.target is not None:
        known_arms = env.n_arms
        if known_arms is None and env.kind == "synthetic":
            known_arms = DEFAULT_ARMS
        if env.target < 0 or (known_arms is not None and env.target >= known_arms):
            problems.append(f"environment.target {env.target} out of range")
    if env.noise_variance < 0:
        problems.append("environment.noise_variance must be >= 0")
    if env.n_probes < 1:
        problems.append("environment.n_probes must be >= 1")
    if not 0 < env.alpha_shrink <= 1:
        problems.append("environment.alpha_shrink must lie in (0, 1]")
    if not 0 < env.alpha_min < 0.5:
        problems.append("environment.alpha_min must lie in (0, 1/2)")
    if not 0 <= env.min_margin < 0.5:
        problems.append("environment.min_margin must lie in [0, 1/2)")

    if cfg.agent.kind not in AGENT_KINDS:
        problems.append(f"agent.kind must be one of {', '.join(AGENT_KINDS)}")
    if cfg.agent.ts_scale is not None and cfg.agent.ts_scale < 0:
        problems.append("agent.ts_scale must be >= 0")
    if cfg.agent.eps_c < 0:
        problems.append("agent.eps_c must be >= 0")

    if attacker.kind not in ATTACKER_KINDS:
        problems.append(f"attacker.kind must be one of {', '.join(ATTACKER_KINDS)}")
    if isinstance(attacker.alpha, str):
        if attacker.alpha != PROBE_ESTIMATE:
            problems.append(f"attacker.alpha must be a number or {PROBE_ESTIMATE!r}")
    elif not 0 < attacker.alpha < 0.5:
        problems.append(f"attacker.alpha must lie in (0, 1/2) (got {attacker.alpha})")

    if run.horizon < 1:
        problems.append("run.horizon must be >= 1")
    if run.n_trials < 1:
        problems.append("run.n_trials must be >= 1")
    if run.workers < 1:
        problems.append("run.workers must be >= 1")
    if run.checkpoints is not None:
        points = list(run.checkpoints)
        if not points:
            problems.append("run.checkpoints must not be empty")
        elif points != sorted(set(points)) or points[0] < 1:
            problems.append("run.checkpoints must be strictly increasing positive integers")
        elif points[-1] > run.horizon:
            problems.append(
                f"run.horizon {run.horizon} is smaller than the largest checkpoint {points[-1]}"
            )

    try:
        ModelParams(d=1, K=2, T=max(run.horizon, 1), **asdict(cfg.model))
    except ConfigError as e:
        problems.append(str(e))

    if problems:
        raise ConfigError("invalid config: " + "; ".join(problems))


def parse_config(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    """Parse and validate a TOML config.

    Raises:
        ConfigError: On syntax errors, unknown keys, wrong types or invalid values
    """
    try:
        data = tomlkit.loads(text).unwrap()
    except tomlkit.exceptions.ParseError as e:
        raise ConfigError(f"config is not valid TOML: {e}") from e

    unknown = sorted(set(data) - set(_SCHEMA))
    if unknown:
        raise ConfigError(f"unknown config sections: {', '.join(unknown)}")
    sections = {name: _build_section(name, data.get(name, {})) for name in _SCHEMA}
    cfg = ExperimentConfig(**sections, base_dir=base_dir or Path())
    validate_config(cfg)
    return cfg


def load_config(path: Path) -> ExperimentConfig:
    """Read a config file; relative paths inside resolve against its directory."""
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    return parse_config(text, base_dir=path.parent)


def serialize_config(cfg: ExperimentConfig, title: str | None = None) -> str:
    """Render a config as TOML; unset optional values are omitted."""
    doc = tomlkit.document()
    if title:
        doc.add(tomlkit.comment(title))
        doc.add(tomlkit.nl())
    for name in _SCHEMA:
        table = tomlkit.table()
        for key, value in asdict(getattr(cfg, name)).items():
            if value is None:
                continue
            table[key] = list(value) if isinstance(value, tuple) else value
        doc[name] = table
    return tomlkit.dumps(doc)


def resolve_workers(cfg: ExperimentConfig) -> int:
    """Worker processes for trials: POISONLAB_WORKERS overrides run.workers."""
    raw = os.environ.get(WORKERS_ENV)
    if raw is None or raw.strip() == "":
        return cfg.run.workers
    try:
        workers = int(raw)
    except ValueError as e:
        raise ConfigError(f"{WORKERS_ENV} must be an integer (got {raw!r})") from e
    if workers < 1:
        raise ConfigError(f"{WORKERS_ENV} must be >= 1 (got {workers})")
    return workers
