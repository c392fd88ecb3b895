#!/usr/bin/env python3
"""Tests for scripts/lib/config.py: TOML experiment configs."""

import math
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "scripts"))

from lib.config import (
    PROBE_ESTIMATE,
    WORKERS_ENV,
    AttackerConfig,
    ExperimentConfig,
    RunConfig,
    load_config,
    parse_config,
    resolve_workers,
    serialize_config,
)
from lib.errors import ConfigError

CONFIGS = Path(__file__).parent.parent / "configs"


class TestLoadConfig:
    """Test reading the shipped configs."""

    def test_canonical_synthetic(self) -> None:
        cfg = load_config(CONFIGS / "paper_synthetic.toml")
        assert cfg.environment.kind == "synthetic"
        assert (cfg.environment.d, cfg.environment.n_arms) == (6, 10)
        assert cfg.environment.noise_variance == 0.01
        assert cfg.model.L == pytest.approx(math.sqrt(2))
        assert cfg.model.lam == 2.0
        assert cfg.model.delta == 0.1
        assert cfg.run.horizon == 1_000_000
        assert cfg.run.n_trials == 10
        assert cfg.attacker.alpha == 0.2
        assert cfg.environment.min_margin == 0.0

    def test_every_shipped_config_parses(self) -> None:
        paths = sorted((CONFIGS / "synthetic").glob("*.toml"))
        assert len(paths) == 9
        cells = set()
        for path in paths:
            cfg = load_config(path)
            cells.add((cfg.agent.kind, cfg.attacker.kind))
            assert cfg.attacker.alpha == 0.2
            assert path.stem == f"{cfg.agent.kind}-{cfg.attacker.kind}"
        assert len(cells) == 9

    def test_output_dir_relative_to_config(self) -> None:
        cfg = load_config(CONFIGS / "paper_synthetic.toml")
        assert cfg.output_path == CONFIGS / "../results/synthetic/linucb-whitebox"

    def test_missing_file(self, tmp_path: Path) -> None:
        with pytest.raises(ConfigError, match="cannot read config"):
            load_config(tmp_path / "absent.toml")


class TestParseConfig:
    """Test parsing and validation."""

    def test_defaults(self) -> None:
        cfg = parse_config("")
        assert cfg == ExperimentConfig()
        assert cfg.agent.kind == "linucb"
        assert cfg.attacker.kind == "whitebox"

    def test_integer_accepted_for_float(self) -> None:
        cfg = parse_config("[model]\nlam = 3\n")
        assert cfg.model.lam == 3.0
        assert isinstance(cfg.model.lam, float)

    def test_margin_defaults(self) -> None:
        cfg = parse_config("[environment]\nmin_margin = 0.05\n")
        assert cfg.environment.min_margin == 0.05
        assert cfg.attacker.alpha == PROBE_ESTIMATE

    def test_checkpoints_become_tuple(self) -> None:
        cfg = parse_config("[run]\nhorizon = 1000\ncheckpoints = [10, 100, 1000]\n")
        assert cfg.run.checkpoints == (10, 100, 1000)

    @pytest.mark.parametrize(
        ("text", "message"),
        [
            ("[environment]\ncolour = 1\n", "unknown keys colour"),
            ("[extras]\nx = 1\n", "unknown config sections"),
            ("[run]\nhorizon = 'long'\n", "expected int"),
            ("[run]\nhorizon = true\n", "got a boolean"),
            ("[run]\ncheckpoints = [1.5]\n", "list of integers"),
            ("[attacker]\nalpha = 0.6\n", "attacker.alpha must lie in"),
            ("[attacker]\nalpha = 'guess'\n", "probe-estimate"),
            ("[agent]\nkind = 'exp3'\n", "agent.kind"),
            ("[attacker]\nkind = 'greybox'\n", "attacker.kind"),
            ("[environment]\nkind = 'features'\n", "environment.features is required"),
            ("[run]\nhorizon = 100\ncheckpoints = [10, 1000]\n", "smaller than the largest"),
            ("[run]\ncheckpoints = [100, 10]\n", "strictly increasing"),
            ("[model]\nlam = 1.0\n", "lambda must be >= L"),
            ("[environment]\ntarget = 10\n", "target 10 out of range"),
            ("[environment]\nmin_margin = 0.5\n", "min_margin must lie in"),
            ("[run]\nhorizon = \n", "not valid TOML"),
        ],
    )
    def test_rejects(self, text: str, message: str) -> None:
        with pytest.raises(ConfigError, match=message):
            parse_config(text)

    def test_lists_every_problem(self) -> None:
        with pytest.raises(ConfigError) as exc:
            parse_config("[run]\nn_trials = 0\nworkers = 0\n")
        assert "run.n_trials" in str(exc.value)
        assert "run.workers" in str(exc.value)

    def test_features_path_resolution(self, tmp_path: Path) -> None:
        text = "[environment]\nkind = 'features'\nfeatures = 'data/jester.npz'\n"
        cfg = parse_config(text, base_dir=tmp_path)
        assert cfg.features_path == tmp_path / "data" / "jester.npz"


class TestSerializeConfig:
    """Test writing configs back out."""

    def test_serialized_config_parses_to_same_value(self) -> None:
        cfg = ExperimentConfig(
            attacker=AttackerConfig(kind="blackbox", alpha=0.1),
            run=RunConfig(horizon=5000, n_trials=3, checkpoints=(10, 100, 5000)),
        )
        text = serialize_config(cfg, title="round trip")
        assert text.startswith("# round trip")
        assert parse_config(text) == cfg

    def test_unset_values_omitted(self) -> None:
        text = serialize_config(ExperimentConfig())
        assert "checkpoints" not in text
        assert "ts_scale" not in text

    def test_with_run_validates(self) -> None:
        cfg = ExperimentConfig()
        assert cfg.with_run(horizon=50).run.horizon == 50
        with pytest.raises(ConfigError):
            cfg.with_run(n_trials=0)


class TestWorkers:
    """Test the worker-count override."""

    def test_config_value(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.delenv(WORKERS_ENV, raising=False)
        cfg = ExperimentConfig(run=RunConfig(workers=3))
        assert resolve_workers(cfg) == 3

    def test_environment_overrides(self, monkeypatch: pytest.MonkeyPatch) -> None:
        monkeypatch.setenv(WORKERS_ENV, "5")
        assert resolve_workers(ExperimentConfig()) == 5

    @pytest.mark.parametrize("value", ["many", "0"])
    def test_bad_environment_value(self, monkeypatch: pytest.MonkeyPatch, value: str) -> None:
        monkeypatch.setenv(WORKERS_ENV, value)
        with pytest.raises(ConfigError, match=WORKERS_ENV):
            resolve_workers(ExperimentConfig())
