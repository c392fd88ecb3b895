#!/usr/bin/env python3
"""Run one experiment cell from a TOML config and write its artifacts.

Usage:
    ./scripts/run_experiment.py configs/paper_synthetic.toml
    ./scripts/run_experiment.py configs/paper_synthetic.toml --trials 2 --horizon 100000

Artifacts in the run's output directory:
    report.json      full ExperimentReport with provenance
    summary.csv      seed,target_pulls,attack_cost,final_regret (one row per trial)
    cost_curve.csv   t,mean_cost,std_cost
    regret_curve.csv t,mean_regret,std_regret
    config.toml      the resolved config
    rounds-<seed>.csv per-round logs when run.record_rounds is set
"""

import argparse
import sys
from dataclasses import astuple
from pathlib import Path
from typing import Any

# Add scripts directory to path so we can import lib
sys.path.insert(0, str(Path(__file__).parent))

from lib.base_command import LabCommand
from lib.config import ExperimentConfig, load_config, serialize_config
from lib.errors import EXIT_OK
from lib.harness import ExperimentReport, run_experiment
from lib.logging import success
from lib.output import write_csv, write_json, write_text

SUMMARY_HEADER = ("seed", "target_pulls", "attack_cost", "final_regret")
COST_CURVE_HEADER = ("t", "mean_cost", "std_cost")
REGRET_CURVE_HEADER = ("t", "mean_regret", "std_regret")
ROUNDS_HEADER = (
    "t",
    "context_index",
    "agent_arm",
    "post_arm",
    "epsilon",
    "reward",
    "attacked",
    "regret",
)


def write_artifacts(report: ExperimentReport, cfg: ExperimentConfig, out_dir: Path) -> None:
    """Write every artifact of a finished experiment into out_dir."""
    write_json(out_dir / "report.json", report)
    write_csv(out_dir / "summary.csv", SUMMARY_HEADER, report.summary_rows())
    write_csv(out_dir / "cost_curve.csv", COST_CURVE_HEADER, report.cost_curve_rows())
    write_csv(
        out_dir / "regret_curve.csv",
        REGRET_CURVE_HEADER,
        [
            [t, mean, std]
            for t, mean, std in zip(
                report.checkpoints, report.regret_curve_mean, report.regret_curve_std, strict=True
            )
        ],
    )
    write_text(
        out_dir / "config.toml",
        serialize_config(cfg, title=f"Resolved config of {report.table_line()}"),
    )
    for trial in report.trials:
        if trial.rounds is None:
            continue
        rows = [astuple(record) for record in trial.rounds]
        write_csv(out_dir / f"rounds-{trial.seed}.csv", ROUNDS_HEADER, rows)


class RunCommand(LabCommand):
    """Run the experiment a config describes."""

    def __init__(self) -> None:
        super().__init__(
            name="run",
            description="Run repeated trials of one agent/attacker cell from a TOML config",
        )

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("config", type=Path, help="Path to the experiment TOML config")
        parser.add_argument("--out", type=Path, help="Output directory (overrides run.output_dir)")
        parser.add_argument("--trials", type=int, help="Number of trials (overrides run.n_trials)")
        parser.add_argument("--horizon", type=int, help="Rounds per trial (overrides run.horizon)")
        parser.add_argument("--seed", type=int, help="Master seed (overrides run.seed)")
        parser.add_argument("--workers", type=int, help="Worker processes (overrides run.workers)")

    def execute(self, args: argparse.Namespace) -> int:
        cfg = load_config(args.config)
        overrides: dict[str, Any] = {
            key: value
            for key, value in (
                ("n_trials", args.trials),
                ("horizon", args.horizon),
                ("seed", args.seed),
                ("workers", args.workers),
                ("output_dir", str(args.out.resolve()) if args.out else None),
            )
            if value is not None
        }
        if args.horizon is not None and cfg.run.checkpoints:
            overrides["checkpoints"] = tuple(c for c in cfg.run.checkpoints if c <= args.horizon)
            if not overrides["checkpoints"]:
                overrides["checkpoints"] = None
        if overrides:
            cfg = cfg.with_run(**overrides)

        report = run_experiment(cfg)
        out_dir = cfg.output_path
        write_artifacts(report, cfg, out_dir)
        success(f"Wrote {out_dir}/report.json, summary.csv, cost_curve.csv")
        print(report.table_line())
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(RunCommand().run())
