#!/usr/bin/env python3
"""Tests for scripts/poisonlab.py sub-command dispatch."""

import json
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent.parent / "scripts"))

from lib.errors import EXIT_CONFIG, EXIT_DATA, EXIT_OK
from poisonlab import main


class TestDispatch:
    """Test that poisonlab routes to run, table and prep."""

    def test_requires_command(self) -> None:
        with pytest.raises(SystemExit) as exc:
            main([])
        assert exc.value.code == 2

    def test_unknown_command(self) -> None:
        with pytest.raises(SystemExit):
            main(["train"])

    def test_help_lists_commands(self, capsys: pytest.CaptureFixture[str]) -> None:
        with pytest.raises(SystemExit):
            main(["--help"])
        out = capsys.readouterr().out
        for name in ("run", "table", "prep"):
            assert name in out

    def test_run(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        config = tmp_path / "cfg.toml"
        config.write_text(
            '[environment]\nkind = "synthetic"\nd = 3\nn_arms = 4\nseed = 2\nn_probes = 500\n\n'
            '[agent]\nkind = "epsgreedy"\n\n[attacker]\nkind = "none"\n\n'
            '[run]\nhorizon = 40\nn_trials = 1\noutput_dir = "out"\nworkers = 1\n',
            encoding="utf-8",
        )
        assert main(["run", str(config)]) == EXIT_OK
        assert (tmp_path / "out" / "report.json").is_file()
        assert capsys.readouterr().out.startswith("without attacks on epsilon-Greedy (synthetic)")

    def test_run_config_error(self, tmp_path: Path, capsys: pytest.CaptureFixture[str]) -> None:
        config = tmp_path / "cfg.toml"
        config.write_text("[run]\nhorizon = 0\n", encoding="utf-8")
        assert main(["run", str(config)]) == EXIT_CONFIG
        record = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
        assert record["exit_code"] == EXIT_CONFIG

    def test_table_error(self, tmp_path: Path) -> None:
        assert main(["table", str(tmp_path)]) == EXIT_DATA

    def test_prep_error(self, tmp_path: Path) -> None:
        argv = ["prep", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "f.npz")]
        assert main(argv) == EXIT_DATA
