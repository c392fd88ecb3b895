#!/usr/bin/env python3
"""Combine report.json files into a target-pull table.

Rows are agent x attacker cells (agents outer, attackers inner, in the
order epsilon-Greedy, LinUCB, LinTS / none, white-box, black-box); columns
are the dataset labels found, synthetic first. A missing cell is left empty.

Usage:
    ./scripts/build_table.py results/
    ./scripts/build_table.py results/ --out tables/

Writes table.csv and table.md (rendered from templates/table.md.j2).
"""

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from jinja2 import Environment, FileSystemLoader, select_autoescape

# Add scripts directory to path so we can import lib
sys.path.insert(0, str(Path(__file__).parent))

from lib.agents import AGENT_KINDS, AGENT_LABELS
from lib.attackers import ATTACKER_KINDS, ATTACKER_LABELS
from lib.base_command import LabCommand
from lib.errors import EXIT_OK, ReportError
from lib.logging import info, success, warn
from lib.output import write_csv, write_text

TEMPLATES_DIR = Path(__file__).parent.parent / "templates"
TABLE_TEMPLATE = "table.md.j2"
REQUIRED_KEYS = ("label", "agent", "attacker", "horizon", "target_pulls_mean")


def row_label(agent: str, attacker: str) -> str:
    """Row title in the style 'White-box attack on LinUCB' / 'LinUCB without attacks'."""
    agent_label = AGENT_LABELS.get(agent, agent)
    if attacker == "none":
        return f"{agent_label} without attacks"
    return f"{ATTACKER_LABELS.get(attacker, attacker).capitalize()} on {agent_label}"


def _order(value: str, known: tuple[str, ...]) -> tuple[int, str]:
    return (known.index(value), value) if value in known else (len(known), value)


@dataclass
class SummaryTable:
    """Mean target pulls per (agent, attacker) row and dataset column."""

    horizon: int
    columns: list[str] = field(default_factory=list)
    rows: list[tuple[str, str]] = field(default_factory=list)
    cells: dict[tuple[str, str, str], float] = field(default_factory=dict)

    def value(self, agent: str, attacker: str, label: str) -> float | None:
        return self.cells.get((agent, attacker, label))

    def csv_rows(self) -> list[list[Any]]:
        return [
            [agent, attacker, *(self.value(agent, attacker, label) for label in self.columns)]
            for agent, attacker in self.rows
        ]


def load_reports(directory: Path) -> list[dict[str, Any]]:
    """Read every report.json below directory.

    Raises:
        ReportError: If none is found or one is unreadable or incomplete
    """
    paths = sorted(directory.rglob("report.json"))
    if not paths:
        raise ReportError(f"no report.json found under {directory}")
    reports = []
    for path in paths:
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ReportError(f"cannot read {path}: {e}") from e
        missing = [key for key in REQUIRED_KEYS if key not in data]
        if missing:
            raise ReportError(f"{path} lacks {', '.join(missing)}")
        data["_path"] = str(path)
        reports.append(data)
    info(f"Loaded {len(reports)} reports from {directory}")
    return reports


def build_summary_table(reports: list[dict[str, Any]]) -> SummaryTable:
    """Arrange reports into the table.

    Raises:
        ReportError: If horizons differ or two reports fill the same cell
    """
    horizons = {int(report["horizon"]) for report in reports}
    if len(horizons) != 1:
        raise ReportError(f"reports disagree on T: {sorted(horizons)}")
    table = SummaryTable(horizon=horizons.pop())

    sources: dict[tuple[str, str, str], str] = {}
    for report in reports:
        key = (str(report["agent"]), str(report["attacker"]), str(report["label"]))
        if key in sources:
            raise ReportError(f"{report['_path']} and {sources[key]} both report cell {key}")
        sources[key] = report["_path"]
        table.cells[key] = float(report["target_pulls_mean"])

    labels = {label for _, _, label in table.cells}
    table.columns = sorted(labels, key=lambda label: (label != "synthetic", label))
    table.rows = sorted(
        {(agent, attacker) for agent, attacker, _ in table.cells},
        key=lambda row: (_order(row[0], AGENT_KINDS), _order(row[1], ATTACKER_KINDS)),
    )
    return table


def render_markdown(table: SummaryTable, templates_dir: Path = TEMPLATES_DIR) -> str:
    """Render the table as Markdown with the jinja2 template."""
    env = Environment(
        loader=FileSystemLoader(templates_dir),
        autoescape=select_autoescape(["html", "xml"]),
        trim_blocks=True,
        lstrip_blocks=True,
    )

    def pulls_filter(value: float | None) -> str:
        return "" if value is None else f"{value:.1f}"

    env.filters["pulls"] = pulls_filter
    template = env.get_template(TABLE_TEMPLATE)
    rows = [
        {
            "title": row_label(agent, attacker),
            "values": [table.value(agent, attacker, label) for label in table.columns],
        }
        for agent, attacker in table.rows
    ]
    rendered: str = template.render(horizon=table.horizon, columns=table.columns, rows=rows)
    return rendered


class TableCommand(LabCommand):
    """Combine experiment reports into table.csv and table.md."""

    def __init__(self) -> None:
        super().__init__(
            name="table",
            description="Combine report.json files into a target-pull table",
        )

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("directory", type=Path, help="Directory searched for report.json")
        parser.add_argument("--out", type=Path, help="Output directory (default: directory)")

    def execute(self, args: argparse.Namespace) -> int:
        table = build_summary_table(load_reports(args.directory))
        out_dir = args.out or args.directory
        header = ["agent", "attacker", *table.columns]
        write_csv(out_dir / "table.csv", header, table.csv_rows())
        write_text(out_dir / "table.md", render_markdown(table))
        empty = sum(
            table.value(agent, attacker, label) is None
            for agent, attacker in table.rows
            for label in table.columns
        )
        if empty:
            warn(f"{empty} table cells have no report")
        shape = f"{len(table.rows)} rows x {len(table.columns)} columns"
        success(f"Wrote {out_dir}/table.csv ({shape})")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(TableCommand().run())
