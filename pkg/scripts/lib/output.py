"""Output utilities: JSON reports, CSV tables, and atomic file writes.

Every artifact is written to a temporary file in the target directory and
renamed into place, so an interrupted run never leaves a plausible-looking
partial result behind. Floats in CSV files use 17 significant digits so that
values replay exactly.
"""

import csv
import json
import os
import tempfile
from collections.abc import Iterator, Sequence
from contextlib import contextmanager, suppress
from pathlib import Path
from typing import IO, Any

from .errors import NumericError

FLOAT_FORMAT = ".17g"


@contextmanager
def atomic_write(filepath: Path, binary: bool = False) -> Iterator[IO[Any]]:
    """Context manager for atomic file writes.

    Writes to temporary file, then atomically renames to target.
    """
    filepath.parent.mkdir(parents=True, exist_ok=True)

    # Create temp file in same directory (required for atomic rename)
    tmp_fd, tmp_path = tempfile.mkstemp(
        dir=filepath.parent, prefix=f".{filepath.name}.", suffix=".tmp"
    )

    try:
        mode = "wb" if binary else "w"
        newline = None if binary else ""
        with os.fdopen(tmp_fd, mode, newline=newline) as f:
            yield f
        Path(tmp_path).replace(filepath)
    except BaseException:
        with suppress(OSError):
            Path(tmp_path).unlink()
        raise


def format_cell(value: Any) -> str:
    """Render one CSV cell; floats with 17 significant digits, None as empty."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return format(value, FLOAT_FORMAT)
    return str(value)


def output_json(report: Any) -> str:
    """Convert a report (object with to_dict()) to indented JSON.

    Raises:
        NumericError: If the report holds NaN or infinite values
    """
    try:
        return json.dumps(report.to_dict(), indent=2, allow_nan=False)
    except ValueError as e:
        raise NumericError(f"report contains non-finite values: {e}") from e


def write_json(path: Path, report: Any) -> None:
    """Write a report as JSON atomically."""
    text = output_json(report)
    with atomic_write(path) as f:
        f.write(text)
        f.write("\n")


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    """Write a CSV table atomically."""
    with atomic_write(path) as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_cell(cell) for cell in row])


def write_text(path: Path, text: str) -> None:
    """Write a text file atomically."""
    with atomic_write(path) as f:
        f.write(text)
