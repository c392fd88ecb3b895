"""Shared logging utilities for the simulator and its command-line tools.

Colored, human-facing messages go to stderr. Set NO_COLOR to drop the ANSI
codes and POISONLAB_VERBOSE=1 to see debug lines. fail_line() emits the
single machine-readable error record the CLI promises on failure.
"""

import json
import os
import sys

# Color codes for stderr logging
GREEN = "\033[0;32m"
YELLOW = "\033[1;33m"
RED = "\033[0;31m"
BLUE = "\033[0;34m"
GRAY = "\033[0;90m"
NC = "\033[0m"  # No Color


def _paint(color: str, text: str) -> str:
    if os.environ.get("NO_COLOR") or not sys.stderr.isatty():
        return text
    return f"{color}{text}{NC}"


def verbose_enabled() -> bool:
    """Return True when POISONLAB_VERBOSE asks for debug output."""
    return os.environ.get("POISONLAB_VERBOSE", "") not in ("", "0")


def debug(msg: str) -> None:
    """Log debug message to stderr (only when verbose)."""
    if verbose_enabled():
        print(f"{_paint(GRAY, '[DEBUG]')} {msg}", file=sys.stderr)


def info(msg: str) -> None:
    """Log info message to stderr."""
    print(f"{_paint(GREEN, '[INFO]')} {msg}", file=sys.stderr)


def warn(msg: str) -> None:
    """Log warning message to stderr."""
    print(f"{_paint(YELLOW, '[WARN]')} {msg}", file=sys.stderr)


def error(msg: str) -> None:
    """Log error message to stderr."""
    print(f"{_paint(RED, '[ERROR]')} {msg}", file=sys.stderr)


def success(msg: str) -> None:
    """Log success message to stderr."""
    print(f"{_paint(GREEN, '[OK]')} {msg}", file=sys.stderr)


def section(msg: str) -> None:
    """Log section header to stderr."""
    print(f"\n{_paint(BLUE, f'=== {msg} ===')}", file=sys.stderr)


def fail_line(kind: str, exit_code: int, message: str) -> None:
    """Write one JSON error record to stderr (never colored, always one line)."""
    record = {"error": kind, "exit_code": exit_code, "message": " ".join(message.split())}
    print(json.dumps(record, sort_keys=True), file=sys.stderr)
