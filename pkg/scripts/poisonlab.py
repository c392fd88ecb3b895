#!/usr/bin/env python3
"""poisonlab command-line front end.

Usage:
    ./scripts/poisonlab.py run configs/paper_synthetic.toml
    ./scripts/poisonlab.py table results/
    ./scripts/poisonlab.py prep ratings.csv --d 6 --reg 0.1 --iters 20 --out features.npz

Exit codes: 0 success, 2 config error, 3 data error, 4 numeric failure.
POISONLAB_WORKERS sets the number of trial worker processes.
"""

import sys
from pathlib import Path

# Add scripts directory to path so we can import lib
sys.path.insert(0, str(Path(__file__).parent))

from build_table import TableCommand
from lib.base_command import dispatch
from prep_features import PrepCommand
from run_experiment import RunCommand


def main(argv: list[str] | None = None) -> int:
    return dispatch([RunCommand(), TableCommand(), PrepCommand()], argv)


if __name__ == "__main__":
    sys.exit(main())
