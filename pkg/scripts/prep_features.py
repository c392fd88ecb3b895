#!/usr/bin/env python3
"""Turn a ratings CSV into a bandit feature file.

Usage:
    ./scripts/prep_features.py ratings.csv --out data/jester.npz --d 6 --reg 0.1
    ./scripts/prep_features.py ratings.csv --out data/ml.npz --items 1,2,3 --users 1000

The ratings file needs the header user,item,rating. Ratings are normalized to
[--lo, --hi], factorized with ALS, fitted to the norm bounds and validated:
every mean must be positive and the target item must never be a user's
worst item. Validation statistics are printed on stdout.
"""

import argparse
import sys
from pathlib import Path

# Add scripts directory to path so we can import lib
sys.path.insert(0, str(Path(__file__).parent))

from lib.base_command import LabCommand
from lib.errors import EXIT_OK
from lib.logging import success
from lib.params import DEFAULT_L, DEFAULT_S
from lib.ratings import (
    export_features,
    factorize,
    ingest_ratings,
    normalize_ratings,
    subset_ratings,
)


class PrepCommand(LabCommand):
    """Ratings CSV -> feature file."""

    def __init__(self) -> None:
        super().__init__(
            name="prep",
            description="Factorize a ratings CSV into user contexts and item coefficients",
        )

    def add_arguments(self, parser: argparse.ArgumentParser) -> None:
        parser.add_argument("ratings", type=Path, help="CSV with header user,item,rating")
        parser.add_argument("--out", type=Path, required=True, help="Feature file to write")
        parser.add_argument("--d", type=int, default=6, help="Factor rank (default: 6)")
        parser.add_argument("--reg", type=float, default=0.1, help="ALS regularization")
        parser.add_argument("--iters", type=int, default=20, help="ALS sweeps (default: 20)")
        parser.add_argument("--seed", type=int, default=0, help="Initialization seed")
        parser.add_argument("--items", help="Comma-separated item ids to keep (default: all)")
        parser.add_argument("--users", type=int, help="Keep only the first N users")
        parser.add_argument("--target", type=int, help="Target item index (default: last item)")
        parser.add_argument("--lo", type=float, default=0.0, help="Normalized rating minimum")
        parser.add_argument("--hi", type=float, default=1.0, help="Normalized rating maximum")
        parser.add_argument("--L", type=float, default=DEFAULT_L, help="Context norm bound")
        parser.add_argument("--S", type=float, default=DEFAULT_S, help="Coefficient norm bound")
        parser.add_argument(
            "--no-augment",
            action="store_true",
            help="Fail instead of appending a constant feature when a mean is not positive",
        )
        parser.add_argument(
            "--drop-violators",
            action="store_true",
            help="Drop users whose worst item is the target instead of failing",
        )

    def execute(self, args: argparse.Namespace) -> int:
        table = ingest_ratings(args.ratings)
        if args.items is not None or args.users is not None:
            items = [item.strip() for item in args.items.split(",")] if args.items else None
            table = subset_ratings(table, item_ids=items, n_users=args.users)
        table = normalize_ratings(table, args.lo, args.hi)
        features = factorize(
            table,
            d=args.d,
            reg=args.reg,
            iterations=args.iters,
            seed=args.seed,
            L=args.L,
            S=args.S,
            target=args.target,
            augment=not args.no_augment,
            drop_violating_users=args.drop_violators,
        )
        export_features(features, args.out)

        validation = features.metadata["validation"]
        print(f"users: {features.n_users}")
        print(f"items: {features.n_items}")
        print(f"d: {features.d}")
        print(f"min mean reward: {validation['min_mean']:.17g}")
        print(f"min target mean: {validation['min_target_mean']:.17g}")
        print(f"alpha: {validation['alpha']:.17g}")
        success(f"Wrote {args.out}")
        return EXIT_OK


if __name__ == "__main__":
    sys.exit(PrepCommand().run())
