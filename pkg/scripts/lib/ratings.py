"""Ratings data to bandit features.

Pipeline used by the prep command:

    ingest_ratings    CSV with header user,item,rating -> dense-indexed RatingsTable
    subset_ratings    keep selected items and the first n users
    normalize_ratings affine map of the observed range onto [lo, hi]
    factorize         ALS on observed entries, then bound fitting and validation
    export_features   .npz container with a TOML header

User factors become contexts and item factors become arm coefficients.
"""

import csv
import io
import math
import zipfile
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import tomlkit
import tomlkit.exceptions
from numpy.typing import NDArray

from .environment import check_assumptions, fit_to_bounds
from .errors import AssumptionViolated, ConfigError, DataError, FeatureFileError, NumericError
from .logging import info, warn
from .output import atomic_write
from .params import DEFAULT_L, DEFAULT_S
from .report_base import plain

FEATURE_FORMAT_VERSION = 1
RATINGS_HEADER = ("user", "item", "rating")
MAX_REPORTED_ROW_ERRORS = 20
GRAM_CHUNK = 200_000


@dataclass(frozen=True)
class RatingsTable:
    """Observed (user, item, rating) triples with dense 0-based indices.

    user_ids and item_ids map dense indices back to the ids in the input file.
    """

    users: NDArray[np.int64]
    items: NDArray[np.int64]
    ratings: NDArray[np.float64]
    user_ids: list[str]
    item_ids: list[str]
    normalization: dict[str, float] | None = None

    @property
    def n_users(self) -> int:
        return len(self.user_ids)

    @property
    def n_items(self) -> int:
        return len(self.item_ids)

    def __len__(self) -> int:
        return len(self.ratings)


def _dense_table(
    triples: dict[tuple[str, str], float], normalization: dict[str, float] | None = None
) -> RatingsTable:
    user_index: dict[str, int] = {}
    item_index: dict[str, int] = {}
    users, items, ratings = [], [], []
    for (user, item), rating in triples.items():
        users.append(user_index.setdefault(user, len(user_index)))
        items.append(item_index.setdefault(item, len(item_index)))
        ratings.append(rating)
    return RatingsTable(
        users=np.array(users, dtype=np.int64),
        items=np.array(items, dtype=np.int64),
        ratings=np.array(ratings, dtype=np.float64),
        user_ids=list(user_index),
        item_ids=list(item_index),
        normalization=normalization,
    )


def ingest_ratings(path: Path) -> RatingsTable:
    """Read a ratings CSV (header user,item,rating).

    Ids are remapped to dense indices in order of first appearance. A repeated
    (user, item) pair keeps the last rating.

    Raises:
        DataError: Missing/empty file, wrong header, or malformed rows (with line numbers)
    """
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read ratings file {path}: {e}") from e

    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header is None:
        raise DataError(f"ratings file {path} is empty")
    if tuple(h.strip().lower() for h in header) != RATINGS_HEADER:
        raise DataError(f"{path}: header must be user,item,rating (got {','.join(header)})")

    triples: dict[tuple[str, str], float] = {}
    problems: list[str] = []
    duplicates = 0
    for row in reader:
        line = reader.line_num
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != 3:
            problems.append(f"line {line}: expected 3 fields, got {len(row)}")
            continue
        user, item, raw = (cell.strip() for cell in row)
        try:
            rating = float(raw)
        except ValueError:
            problems.append(f"line {line}: rating {raw!r} is not a number")
            continue
        if not math.isfinite(rating):
            problems.append(f"line {line}: rating {raw!r} is not finite")
            continue
        if not user or not item:
            problems.append(f"line {line}: empty user or item id")
            continue
        if (user, item) in triples:
            duplicates += 1
        triples[(user, item)] = rating

    if problems:
        shown = "; ".join(problems[:MAX_REPORTED_ROW_ERRORS])
        more = len(problems) - MAX_REPORTED_ROW_ERRORS
        suffix = f" (and {more} more)" if more > 0 else ""
        raise DataError(f"{path}: malformed rows: {shown}{suffix}")
    if not triples:
        raise DataError(f"ratings file {path} has no rating rows")

    table = _dense_table(triples)
    if duplicates:
        warn(f"{duplicates} duplicate (user, item) pairs; kept the last rating of each")
    info(f"Ingested {len(table)} ratings: {table.n_users} users x {table.n_items} items")
    return table


def subset_ratings(
    table: RatingsTable,
    item_ids: list[str] | None = None,
    n_users: int | None = None,
) -> RatingsTable:
    """Keep the listed items (by original id) and then the first n_users users.

    Users without a rating of a kept item are dropped; indices are re-densified.

    Raises:
        DataError: Unknown item id, or nothing left after subsetting
    """
    keep = np.ones(len(table), dtype=bool)
    if item_ids is not None:
        known = {item: k for k, item in enumerate(table.item_ids)}
        missing = [item for item in item_ids if item not in known]
        if missing:
            raise DataError(f"unknown item ids: {', '.join(missing)}")
        keep &= np.isin(table.items, [known[item] for item in item_ids])

    triples: dict[tuple[str, str], float] = {}
    kept_users: set[int] = set()
    for u, i, r in zip(table.users[keep], table.items[keep], table.ratings[keep], strict=True):
        if n_users is not None and u not in kept_users and len(kept_users) >= n_users:
            continue
        kept_users.add(int(u))
        triples[(table.user_ids[u], table.item_ids[i])] = float(r)
    if not triples:
        raise DataError("no ratings left after subsetting")
    return _dense_table(triples, table.normalization)


def normalize_ratings(table: RatingsTable, lo: float = 0.0, hi: float = 1.0) -> RatingsTable:
    """Map [observed min, observed max] affinely onto [lo, hi].

    Raises:
        ConfigError: If hi <= lo
        DataError: If the table is empty or all ratings are equal
    """
    if not hi > lo:
        raise ConfigError(f"normalization range needs hi > lo (got [{lo}, {hi}])")
    if len(table) == 0:
        raise DataError("cannot normalize an empty ratings table")
    observed_min = float(table.ratings.min())
    observed_max = float(table.ratings.max())
    if observed_max == observed_min:
        raise DataError(f"all ratings equal {observed_min}; normalization range is zero")

    scale = (hi - lo) / (observed_max - observed_min)
    normalized = lo + (table.ratings - observed_min) * scale
    return replace(
        table,
        ratings=normalized,
        normalization={
            "lo": lo,
            "hi": hi,
            "observed_min": observed_min,
            "observed_max": observed_max,
            "scale": scale,
        },
    )


@dataclass(frozen=True)
class FeatureFile:
    """Contexts (user rows) and arm coefficients (item rows) plus how they were made."""

    users: NDArray[np.float64]
    items: NDArray[np.float64]
    metadata: dict[str, Any] = field(default_factory=dict)
    version: int = FEATURE_FORMAT_VERSION

    @property
    def d(self) -> int:
        return int(self.users.shape[1])

    @property
    def n_users(self) -> int:
        return int(self.users.shape[0])

    @property
    def n_items(self) -> int:
        return int(self.items.shape[0])


def _solve_side(
    rows: NDArray[np.int64],
    cols: NDArray[np.int64],
    ratings: NDArray[np.float64],
    fixed: NDArray[np.float64],
    n_rows: int,
    reg: float,
) -> NDArray[np.float64]:
    """Ridge solve for every row factor given the other side's factors."""
    d = fixed.shape[1]
    gram = np.broadcast_to(reg * np.eye(d), (n_rows, d, d)).copy()
    rhs = np.zeros((n_rows, d))
    for start in range(0, len(ratings), GRAM_CHUNK):
        chunk = slice(start, start + GRAM_CHUNK)
        v = fixed[cols[chunk]]
        np.add.at(gram, rows[chunk], v[:, :, None] * v[:, None, :])
        np.add.at(rhs, rows[chunk], ratings[chunk, None] * v)
    solved: NDArray[np.float64] = np.linalg.solve(gram, rhs[..., None])[..., 0]
    return solved


def _objective(
    table: RatingsTable, u: NDArray[np.float64], v: NDArray[np.float64], reg: float
) -> tuple[float, float]:
    residual = table.ratings - np.einsum("nd,nd->n", u[table.users], v[table.items])
    sse = float(residual @ residual)
    penalty = reg * float((u * u).sum() + (v * v).sum())
    return sse + penalty, math.sqrt(sse / len(residual))


def als(
    table: RatingsTable, d: int, reg: float, iterations: int, seed: int
) -> tuple[NDArray[np.float64], NDArray[np.float64], list[float], float]:
    """Alternating least squares on the observed entries.

    Minimizes sum (r_ui - <u_u, v_i>)^2 + reg (sum ||u||^2 + sum ||v||^2),
    starting from uniform(0, 1)/sqrt(d) factors. Each sweep solves all user
    factors, then all item factors.

    Returns:
        Tuple of (user factors, item factors, objective after each sweep, final RMSE)

    Raises:
        ConfigError: Invalid d, reg or iterations
        NumericError: Non-finite or increasing objective
    """
    if d < 1:
        raise ConfigError(f"factor rank d must be >= 1 (got {d})")
    if not reg > 0:
        raise ConfigError(f"regularization must be > 0 (got {reg})")
    if iterations < 1:
        raise ConfigError(f"iterations must be >= 1 (got {iterations})")
    if len(table) == 0:
        raise DataError("cannot factorize an empty ratings table")

    rng = np.random.default_rng(seed)
    u = rng.uniform(0.0, 1.0, (table.n_users, d)) / math.sqrt(d)
    v = rng.uniform(0.0, 1.0, (table.n_items, d)) / math.sqrt(d)

    history: list[float] = []
    rmse = math.inf
    for sweep in range(1, iterations + 1):
        u = _solve_side(table.users, table.items, table.ratings, v, table.n_users, reg)
        v = _solve_side(table.items, table.users, table.ratings, u, table.n_items, reg)
        objective, rmse = _objective(table, u, v, reg)
        if not math.isfinite(objective):
            raise NumericError(f"ALS objective is not finite after sweep {sweep}")
        if history and objective > history[-1] + 1e-9 * max(1.0, history[-1]):
            raise NumericError(
                f"ALS objective increased at sweep {sweep}: {history[-1]:.17g} -> {objective:.17g}"
            )
        history.append(objective)
    return u, v, history, rmse


def factorize(
    table: RatingsTable,
    d: int,
    reg: float,
    iterations: int,
    seed: int,
    L: float = DEFAULT_L,
    S: float = DEFAULT_S,
    target: int | None = None,
    augment: bool = True,
    drop_violating_users: bool = False,
) -> FeatureFile:
    """Factorize ratings into user contexts and item coefficients ready for an environment.

    After ALS the factors are passed through fit_to_bounds (constant-feature
    augmentation if some mean is not positive, then shrinking to L and S) and
    validated: every mean positive and the target item never the worst for
    any user.

    Args:
        table: Ratings (usually normalized)
        d: Factor rank
        reg: ALS regularization
        iterations: Number of ALS sweeps
        seed: Seed of the factor initialization
        L: Context norm bound
        S: Coefficient norm bound
        target: Target item index (default: last item)
        augment: Allow constant-feature augmentation
        drop_violating_users: Drop users whose worst item is the target instead of failing

    Raises:
        AssumptionViolated: If validation fails (names the offending user)
    """
    target = table.n_items - 1 if target is None else target
    if not 0 <= target < table.n_items:
        raise ConfigError(f"target item {target} out of range for {table.n_items} items")

    users, items, history, rmse = als(table, d, reg, iterations, seed)
    info(f"ALS: {iterations} sweeps, objective {history[-1]:.6g}, RMSE {rmse:.6g}")
    contexts, coefficients, bounds = fit_to_bounds(users, items, L, S, augment=augment)

    means = contexts @ coefficients.T
    user_ids = list(table.user_ids)
    dropped = 0
    if drop_violating_users:
        keep = means[:, target] > means.min(axis=1)
        dropped = int((~keep).sum())
        if dropped:
            warn(f"Dropped {dropped} users whose worst item is the target")
            contexts, means = contexts[keep], means[keep]
            user_ids = [uid for uid, k in zip(user_ids, keep, strict=True) if k]
        if not len(contexts):
            raise AssumptionViolated("every user has the target item as the worst item")
    try:
        check_assumptions(contexts, coefficients, target)
    except AssumptionViolated as e:
        row = e.context_index
        who = f"user {user_ids[row]!r} (row {row})" if row is not None else "a user"
        raise AssumptionViolated(f"{who}: {e}", context_index=row) from e

    ratios = means.min(axis=1) / means[:, target]
    metadata: dict[str, Any] = {
        "item_ids": list(table.item_ids),
        "factorization": {
            "d": d,
            "reg": reg,
            "iterations": iterations,
            "seed": seed,
            "objective": history,
            "rmse": rmse,
        },
        "bounds": {"L": L, "S": S, **bounds},
        "validation": {
            "target": target,
            "min_mean": float(means.min()),
            "min_target_mean": float(means[:, target].min()),
            "alpha": (1.0 - float(ratios.max())) / 2.0,
            "dropped_users": dropped,
        },
    }
    if table.normalization is not None:
        metadata["normalization"] = dict(table.normalization)
    return FeatureFile(users=contexts, items=coefficients, metadata=metadata)


def _toml_ready(value: Any) -> Any:
    """Drop None entries (TOML has no null) and convert numpy values."""
    value = plain(value)
    if isinstance(value, dict):
        return {k: _toml_ready(v) for k, v in value.items() if v is not None}
    if isinstance(value, list):
        return [_toml_ready(v) for v in value]
    return value


def export_features(features: FeatureFile, path: Path) -> None:
    """Write a feature file: .npz with arrays users, items and a TOML header string."""
    header = tomlkit.dumps(
        {
            "version": features.version,
            "d": features.d,
            "n_users": features.n_users,
            "n_items": features.n_items,
            "metadata": _toml_ready(features.metadata),
        }
    )
    buffer = io.BytesIO()
    np.savez(
        buffer,
        header=np.array(header),
        users=np.ascontiguousarray(features.users, dtype=np.float64),
        items=np.ascontiguousarray(features.items, dtype=np.float64),
    )
    with atomic_write(path, binary=True) as f:
        f.write(buffer.getvalue())


def load_features(path: Path, expected_d: int | None = None) -> FeatureFile:
    """Read a feature file written by export_features.

    Raises:
        FeatureFileError: Missing, truncated or corrupt file; version or shape
            mismatch; d different from expected_d
    """
    if not path.is_file():
        raise FeatureFileError(f"feature file not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as data:
            header_text = str(data["header"][()])
            users = np.array(data["users"], dtype=np.float64)
            items = np.array(data["items"], dtype=np.float64)
    except (OSError, ValueError, KeyError, EOFError, zipfile.BadZipFile) as e:
        raise FeatureFileError(f"corrupt or truncated feature file {path}: {e}") from e

    try:
        header = tomlkit.loads(header_text).unwrap()
    except tomlkit.exceptions.ParseError as e:
        raise FeatureFileError(f"unreadable header in {path}: {e}") from e

    version = header.get("version")
    if version != FEATURE_FORMAT_VERSION:
        raise FeatureFileError(
            f"{path}: feature format version {version} (expected {FEATURE_FORMAT_VERSION})"
        )
    d = header.get("d")
    if users.ndim != 2 or items.ndim != 2:
        raise FeatureFileError(f"{path}: feature matrices must be 2-dimensional")
    if (users.shape[1], items.shape[1]) != (d, d):
        raise FeatureFileError(f"{path}: header says d={d}, matrices have {users.shape[1]}")
    if (header.get("n_users"), header.get("n_items")) != (len(users), len(items)):
        raise FeatureFileError(f"{path}: row counts disagree with the header")
    if expected_d is not None and d != expected_d:
        raise FeatureFileError(f"{path}: d={d} but the config expects d={expected_d}")
    if not (np.isfinite(users).all() and np.isfinite(items).all()):
        raise FeatureFileError(f"{path}: feature matrices contain non-finite values")
    return FeatureFile(
        users=users, items=items, metadata=dict(header.get("metadata", {})), version=version
    )
