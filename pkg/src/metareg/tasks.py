"""Task construction: CSV ingestion, preprocessing, splitting and generators."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, ShapeError

FEATURE_COLUMNS = ("power_w", "speed_mm_min", "powder_g_min", "wire_g_min")
REQUIRED_COLUMNS = ("power_w", "speed_mm_min", "height_mm")
OPTIONAL_COLUMNS = ("powder_g_min", "wire_g_min")
TARGET_COLUMN = "height_mm"
FEEDSTOCKS = ("powder", "wire", "wire_powder", "synthetic")

# laser power W, scan speed mm/min, powder feed g/min, wire feed g/min
DEFAULT_BOUNDS = (3000.0, 2000.0, 25.0, 10.0)


@dataclass(frozen=True)
class NormalizationBounds:
    """Per-feature maxima; minima are fixed at zero."""

    maxima: tuple[float, ...] = DEFAULT_BOUNDS

    def __post_init__(self):
        maxima = tuple(float(m) for m in self.maxima)
        if not maxima or any(not (m > 0) or not math.isfinite(m) for m in maxima):
            raise ConfigError(f"normalization maxima must be positive and finite, got {maxima}")
        object.__setattr__(self, "maxima", maxima)

    @property
    def dim(self) -> int:
        return len(self.maxima)

    def as_array(self) -> np.ndarray:
        return np.array(self.maxima)


@dataclass(frozen=True, eq=False)
class TaskDataset:
    """One regression task: raw features ``(n, d)`` and targets ``(n,)`` or ``(n, k)``."""

    task_id: str
    feedstock: str
    features: np.ndarray
    targets: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.feedstock not in FEEDSTOCKS:
            raise ConfigError(f"unknown feedstock {self.feedstock!r}")
        X = np.array(self.features, dtype=np.float64)
        y = np.array(self.targets, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, 1)
        if X.ndim != 2 or y.ndim not in (1, 2) or X.shape[0] != y.shape[0]:
            raise ShapeError(f"features {X.shape} and targets {y.shape} do not describe the same rows")
        if X.shape[0] < 1:
            raise DataError(f"task {self.task_id!r} has no samples")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise DataError(f"task {self.task_id!r} contains non-finite values")
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "targets", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def target_matrix(self) -> np.ndarray:
        return self.targets.reshape(self.n, -1)


@dataclass(frozen=True)
class SupportQuerySplit:
    support_indices: np.ndarray
    query_indices: np.ndarray


def normalize_features(raw, bounds: NormalizationBounds = NormalizationBounds()) -> np.ndarray:
    """Scale raw features by the fixed maxima. Accepts one row or a matrix."""
    raw = np.asarray(raw, dtype=np.float64)
    maxima = bounds.as_array()
    if raw.shape[-1] != maxima.shape[0]:
        raise ShapeError(f"expected {maxima.shape[0]} features, got {raw.shape[-1]}")
    bad = (raw < 0) | (raw > maxima) | ~np.isfinite(raw)
    if np.any(bad):
        idx = np.argwhere(bad)[0]
        col = int(idx[-1])
        row = int(idx[0]) + 1 if raw.ndim == 2 else None
        raise DataError(
            f"feature {col} value {raw[tuple(idx)]!r} outside [0, {maxima[col]}]"
            + (f" in row {row}" if row is not None else ""),
            row=row,
            column=col,
        )
    return raw / maxima


def denormalize_features(x, bounds: NormalizationBounds = NormalizationBounds()) -> np.ndarray:
    return np.asarray(x, dtype=np.float64) * bounds.as_array()


def transform_target(height_mm):
    """Natural ``log(1 + h)``; works on scalars and arrays."""
    h = np.asarray(height_mm, dtype=np.float64)
    if np.any(h <= -1) or not np.all(np.isfinite(h)):
        raise DataError("target transform requires finite heights above -1")
    out = np.log1p(h)
    return float(out) if out.ndim == 0 else out


def inverse_transform_target(y):
    out = np.expm1(np.asarray(y, dtype=np.float64))
    return float(out) if out.ndim == 0 else out


TRANSFORMS = {
    "log1p": (transform_target, inverse_transform_target),
    "none": (lambda y: np.asarray(y, dtype=np.float64), lambda y: np.asarray(y, dtype=np.float64)),
}


def load_task_csv(path, bounds: NormalizationBounds = NormalizationBounds(), task_id=None,
                  feedstock: str | None = None) -> TaskDataset:
    """Read one task file; absent feed-rate columns are filled with zeros.

    Row numbers in errors count data rows from 1 (the header is not counted).
    With ``feedstock=None`` the form is inferred from which feed rates are
    non-zero.
    """
    path = Path(path)
    task_id = task_id if task_id is not None else path.stem
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        for col in REQUIRED_COLUMNS:
            if col not in header:
                raise DataError(f"{path}: missing required column {col!r}", column=col)
        rows = []
        targets = []
        for lineno, record in enumerate(reader, start=1):
            record = {k.strip(): v for k, v in record.items() if k is not None}
            values = []
            for col in (*FEATURE_COLUMNS, TARGET_COLUMN):
                cell = record.get(col)
                if col in OPTIONAL_COLUMNS and col not in header:
                    values.append(0.0)
                    continue
                try:
                    val = float(cell)
                except (TypeError, ValueError):
                    raise DataError(f"{path}: row {lineno}: non-numeric {col} value {cell!r}",
                                    row=lineno, column=col) from None
                if not math.isfinite(val):
                    raise DataError(f"{path}: row {lineno}: non-finite {col}", row=lineno, column=col)
                values.append(val)
            height = values.pop()
            if height < 0:
                raise DataError(f"{path}: row {lineno}: negative height_mm {height}", row=lineno,
                                column=TARGET_COLUMN)
            for j, (val, hi) in enumerate(zip(values, bounds.maxima)):
                if val < 0 or val > hi:
                    raise DataError(
                        f"{path}: row {lineno}: {FEATURE_COLUMNS[j]}={val} outside [0, {hi}]",
                        row=lineno, column=FEATURE_COLUMNS[j])
            rows.append(values)
            targets.append(height)
    if not rows:
        raise DataError(f"{path}: no data rows")
    X = np.array(rows)
    if feedstock is None:
        powder, wire = bool(np.any(X[:, 2] > 0)), bool(np.any(X[:, 3] > 0))
        feedstock = "wire_powder" if powder and wire else "wire" if wire else "powder"
    return TaskDataset(task_id, feedstock, X, np.array(targets))


def write_task_csv(task: TaskDataset, path) -> None:
    """Write a 4-feature, single-target task in the ingestion schema."""
    if task.features.shape[1] != len(FEATURE_COLUMNS) or task.target_matrix.shape[1] != 1:
        raise ShapeError("only 4-feature single-target tasks can be written as task CSVs")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([*FEATURE_COLUMNS, TARGET_COLUMN])
        for x, y in zip(task.features, task.target_matrix[:, 0]):
            w.writerow([repr(float(v)) for v in x] + [repr(float(y))])


def support_size(n: int, fraction: float) -> int:
    """Nearest integer to ``fraction * n``, ties rounded up."""
    return int(math.floor(fraction * n + 0.5))


def split_support_query(n: int, fraction: float, seed) -> SupportQuerySplit:
    if not 0 < fraction < 1:
        raise ConfigError(f"support fraction must lie in (0, 1), got {fraction}")
    if n < 2:
        raise DataError(f"cannot split a task with {n} sample(s)")
    k = support_size(n, fraction)
    if k < 1 or k > n - 1:
        raise DataError(f"fraction {fraction} of {n} samples leaves an empty support or query set")
    perm = np.random.default_rng(seed).permutation(n)
    return SupportQuerySplit(np.sort(perm[:k]), np.sort(perm[k:]))


def sample_sinusoid_task(rng_seed, n_points: int, amplitude=None, phase=None,
                         x_range=(-5.0, 5.0)) -> TaskDataset:
    """``y = A sin(x + phi)`` with ``A ~ U[0.1, 5]``, ``phi ~ U[0, pi]``, ``x ~ U[-5, 5]``."""
    if n_points < 2:
        raise ConfigError("a sinusoid task needs at least two points")
    rng = np.random.default_rng(rng_seed)
    A = rng.uniform(0.1, 5.0)
    phi = rng.uniform(0.0, math.pi)
    if amplitude is not None:
        A = float(amplitude)
    if phase is not None:
        phi = float(phase)
    x = rng.uniform(x_range[0], x_range[1], size=n_points)
    return TaskDataset(
        f"sinusoid-{rng_seed}",
        "synthetic",
        x.reshape(-1, 1),
        A * np.sin(x + phi),
        meta={"amplitude": A, "phase": phi},
    )


def assign_cv_folds(task_ids, n_folds: int = 5, n_val: int = 2, seed=0):
    """Hold out ``n_val`` tasks per fold, returning ``[(train_ids, val_ids), ...]``.

    Tasks are shuffled once and validation groups are consecutive windows of
    the shuffled order, so groups are disjoint whenever
    ``n_folds * n_val <= len(task_ids)`` and wrap around otherwise.
    """
    ids = list(task_ids)
    if n_folds < 1:
        raise ConfigError("n_folds must be positive")
    if n_val < 1 or n_val >= len(ids):
        raise ConfigError(f"need more than {n_val} tasks to hold out {n_val} for validation, got {len(ids)}")
    perm = np.random.default_rng(seed).permutation(len(ids))
    folds = []
    for fold in range(n_folds):
        chosen = {int(perm[(fold * n_val + j) % len(ids)]) for j in range(n_val)}
        val = [t for i, t in enumerate(ids) if i in chosen]
        train = [t for i, t in enumerate(ids) if i not in chosen]
        folds.append((train, val))
    return folds


def resample_seeds(base_seed: int, count: int):
    """Seeds for repeated support draws, one per shuffle index."""
    return [np.random.SeedSequence([int(base_seed), i]) for i in range(count)]


def prepare_task(task: TaskDataset, bounds: NormalizationBounds | None, transform: str = "log1p"):
    """Model-space arrays ``(X, Y)`` for a task; ``bounds=None`` skips scaling."""
    if transform not in TRANSFORMS:
        raise ConfigError(f"unknown target transform {transform!r}")
    X = task.features if bounds is None else normalize_features(task.features, bounds)
    Y = TRANSFORMS[transform][0](task.target_matrix)
    return np.asarray(X, dtype=np.float64), np.asarray(Y, dtype=np.float64)
