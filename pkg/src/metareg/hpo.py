"""Random-search hyperparameter tuning scored by task-level cross-validation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, MetaRegError
from .evaluation import evaluate_target
from .meta import MetaConfig, meta_train
from .tasks import NormalizationBounds, assign_cv_folds

TUNED_FIELDS = ("inner_lr", "outer_lr", "batch_size", "inner_steps")


@dataclass(frozen=True)
class SearchSpace:
    inner_lr: tuple[float, float] = (0.01, 1.0)
    outer_lr: tuple[float, float] = (2e-4, 2e-2)
    batch_size: tuple[int, ...] = (2, 4, 6)
    inner_steps: tuple[int, ...] = (1, 3, 5)

    def __post_init__(self):
        for name in ("inner_lr", "outer_lr"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ConfigError(f"{name} range must satisfy 0 < low <= high, got {(lo, hi)}")
        for name in ("batch_size", "inner_steps"):
            choices = getattr(self, name)
            if not choices or any(int(c) != c or c < 1 for c in choices):
                raise ConfigError(f"{name} choices must be a non-empty set of positive integers")

    def sample(self, rng) -> dict:
        def log_uniform(lo, hi):
            return float(math.exp(rng.uniform(math.log(lo), math.log(hi)))) if hi > lo else float(lo)

        return {
            "inner_lr": log_uniform(*self.inner_lr),
            "outer_lr": log_uniform(*self.outer_lr),
            "batch_size": int(self.batch_size[rng.integers(len(self.batch_size))]),
            "inner_steps": int(self.inner_steps[rng.integers(len(self.inner_steps))]),
        }


def cv_objective(config: MetaConfig, tasks, net, algo, folds, bounds, transform) -> float:
    """Mean post-adaptation query MSE on each fold's validation tasks."""
    by_id = {t.task_id: t for t in tasks}
    scores = []
    for fold, (train_ids, val_ids) in enumerate(folds):
        cfg = replace(config, seed=config.seed + fold)
        ckpt = meta_train([by_id[i] for i in train_ids], net, cfg, algo, bounds, transform)
        for j, vid in enumerate(val_ids):
            res = evaluate_target(ckpt, by_id[vid], fraction=cfg.support_fraction, resamples=1,
                                  steps=cfg.adaptation_steps, base_seed=cfg.seed * 7919 + j)
            scores.append(res.mean.mse_mm2)
    return float(np.mean(scores))


def random_search(space: SearchSpace, tasks, net, algo: str = "maml", n_trials: int = 50, seed: int = 0,
                  base_config: MetaConfig = MetaConfig(), n_folds: int = 5, n_val: int = 2,
                  bounds: NormalizationBounds | None = NormalizationBounds(), transform: str = "log1p"):
    """Return ``(best_config, trial_log)``; diverged trials score ``inf``.

    Trial ``i`` draws its configuration from ``SeedSequence([seed, i])`` so
    any single trial can be reproduced on its own.
    """
    if n_trials < 1:
        raise ConfigError("n_trials must be positive")
    ids = [t.task_id for t in tasks]
    if len(set(ids)) != len(ids):
        raise ConfigError("task ids must be unique")
    folds = assign_cv_folds(ids, n_folds, n_val, seed)
    smallest = min(len(train) for train, _ in folds)
    if max(space.batch_size) > smallest:
        raise ConfigError(f"batch sizes up to {max(space.batch_size)} exceed the {smallest} training tasks per fold")
    log = []
    best = None
    for trial in range(n_trials):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), trial]))
        params = space.sample(rng)
        config = replace(base_config, **params, seed=int(rng.integers(2**31)))
        try:
            objective = cv_objective(config, tasks, net, algo, folds, bounds, transform)
        except MetaRegError:
            objective = math.inf
        if not math.isfinite(objective):
            objective = math.inf
        log.append({"trial_index": trial, **params, "objective": objective})
        if best is None or objective < best[0]:
            best = (objective, config)
    return best[1], log


def write_trial_log(log, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial_index", *TUNED_FIELDS, "objective"])
        for row in log:
            w.writerow([row["trial_index"], *(repr(row[k]) for k in TUNED_FIELDS), repr(row["objective"])])
