"""Synthetic task families in the 4-feature deposition space.

Nothing here is measured data. The generators give tasks that share a
process-to-geometry shape while differing in scale and offset, which is the
setting meta-learning is meant for.
"""

from __future__ import annotations

import numpy as np

from .gpr import fit_gpr_grid, synthesize_task
from .tasks import NormalizationBounds, TaskDataset, inverse_transform_target, normalize_features, transform_target

FEED_RANGES = {"powder": (4.0, 20.0), "wire": (1.5, 8.0)}


def _process_inputs(rng, n, feedstock):
    power = rng.uniform(600.0, 2600.0, n)
    speed = rng.uniform(300.0, 1500.0, n)
    powder = np.zeros(n)
    wire = np.zeros(n)
    if feedstock in ("powder", "wire_powder"):
        powder = rng.uniform(*FEED_RANGES["powder"], n)
    if feedstock in ("wire", "wire_powder"):
        wire = rng.uniform(*FEED_RANGES["wire"], n)
    return np.column_stack([power, speed, powder, wire])


def _height_law(X, gain, power_exp, offset):
    """Mass-balance flavoured bead height in mm."""
    feed = X[:, 2] + 2.0 * X[:, 3]
    deposit = np.sqrt(feed / X[:, 1] * 60.0)
    return gain * deposit * (X[:, 0] / 1500.0) ** power_exp + offset


def heterogeneous_family(n_tasks: int = 9, seed: int = 0, n_range=(20, 36), noise_mm: float = 0.02):
    """Tasks with a shared height law but task-specific gain, exponent and offset."""
    rng = np.random.default_rng(seed)
    kinds = ("powder", "wire", "wire_powder")
    tasks = []
    for i in range(n_tasks):
        feedstock = kinds[i % 3]
        n = int(rng.integers(n_range[0], n_range[1] + 1))
        X = _process_inputs(rng, n, feedstock)
        gain = rng.uniform(0.25, 0.9)
        power_exp = rng.uniform(0.2, 0.8)
        offset = rng.uniform(0.0, 0.4)
        h = _height_law(X, gain, power_exp, offset) + rng.normal(0.0, noise_mm, n)
        tasks.append(TaskDataset(f"hetero-{seed}-{i}", feedstock, X, np.maximum(h, 0.0),
                                 meta={"gain": gain, "power_exp": power_exp, "offset": offset}))
    return tasks


def geometry_seed_dataset(n: int = 30, seed: int = 0, noise: float = 0.01) -> TaskDataset:
    """A small powder-fed experiment with width, height and depth targets (mm)."""
    rng = np.random.default_rng(seed)
    X = _process_inputs(rng, n, "powder")
    p = X[:, 0] / 1500.0
    v = X[:, 1] / 1000.0
    f = X[:, 2] / 10.0
    width = 1.2 * p ** 0.6 / v ** 0.25 + 0.3
    height = 0.55 * f ** 0.8 / v ** 0.7 * p ** 0.2
    depth = 0.35 * p ** 1.1 / v ** 0.4
    Y = np.column_stack([width, height, depth]) * (1.0 + rng.normal(0.0, noise, (n, 3)))
    return TaskDataset(f"geometry-seed-{seed}", "powder", X, Y)


def gpr_task_family(seed_task: TaskDataset, n_tasks: int, n_points: int, bounds=NormalizationBounds(),
                    additive_std: float = 0.02, multiplicative_std: float = 0.05, seed: int = 0,
                    prefix: str = "synth"):
    """Fit one GP per target column and draw related tasks from it.

    The GP lives in normalized-feature, ``log1p``-target space; returned
    tasks are mapped back to raw units. Inputs are drawn from the bounding
    box of the seed data.
    """
    Xn = normalize_features(seed_task.features, bounds)
    Yt = transform_target(seed_task.target_matrix)
    models = [fit_gpr_grid(Xn, Yt[:, j]) for j in range(Yt.shape[1])]
    box = np.column_stack([Xn.min(axis=0), Xn.max(axis=0)])
    single = seed_task.targets.ndim == 1
    children = np.random.SeedSequence([int(seed), 0x5EED]).spawn(n_tasks)
    tasks = []
    for i, child in enumerate(children):
        t = synthesize_task(models, n_points, box, additive_std, multiplicative_std, rng_seed=child)
        y_mm = np.maximum(inverse_transform_target(t.targets), 0.0)
        tasks.append(TaskDataset(f"{prefix}-{i:04d}", "synthetic", t.features * bounds.as_array(),
                                 y_mm[:, 0] if single else y_mm, meta=t.meta))
    return tasks, models
