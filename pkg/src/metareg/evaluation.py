"""Meta-testing: adaptation traces, metrics, the resampling protocol and baselines.

Metrics are always reported in physical units: model-space predictions are
mapped back through the inverse target transform before comparison.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import autodiff
from .errors import DataError, DivergenceError, ShapeError
from .meta import DIVERGENCE_LIMIT, MetaCheckpoint
from .net import AdamState, NetworkSpec, adam_step, forward, init_network, sgd_step
from .tasks import TRANSFORMS, TaskDataset, prepare_task, resample_seeds, split_support_query

METRIC_FIELDS = ("pearson_r", "r2", "mse_mm2", "mae_mm")


@dataclass(frozen=True)
class MetricsReport:
    """Scalar metrics; ``pearson_r`` and ``r2`` are None when undefined."""

    pearson_r: float | None
    r2: float | None
    mse_mm2: float
    mae_mm: float
    trace: tuple[float, ...] = ()
    n_query: int = 0

    def row(self) -> dict:
        return {k: getattr(self, k) for k in METRIC_FIELDS}


@dataclass(frozen=True)
class EvaluationResult:
    mean: MetricsReport
    shuffles: tuple[MetricsReport, ...]
    std: dict = field(default_factory=dict)


def compute_metrics(pred, true) -> MetricsReport:
    pred = np.asarray(pred, dtype=np.float64).ravel()
    true = np.asarray(true, dtype=np.float64).ravel()
    if pred.shape != true.shape:
        raise ShapeError(f"{pred.size} predictions for {true.size} targets")
    if pred.size < 2:
        raise DataError("metrics need at least two points")
    err = pred - true
    mse = float(np.mean(err * err))
    mae = float(np.mean(np.abs(err)))
    dt = true - true.mean()
    ss_tot = float(dt @ dt)
    r2 = None
    r = None
    if ss_tot > 0:
        r2 = 1.0 - float(err @ err) / ss_tot
        dp = pred - pred.mean()
        sp = float(dp @ dp)
        if sp > 0:
            r = float(np.clip((dp @ dt) / math.sqrt(sp * ss_tot), -1.0, 1.0))
    return MetricsReport(r, r2, mse, mae, (), int(pred.size))


def _to_mm(checkpoint_or_transform, Y):
    name = getattr(checkpoint_or_transform, "transform", checkpoint_or_transform)
    return np.asarray(TRANSFORMS[name][1](Y), dtype=np.float64)


def adapt_and_trace(checkpoint: MetaCheckpoint, support, query, steps: int, lr: float | None = None,
                    output: int | None = None):
    """SGD on the support loss from ``theta_o``, recording the query MSE in mm^2.

    ``support`` and ``query`` are model-space ``(X, Y)`` pairs. The trace has
    ``steps + 1`` entries, the first taken before any update. Query data is
    only ever passed through the network forward. ``output`` restricts the
    traced MSE to one output column of a multi-output network.
    """
    (Xs, Ys), (Xq, Yq) = support, query
    if len(Xs) == 0 or len(Xq) == 0:
        raise DataError("support and query sets must be non-empty")
    lr = checkpoint.config.inner_lr if lr is None else lr
    net = checkpoint.net
    cols = slice(None) if output is None else slice(output, output + 1)
    true_mm = _to_mm(checkpoint, Yq)[:, cols]

    def query_mse(theta):
        pred_mm = _to_mm(checkpoint, forward(net, theta, Xq))[:, cols]
        return float(np.mean((pred_mm - true_mm) ** 2))

    theta = checkpoint.theta_o.copy()
    trace = [query_mse(theta)]
    for _ in range(steps):
        _, g = autodiff.value_and_grad(net, theta, Xs, Ys)
        theta = sgd_step(theta, g, lr)
        trace.append(query_mse(theta))
    return theta, trace


def _aggregate(reports: Sequence[MetricsReport]):
    mean = {}
    std = {}
    for k in METRIC_FIELDS:
        vals = [getattr(r, k) for r in reports]
        if any(v is None for v in vals):
            mean[k] = std[k] = None
        else:
            mean[k] = float(np.mean(vals))
            std[k] = float(np.std(vals))
    traces = [r.trace for r in reports]
    trace = tuple(float(v) for v in np.mean(traces, axis=0)) if traces and traces[0] else ()
    n_query = int(round(np.mean([r.n_query for r in reports])))
    return MetricsReport(mean["pearson_r"], mean["r2"], mean["mse_mm2"], mean["mae_mm"], trace, n_query), std


def evaluate_target(checkpoint: MetaCheckpoint, task: TaskDataset, fraction: float = 0.2, resamples: int = 5,
                    steps: int | None = None, lr: float | None = None, base_seed: int = 0,
                    output: int | None = None) -> EvaluationResult:
    """Resample the support set ``resamples`` times, adapt, and score the query.

    Returns the mean report, the per-shuffle reports (in shuffle order) and
    population standard deviations of the scalar metrics. Adaptation always
    uses every output; ``output`` selects the column that is scored.
    """
    cols = slice(None) if output is None else slice(output, output + 1)
    steps = checkpoint.config.adaptation_steps if steps is None else steps
    X, Y = prepare_task(task, checkpoint.bounds, checkpoint.transform)
    reports = []
    for seed in resample_seeds(base_seed, resamples):
        split = split_support_query(len(X), fraction, seed)
        s, q = split.support_indices, split.query_indices
        theta, trace = adapt_and_trace(checkpoint, (X[s], Y[s]), (X[q], Y[q]), steps, lr, output)
        pred_mm = _to_mm(checkpoint, forward(checkpoint.net, theta, X[q]))[:, cols]
        m = compute_metrics(pred_mm, _to_mm(checkpoint, Y[q])[:, cols])
        reports.append(MetricsReport(m.pearson_r, m.r2, m.mse_mm2, m.mae_mm, tuple(trace), m.n_query))
    mean, std = _aggregate(reports)
    return EvaluationResult(mean, tuple(reports), std)


@dataclass(frozen=True)
class BaselineConfig:
    hidden_dims: tuple[int, ...] = (64, 64, 64)
    activation: str = "tanh"
    epochs: int = 100
    lr: float = 0.001


def train_vanilla_baseline(inputs, targets, net: NetworkSpec, epochs: int = 100, lr: float = 0.001,
                           seed: int = 0) -> np.ndarray:
    """Plain full-batch Adam on the pooled data, one step per epoch."""
    inputs = np.asarray(inputs, dtype=np.float64)
    if inputs.shape[0] == 0:
        raise DataError("no training data for the baseline")
    theta = init_network(net, seed)
    state = AdamState.zeros(net.n_params, learning_rate=lr)
    for epoch in range(epochs):
        value, g = autodiff.value_and_grad(net, theta, inputs, targets)
        if not math.isfinite(value) or value > DIVERGENCE_LIMIT:
            raise DivergenceError(f"baseline training diverged in epoch {epoch}", epoch=epoch)
        theta, state = adam_step(state, theta, g)
    return theta


def evaluate_baseline(target: TaskDataset, net: NetworkSpec, mode: str = "target_only",
                      source_tasks: Sequence[TaskDataset] = (), bounds=None, transform: str = "log1p",
                      fraction: float = 0.2, resamples: int = 5, epochs: int = 100, lr: float = 0.001,
                      base_seed: int = 0) -> EvaluationResult:
    """Vanilla network scored with the same resampling protocol.

    ``mode="pooled"`` trains on every source task plus the target support;
    ``mode="target_only"`` trains on the target support alone.
    """
    if mode not in ("pooled", "target_only"):
        raise ValueError(f"unknown baseline mode {mode!r}")
    X, Y = prepare_task(target, bounds, transform)
    pooled = [prepare_task(t, bounds, transform) for t in source_tasks] if mode == "pooled" else []
    reports = []
    for i, seed in enumerate(resample_seeds(base_seed, resamples)):
        split = split_support_query(len(X), fraction, seed)
        s, q = split.support_indices, split.query_indices
        Xtr = np.concatenate([p[0] for p in pooled] + [X[s]])
        Ytr = np.concatenate([p[1] for p in pooled] + [Y[s]])
        theta = train_vanilla_baseline(Xtr, Ytr, net, epochs, lr, seed=base_seed * 1000 + i)
        pred_mm = _to_mm(transform, forward(net, theta, X[q]))
        m = compute_metrics(pred_mm, _to_mm(transform, Y[q]))
        reports.append(MetricsReport(m.pearson_r, m.r2, m.mse_mm2, m.mae_mm, (m.mse_mm2,), m.n_query))
    mean, std = _aggregate(reports)
    return EvaluationResult(mean, tuple(reports), std)


def _fmt(v):
    return "" if v is None else repr(float(v))


def write_metrics_csv(result: EvaluationResult, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["shuffle_index", *METRIC_FIELDS])
        for i, r in enumerate(result.shuffles):
            w.writerow([i, *(_fmt(getattr(r, k)) for k in METRIC_FIELDS)])
        w.writerow(["mean", *(_fmt(getattr(result.mean, k)) for k in METRIC_FIELDS)])


def write_trace_csv(result: EvaluationResult, path) -> None:
    """One row per adaptation step; one MSE column per shuffle plus the mean."""
    n = len(result.shuffles)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", *(f"mse_mm2_shuffle{i}" for i in range(n)), "mse_mm2_mean"])
        for step in range(len(result.mean.trace)):
            w.writerow([step, *(_fmt(r.trace[step]) for r in result.shuffles), _fmt(result.mean.trace[step])])


def result_to_dict(result: EvaluationResult) -> dict:
    def rep(r):
        d = r.row()
        d["n_query"] = r.n_query
        d["trace"] = list(r.trace)
        return d

    return {"mean": rep(result.mean), "std": dict(result.std), "shuffles": [rep(r) for r in result.shuffles]}
