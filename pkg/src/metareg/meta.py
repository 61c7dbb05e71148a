"""MAML and Reptile over the feedforward base learner.

A task batch is a sequence of :class:`Episode` values holding model-space
support and query arrays. Per-task contributions are always accumulated in
ascending task order so results do not depend on how the work is scheduled.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff
from .errors import ConfigError, DataError, DivergenceError, ShapeError
from .net import AdamState, NetworkSpec, adam_step, check_params, cosine_annealing_lr, init_network, sgd_step
from .tasks import NormalizationBounds, TaskDataset, prepare_task, split_support_query

FORMAT_VERSION = 1
DIVERGENCE_LIMIT = 1e6
ALGORITHMS = ("maml", "reptile")


class Episode(NamedTuple):
    support_x: np.ndarray
    support_y: np.ndarray
    query_x: np.ndarray
    query_y: np.ndarray


def make_episode(X, Y, split) -> Episode:
    return Episode(X[split.support_indices], Y[split.support_indices],
                   X[split.query_indices], Y[split.query_indices])


@dataclass(frozen=True)
class MetaConfig:
    inner_lr: float = 0.1
    outer_lr: float = 0.002
    inner_steps: int = 1
    adaptation_steps: int = 5
    batch_size: int = 6
    epochs: int = 100
    support_fraction: float = 0.2
    outer_optimizer: str = "adam"
    second_order: bool = True
    lr_schedule: str = "constant"
    reptile_average: bool = False
    seed: int = 0

    def __post_init__(self):
        if not (self.inner_lr >= 0 and self.outer_lr > 0):
            raise ConfigError("inner_lr must be non-negative and outer_lr positive")
        for name in ("inner_steps", "adaptation_steps", "batch_size", "epochs"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be a positive integer")
        if not 0 < self.support_fraction < 1:
            raise ConfigError("support_fraction must lie in (0, 1)")
        if self.outer_optimizer not in ("sgd", "adam"):
            raise ConfigError(f"unknown outer optimizer {self.outer_optimizer!r}")
        if self.lr_schedule not in ("constant", "cosine"):
            raise ConfigError(f"unknown learning-rate schedule {self.lr_schedule!r}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d) -> "MetaConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True, eq=False)
class MetaCheckpoint:
    net: NetworkSpec
    theta_o: np.ndarray
    config: MetaConfig
    algo: str
    bounds: NormalizationBounds | None = NormalizationBounds()
    transform: str = "log1p"
    history: tuple[float, ...] = ()
    format_version: int = FORMAT_VERSION

    def to_json(self) -> str:
        """Deterministic text form; parameters use 17 significant digits."""
        doc = {
            "format_version": self.format_version,
            "algo": self.algo,
            "net": self.net.to_dict(),
            "config": self.config.to_dict(),
            "bounds": None if self.bounds is None else list(self.bounds.maxima),
            "transform": self.transform,
            "history": [float(h) for h in self.history],
            "theta_o": "@THETA@",
        }
        text = json.dumps(doc, indent=2)
        theta = "[" + ", ".join("%.17g" % v for v in self.theta_o) + "]"
        return text.replace('"@THETA@"', theta) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetaCheckpoint":
        doc = json.loads(text)
        if doc.get("format_version") != FORMAT_VERSION:
            raise ConfigError(f"unsupported checkpoint format {doc.get('format_version')!r}")
        net = NetworkSpec.from_dict(doc["net"])
        theta = check_params(net, np.array(doc["theta_o"], dtype=np.float64))
        return cls(
            net=net,
            theta_o=theta,
            config=MetaConfig.from_dict(doc["config"]),
            algo=doc["algo"],
            bounds=None if doc["bounds"] is None else NormalizationBounds(tuple(doc["bounds"])),
            transform=doc["transform"],
            history=tuple(doc["history"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "MetaCheckpoint":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def _check_nonempty(x, what):
    if len(x) == 0:
        raise DataError(f"empty {what} set")


def inner_adapt(net: NetworkSpec, theta, support_x, support_y, alpha: float, k: int) -> np.ndarray:
    """``k`` full-batch SGD steps on the support MSE, starting from ``theta``."""
    _check_nonempty(support_x, "support")
    if k < 0:
        raise ConfigError("number of inner steps must be non-negative")
    theta = check_params(net, theta)
    for _ in range(k):
        _, g = autodiff.value_and_grad(net, theta, support_x, support_y)
        theta = sgd_step(theta, g, alpha)
    return theta


def _task_meta_gradient(net, theta, ep: Episode, alpha, k, second_order):
    _check_nonempty(ep.support_x, "support")
    _check_nonempty(ep.query_x, "query")
    path = [theta]
    for _ in range(k):
        _, g = autodiff.value_and_grad(net, path[-1], ep.support_x, ep.support_y)
        path.append(sgd_step(path[-1], g, alpha))
    q_loss, lam = autodiff.value_and_grad(net, path[-1], ep.query_x, ep.query_y)
    if second_order:
        # reverse pass through theta_{j+1} = theta_j - alpha * grad(theta_j)
        for j in range(k - 1, -1, -1):
            hv = autodiff.hessian_vector_product(net, path[j], ep.support_x, ep.support_y, lam)
            lam = lam - alpha * hv
    return q_loss, lam


def maml_meta_gradient(net: NetworkSpec, theta, task_batch: Sequence[Episode], alpha: float, k: int,
                       second_order: bool = True):
    """Mean query loss after adaptation and the gradient of the summed query loss.

    With ``second_order`` the gradient is exact through all ``k`` unrolled
    inner steps (one Hessian-vector product per step); otherwise the inner
    Jacobian is taken as the identity.
    """
    theta = check_params(net, theta)
    if len(task_batch) == 0:
        raise DataError("empty task batch")
    total = np.zeros_like(theta)
    losses = []
    for ep in task_batch:
        q_loss, g = _task_meta_gradient(net, theta, ep, alpha, k, second_order)
        losses.append(q_loss)
        total = total + g
    return float(np.mean(losses)), total


def outer_update(theta, grad, config: MetaConfig, opt_state=None, lr=None):
    """Apply the configured outer optimizer. Returns ``(theta, opt_state)``."""
    lr = config.outer_lr if lr is None else lr
    if config.outer_optimizer == "sgd":
        return sgd_step(theta, grad, lr), opt_state
    if opt_state is None:
        opt_state = AdamState.zeros(theta.shape[0], learning_rate=config.outer_lr)
    return adam_step(opt_state, theta, grad, lr=lr)


def maml_meta_step(net: NetworkSpec, theta, task_batch, config: MetaConfig, opt_state=None, lr=None):
    """One outer MAML update. Returns ``(theta, opt_state, mean_query_loss)``."""
    q_loss, g = maml_meta_gradient(net, theta, task_batch, config.inner_lr, config.inner_steps,
                                   config.second_order)
    theta, opt_state = outer_update(theta, g, config, opt_state, lr)
    return theta, opt_state, q_loss


def reptile_adapt_batch(net, theta, task_batch, alpha, k, average=False, monitor=True):
    """Reptile displacement plus, with ``monitor``, each task's post-adaptation query loss."""
    theta = check_params(net, theta)
    if len(task_batch) == 0:
        raise DataError("empty task batch")
    total = np.zeros_like(theta)
    query_losses = []
    for ep in task_batch:
        adapted = inner_adapt(net, theta, ep.support_x, ep.support_y, alpha, k)
        total = total + (adapted - theta)
        if monitor:
            _check_nonempty(ep.query_x, "query")
            query_losses.append(autodiff.loss(net, adapted, ep.query_x, ep.query_y))
    if average:
        total = total / len(task_batch)
    return total, query_losses


def reptile_displacement(net: NetworkSpec, theta, task_batch, alpha: float, k: int, average: bool = False):
    """``sum_i (theta'_i - theta)`` over the batch, or its mean with ``average``.

    Only support sets are touched; no derivative of the inner updates is formed.
    """
    return reptile_adapt_batch(net, theta, task_batch, alpha, k, average, monitor=False)[0]


def reptile_meta_step(net: NetworkSpec, theta, task_batch, config: MetaConfig, lr=None) -> np.ndarray:
    """``theta + beta * sum_i (theta'_i - theta)``."""
    beta = config.outer_lr if lr is None else lr
    delta = reptile_displacement(net, theta, task_batch, config.inner_lr, config.inner_steps,
                                 config.reptile_average)
    return check_params(net, theta) + beta * delta


def post_adaptation_query_loss(net, theta, ep: Episode, alpha, k) -> float:
    adapted = inner_adapt(net, theta, ep.support_x, ep.support_y, alpha, k)
    return autodiff.loss(net, adapted, ep.query_x, ep.query_y)


def _guard(value, epoch):
    if not math.isfinite(value) or abs(value) > DIVERGENCE_LIMIT:
        raise DivergenceError(f"meta-training diverged in epoch {epoch} (loss={value!r})", epoch=epoch)


def meta_train(train_tasks: Sequence[TaskDataset], net: NetworkSpec, config: MetaConfig, algo: str = "maml",
               bounds: NormalizationBounds | None = NormalizationBounds(), transform: str = "log1p",
               theta0=None) -> MetaCheckpoint:
    """Epoch-structured meta-training, deterministic in ``config.seed``.

    Each epoch shuffles the task order, cuts it into batches of at most
    ``batch_size`` and redraws every task's support/query split. The
    recorded history is the mean post-adaptation query loss per epoch.
    """
    if algo not in ALGORITHMS:
        raise ConfigError(f"unknown algorithm {algo!r}")
    if len(train_tasks) < config.batch_size:
        raise ConfigError(f"batch_size {config.batch_size} exceeds the {len(train_tasks)} training tasks")
    data = [prepare_task(t, bounds, transform) for t in train_tasks]
    for (X, _), t in zip(data, train_tasks):
        if X.shape[1] != net.input_dim:
            raise ShapeError(f"task {t.task_id!r} has {X.shape[1]} features, network expects {net.input_dim}")

    rng = np.random.default_rng(config.seed)
    theta = init_network(net, int(rng.integers(2**63))) if theta0 is None else check_params(net, theta0).copy()
    opt_state = None
    n_batches = math.ceil(len(data) / config.batch_size)
    total_steps = config.epochs * n_batches
    step = 0
    history = []
    for epoch in range(config.epochs):
        order = rng.permutation(len(data))
        split_seeds = rng.integers(2**63, size=len(data))
        epoch_losses = []
        for b in range(n_batches):
            idx = order[b * config.batch_size:(b + 1) * config.batch_size]
            batch = []
            for i in idx:
                X, Y = data[i]
                split = split_support_query(len(X), config.support_fraction, int(split_seeds[i]))
                batch.append(make_episode(X, Y, split))
            lr = config.outer_lr
            if config.lr_schedule == "cosine":
                lr = cosine_annealing_lr(step, total_steps, config.outer_lr)
            if algo == "maml":
                # per-task query losses for the history, then the update itself
                q_loss, g = maml_meta_gradient(net, theta, batch, config.inner_lr, config.inner_steps,
                                               config.second_order)
                _guard(q_loss, epoch)
                epoch_losses.extend([q_loss] * len(batch))
                theta, opt_state = outer_update(theta, g, config, opt_state, lr)
            else:
                delta, q_losses = reptile_adapt_batch(net, theta, batch, config.inner_lr, config.inner_steps,
                                                 config.reptile_average, monitor=True)
                _guard(float(np.mean(q_losses)), epoch)
                epoch_losses.extend(q_losses)
                if config.outer_optimizer == "sgd":
                    theta = theta + lr * delta
                else:
                    theta, opt_state = outer_update(theta, -delta, config, opt_state, lr)
            step += 1
            if not np.all(np.isfinite(theta)):
                raise DivergenceError(f"non-finite parameters in epoch {epoch}", epoch=epoch)
        history.append(float(np.mean(epoch_losses)))
    return MetaCheckpoint(net=net, theta_o=theta, config=config, algo=algo, bounds=bounds,
                          transform=transform, history=tuple(history))
