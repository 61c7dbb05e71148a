"""Sinusoid regression benchmark with a fresh task stream per meta-iteration."""

from __future__ import annotations

import math

import numpy as np

from . import autodiff
from .errors import ConfigError, DivergenceError
from .meta import (DIVERGENCE_LIMIT, Episode, MetaCheckpoint, MetaConfig, maml_meta_gradient, outer_update,
                   reptile_adapt_batch)
from .net import NetworkSpec, init_network, sgd_step
from .tasks import sample_sinusoid_task

SINUSOID_NET = NetworkSpec(1, (40, 40), 1, "relu")

# Per-algorithm training settings of the classic benchmark.
SINUSOID_SETTINGS = {
    "maml": dict(inner_lr=0.01, inner_steps=1, outer_lr=0.001, batch_size=25, second_order=True),
    "reptile": dict(inner_lr=0.01, inner_steps=32, outer_lr=0.001, batch_size=10, reptile_average=True),
}


def sinusoid_episode(seed, n_support: int, n_query: int) -> Episode:
    task = sample_sinusoid_task(seed, n_support + n_query)
    X, Y = task.features, task.target_matrix
    return Episode(X[:n_support], Y[:n_support], X[n_support:], Y[n_support:])


def held_out_episodes(seed: int, n_tasks: int, n_support: int, n_query: int):
    ss = np.random.SeedSequence([int(seed), 0x7E57])
    return [sinusoid_episode(child, n_support, n_query) for child in ss.spawn(n_tasks)]


def adaptation_curve(net, theta, episodes, lr: float, steps: int) -> np.ndarray:
    """Mean query MSE over ``episodes`` after 0..steps SGD steps on each support set."""
    curve = np.zeros(steps + 1)
    for ep in episodes:
        t = theta
        curve[0] += autodiff.loss(net, t, ep.query_x, ep.query_y)
        for s in range(1, steps + 1):
            _, g = autodiff.value_and_grad(net, t, ep.support_x, ep.support_y)
            t = sgd_step(t, g, lr)
            curve[s] += autodiff.loss(net, t, ep.query_x, ep.query_y)
    return curve / len(episodes)


def run_sinusoid_benchmark(algo: str = "maml", seed: int = 0, max_iterations: int = 10000, n_support: int = 10,
                           n_query: int = 10, n_test: int = 100, n_test_query: int = 100, eval_steps: int = 10,
                           plateau_window: int = 500, plateau_patience: int = 3, plateau_tol: float = 0.01,
                           progress=None):
    """Meta-train on freshly sampled sinusoids, then score held-out tasks.

    Training stops at ``max_iterations`` or once the windowed mean training
    query loss has failed to improve on its best value by more than
    ``plateau_tol`` (relative) for ``plateau_patience`` consecutive windows.
    Returns ``(checkpoint, report)``.
    """
    if algo not in SINUSOID_SETTINGS:
        raise ConfigError(f"unknown algorithm {algo!r}")
    if max_iterations < 1:
        raise ConfigError("max_iterations must be positive")
    settings = SINUSOID_SETTINGS[algo]
    net = SINUSOID_NET
    rng = np.random.default_rng(seed)
    theta = init_network(net, int(rng.integers(2**63)))
    proto = MetaConfig(epochs=1, support_fraction=n_support / (n_support + n_query), seed=seed,
                       adaptation_steps=eval_steps, outer_optimizer="adam", **settings)
    opt_state = None
    losses = []
    window_means = []
    best = math.inf
    stale = 0
    for it in range(max_iterations):
        batch = [sinusoid_episode(int(s), n_support, n_query) for s in rng.integers(2**63, size=proto.batch_size)]
        if algo == "maml":
            q_loss, g = maml_meta_gradient(net, theta, batch, proto.inner_lr, proto.inner_steps, True)
        else:
            delta, q = reptile_adapt_batch(net, theta, batch, proto.inner_lr, proto.inner_steps,
                                           proto.reptile_average, monitor=True)
            q_loss, g = float(np.mean(q)), -delta
        if not math.isfinite(q_loss) or q_loss > DIVERGENCE_LIMIT:
            raise DivergenceError(f"sinusoid meta-training diverged at iteration {it}", epoch=it)
        theta, opt_state = outer_update(theta, g, proto, opt_state)
        losses.append(q_loss)
        if (it + 1) % plateau_window == 0:
            w = float(np.mean(losses[-plateau_window:]))
            window_means.append(w)
            if progress is not None:
                progress(it + 1, w)
            if w < best * (1.0 - plateau_tol):
                best, stale = w, 0
            else:
                stale += 1
                if stale >= plateau_patience:
                    break
    iterations = len(losses)
    config = MetaConfig(**{**proto.to_dict(), "epochs": iterations})
    ckpt = MetaCheckpoint(net=net, theta_o=theta, config=config, algo=algo, bounds=None, transform="none",
                          history=tuple(losses))
    curve = adaptation_curve(net, theta, held_out_episodes(seed, n_test, n_support, n_test_query),
                             proto.inner_lr, eval_steps)
    report = {
        "benchmark": "sinusoid",
        "algo": algo,
        "seed": seed,
        "iterations": iterations,
        "stopped_on_plateau": iterations < max_iterations,
        "n_support": n_support,
        "n_test_tasks": n_test,
        "adaptation_lr": proto.inner_lr,
        "mse_pre_adaptation": float(curve[0]),
        "mse_after_1_step": float(curve[1]),
        f"mse_after_{eval_steps}_steps": float(curve[eval_steps]),
        "post_adaptation_mse": float(curve[eval_steps]),
        "adaptation_curve": [float(c) for c in curve],
        "training_window_means": window_means,
        "config": config.to_dict(),
        "net": net.to_dict(),
    }
    return ckpt, report
