"""Gaussian process regression with an ARD RBF kernel, used to synthesize tasks.

Only the posterior mean is needed: synthesized tasks are noisy perturbations
of the fitted mean surface.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .errors import ConfigError, NumericalError, ShapeError
from .tasks import TaskDataset

JITTER_START = 1e-10
JITTER_MAX = 1e-6


def rbf_kernel(A, B, lengthscales, signal_var) -> np.ndarray:
    """``s2 * exp(-0.5 * sum_d ((a_d - b_d) / l_d)**2)`` for all row pairs."""
    A = np.asarray(A, dtype=np.float64) / lengthscales
    B = np.asarray(B, dtype=np.float64) / lengthscales
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    np.maximum(sq, 0.0, out=sq)
    return signal_var * np.exp(-0.5 * sq)


@dataclass(frozen=True, eq=False)
class GprModel:
    X: np.ndarray
    y: np.ndarray
    lengthscales: np.ndarray
    signal_var: float
    noise_var: float
    alpha: np.ndarray
    chol: np.ndarray
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def fit_gpr(X, y, lengthscales, signal_var: float = 1.0, noise_var: float = 0.0) -> GprModel:
    """Solve ``(K + noise I) alpha = y`` by Cholesky.

    When the factorization fails, jitter starting at 1e-10 is added to the
    diagonal and raised tenfold up to 1e-6 before giving up.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.shape[0] < 1 or X.shape[0] != y.shape[0]:
        raise ShapeError(f"need matching non-empty X {X.shape} and y {y.shape}")
    ls = np.broadcast_to(np.asarray(lengthscales, dtype=np.float64), (X.shape[1],)).copy()
    if np.any(ls <= 0) or signal_var <= 0 or noise_var < 0:
        raise ConfigError("lengthscales and signal variance must be positive, noise variance non-negative")

    K = rbf_kernel(X, X, ls, signal_var)
    K[np.diag_indices_from(K)] += noise_var
    jitter = 0.0
    while True:
        try:
            L = linalg.cholesky(K + jitter * np.eye(len(K)), lower=True)
            break
        except linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX * (1 + 1e-9):
                raise NumericalError("kernel matrix is not positive definite even with 1e-6 jitter") from None
    alpha = linalg.cho_solve((L, True), y)
    return GprModel(X, y, ls, float(signal_var), float(noise_var), alpha, L, jitter)


def predict_mean(model: GprModel, X_star) -> np.ndarray:
    X_star = np.asarray(X_star, dtype=np.float64)
    if X_star.ndim == 1:
        X_star = X_star.reshape(-1, model.dim) if model.dim > 1 else X_star.reshape(-1, 1)
    if X_star.shape[1] != model.dim:
        raise ShapeError(f"expected {model.dim} input columns, got {X_star.shape[1]}")
    return rbf_kernel(X_star, model.X, model.lengthscales, model.signal_var) @ model.alpha


def log_marginal_likelihood(model: GprModel) -> float:
    n = model.y.shape[0]
    return float(
        -0.5 * model.y @ model.alpha
        - np.log(np.diag(model.chol)).sum()
        - 0.5 * n * np.log(2 * np.pi)
    )


def fit_gpr_grid(X, y, signal_var: float = 1.0, noise_var: float = 1e-4,
                 grid=np.logspace(-1.5, 1.0, 11)) -> GprModel:
    """Pick a shared lengthscale from a log grid by marginal likelihood."""
    best = None
    for ls in grid:
        try:
            m = fit_gpr(X, y, ls, signal_var, noise_var)
        except NumericalError:
            continue
        score = log_marginal_likelihood(m)
        if best is None or score > best[0]:
            best = (score, m)
    if best is None:
        raise NumericalError("no lengthscale on the grid produced a valid fit")
    return best[1]


def synthesize_task(models, n: int, box, additive_std: float = 0.02,
                    multiplicative_std: float = 0.05, rng_seed=0, task_id=None) -> TaskDataset:
    """Draw a task from the GP mean with task-level scale and point-level noise.

    ``y = m(x) * (1 + e_mult) + e_add``; ``e_mult`` is drawn once per task
    (per output), ``e_add`` per point. ``models`` may be one model or a
    sequence of models sharing an input space (one per output column).
    """
    if n < 1:
        raise ConfigError("a synthesized task needs at least one point")
    single = isinstance(models, GprModel)
    models = [models] if single else list(models)
    d = models[0].dim
    box = np.asarray(box, dtype=np.float64).reshape(d, 2)
    rng = np.random.default_rng(rng_seed)
    x = rng.uniform(box[:, 0], box[:, 1], size=(n, d))
    mult = rng.normal(0.0, multiplicative_std, size=len(models)) if multiplicative_std > 0 else np.zeros(len(models))
    add = rng.normal(0.0, additive_std, size=(n, len(models))) if additive_std > 0 else np.zeros((n, len(models)))
    mean = np.column_stack([predict_mean(m, x) for m in models])
    y = mean * (1.0 + mult) + add
    return TaskDataset(
        task_id if task_id is not None else f"gpr-{rng_seed}",
        "synthetic",
        x,
        y[:, 0] if single else y,
        meta={"multiplicative": mult.tolist()},
    )
