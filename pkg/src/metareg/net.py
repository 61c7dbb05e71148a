"""Feedforward base learner, initialization and plain optimizers.

Parameters travel as flat float64 arrays. The flattening order is layer by
layer, each layer contributing its ``(input_dim, output_dim)`` weight matrix
in row-major order followed by its bias vector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ShapeError

ACTIVATIONS = ("tanh", "relu", "identity")


@dataclass(frozen=True)
class NetworkSpec:
    """Architecture of a fully connected network with a linear output layer.

    ``hidden_dims`` may be empty, giving a plain affine model. The
    ``identity`` activation exists for constructing analytic toy problems.
    """

    input_dim: int
    hidden_dims: tuple[int, ...]
    output_dim: int = 1
    activation: str = "tanh"
    bias: bool = True

    def __post_init__(self):
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        if any(int(d) != d or d < 1 for d in dims):
            raise ConfigError(f"layer widths must be positive integers, got {dims}")
        if self.activation not in ACTIVATIONS:
            raise ConfigError(f"unknown activation {self.activation!r}; expected one of {ACTIVATIONS}")

    @property
    def layers(self) -> list[tuple[int, int, bool]]:
        """Layer descriptors ``(input_dim, output_dim, has_bias)``."""
        dims = (self.input_dim, *self.hidden_dims, self.output_dim)
        return [(dims[i], dims[i + 1], self.bias) for i in range(len(dims) - 1)]

    @property
    def n_params(self) -> int:
        return sum(i * o + (o if b else 0) for i, o, b in self.layers)

    def unflatten(self, params):
        """Split a flat vector into per-layer ``(W, b)`` views (``b`` may be None)."""
        params = check_params(self, params)
        out = []
        pos = 0
        for fan_in, fan_out, has_bias in self.layers:
            W = params[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
            pos += fan_in * fan_out
            b = None
            if has_bias:
                b = params[pos:pos + fan_out]
                pos += fan_out
            out.append((W, b))
        return out

    def flatten(self, layers) -> np.ndarray:
        parts = []
        for W, b in layers:
            parts.append(np.asarray(W, dtype=np.float64).ravel())
            if b is not None:
                parts.append(np.asarray(b, dtype=np.float64).ravel())
        return check_params(self, np.concatenate(parts))

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "activation": self.activation,
            "bias": self.bias,
        }

    @classmethod
    def from_dict(cls, d) -> "NetworkSpec":
        return cls(
            input_dim=int(d["input_dim"]),
            hidden_dims=tuple(d["hidden_dims"]),
            output_dim=int(d.get("output_dim", 1)),
            activation=d.get("activation", "tanh"),
            bias=bool(d.get("bias", True)),
        )


def check_params(spec: NetworkSpec, params) -> np.ndarray:
    params = np.asarray(params, dtype=np.float64)
    if params.ndim != 1 or params.shape[0] != spec.n_params:
        raise ShapeError(
            f"parameter vector of shape {params.shape} does not match network layout "
            f"({spec.n_params} parameters)"
        )
    return params


def as_matrix(x, dim: int, what: str) -> np.ndarray:
    """Coerce to a 2-D float64 array with ``dim`` columns (1-D means one column per row)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x.reshape(-1, 1) if dim == 1 else x.reshape(1, -1)
    if x.ndim != 2 or x.shape[1] != dim:
        raise ShapeError(f"{what} must have {dim} columns, got shape {x.shape}")
    return x


def init_network(spec: NetworkSpec, seed: int) -> np.ndarray:
    """Glorot-uniform weights, zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    layers = []
    for fan_in, fan_out, has_bias in spec.layers:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        layers.append((W, np.zeros(fan_out) if has_bias else None))
    return spec.flatten(layers)


def activate(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return z


def forward(spec: NetworkSpec, params, inputs) -> np.ndarray:
    """Predictions of shape ``(n, output_dim)``."""
    a = as_matrix(inputs, spec.input_dim, "inputs")
    layers = spec.unflatten(params)
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        a = a @ W
        if b is not None:
            a = a + b
        if i < last:
            a = activate(spec.activation, a)
    return a


def mse(pred, target) -> float:
    """Mean over every scalar residual, no 1/2 factor."""
    r = np.asarray(pred, dtype=np.float64) - np.asarray(target, dtype=np.float64)
    return float(np.mean(r * r))


def _check_pair(params, grad):
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if params.shape != grad.shape:
        raise ShapeError(f"gradient shape {grad.shape} does not match parameters {params.shape}")
    return params, grad


def sgd_step(params, grad, lr: float) -> np.ndarray:
    params, grad = _check_pair(params, grad)
    if lr < 0:
        raise ConfigError("learning rate must be non-negative")
    return params - lr * grad


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step_count: int = 0

    @classmethod
    def zeros(cls, n: int, learning_rate: float = 1e-3, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), learning_rate=learning_rate, **kw)


def adam_step(state: AdamState, params, grad, lr: float | None = None):
    """One bias-corrected Adam step. ``lr`` overrides the state's rate (schedules).

    Returns ``(new_params, new_state)``; neither input is modified.
    """
    params, grad = _check_pair(params, grad)
    if state.first_moment.shape != params.shape or state.second_moment.shape != params.shape:
        raise ShapeError("Adam moments do not match the parameter layout")
    lr = state.learning_rate if lr is None else lr
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1 ** t)
    v_hat = v / (1.0 - state.beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


def cosine_annealing_lr(step: int, total_steps: int, lr_max: float, lr_min: float = 0.0) -> float:
    if total_steps <= 0:
        raise ConfigError("total_steps must be positive")
    if step < 0 or step > total_steps:
        raise ConfigError(f"step {step} outside [0, {total_steps}]")
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + math.cos(math.pi * step / total_steps))
