"""Exact first and second derivatives of the network MSE loss.

Gradients use a hand-written reverse pass over the layer stack. Hessian-vector
products use Pearlmutter's R-operator: the forward and reverse passes are
differentiated once more along a direction ``v`` (forward-over-reverse), which
costs about two gradient evaluations and never forms the Hessian.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError
from .net import NetworkSpec, as_matrix, check_params


def _act_derivs(name, z, a):
    """First and second derivative of the activation at ``z`` (``a`` = act(z))."""
    if name == "tanh":
        d1 = 1.0 - a * a
        return d1, -2.0 * a * d1
    if name == "relu":
        return (z > 0).astype(np.float64), None
    return np.ones_like(z), None


def _prepare(spec, params, inputs, targets):
    params = check_params(spec, params)
    X = as_matrix(inputs, spec.input_dim, "inputs")
    Y = as_matrix(targets, spec.output_dim, "targets")
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"inputs have {X.shape[0]} rows but targets have {Y.shape[0]}")
    if X.shape[0] == 0:
        raise ShapeError("empty batch")
    return params, X, Y


def _forward(spec, layers, X):
    acts = [X]
    pre = []
    a = X
    last = len(layers) - 1
    for i, (W, b) in enumerate(layers):
        z = a @ W
        if b is not None:
            z = z + b
        pre.append(z)
        if i < last:
            if spec.activation == "tanh":
                a = np.tanh(z)
            elif spec.activation == "relu":
                a = np.maximum(z, 0.0)
            else:
                a = z
            acts.append(a)
    return pre, acts


def value_and_grad(spec: NetworkSpec, params, inputs, targets):
    """MSE loss and its exact gradient with respect to the flat parameters."""
    params, X, Y = _prepare(spec, params, inputs, targets)
    layers = spec.unflatten(params)
    pre, acts = _forward(spec, layers, X)
    resid = pre[-1] - Y
    loss = float(np.mean(resid * resid))

    delta = (2.0 / resid.size) * resid
    grads = [None] * len(layers)
    for i in range(len(layers) - 1, -1, -1):
        W, b = layers[i]
        gW = acts[i].T @ delta
        gb = delta.sum(axis=0) if b is not None else None
        grads[i] = (gW, gb)
        if i > 0:
            d1, _ = _act_derivs(spec.activation, pre[i - 1], acts[i])
            delta = (delta @ W.T) * d1
    return loss, spec.flatten(grads)


def loss(spec: NetworkSpec, params, inputs, targets) -> float:
    params, X, Y = _prepare(spec, params, inputs, targets)
    pre, _ = _forward(spec, spec.unflatten(params), X)
    r = pre[-1] - Y
    return float(np.mean(r * r))


def grad_and_hvp(spec: NetworkSpec, params, inputs, targets, v):
    """Return ``(loss, grad, H @ v)`` from one forward-over-reverse sweep."""
    params, X, Y = _prepare(spec, params, inputs, targets)
    v = np.asarray(v, dtype=np.float64)
    if v.shape != params.shape:
        raise ShapeError(f"direction of shape {v.shape} does not match parameters {params.shape}")
    layers = spec.unflatten(params)
    dirs = spec.unflatten(v)
    pre, acts = _forward(spec, layers, X)

    # R-forward: tangents of pre-activations and activations along v.
    r_acts = [np.zeros_like(X)]
    r_pre = []
    derivs = []
    last = len(layers) - 1
    for i, ((W, b), (V, vb)) in enumerate(zip(layers, dirs)):
        rz = r_acts[i] @ W + acts[i] @ V
        if vb is not None:
            rz = rz + vb
        r_pre.append(rz)
        if i < last:
            d1, d2 = _act_derivs(spec.activation, pre[i], acts[i + 1])
            derivs.append((d1, d2))
            r_acts.append(d1 * rz)

    resid = pre[-1] - Y
    value = float(np.mean(resid * resid))
    scale = 2.0 / resid.size
    delta = scale * resid
    r_delta = scale * r_pre[-1]
    grads = [None] * len(layers)
    hvps = [None] * len(layers)
    for i in range(last, -1, -1):
        W, b = layers[i]
        V, _ = dirs[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0) if b is not None else None)
        hvps[i] = (
            r_acts[i].T @ delta + acts[i].T @ r_delta,
            r_delta.sum(axis=0) if b is not None else None,
        )
        if i > 0:
            d1, d2 = derivs[i - 1]
            back = delta @ W.T
            r_back = r_delta @ W.T + delta @ V.T
            r_delta = r_back * d1
            if d2 is not None:
                r_delta = r_delta + back * d2 * r_pre[i - 1]
            delta = back * d1
    return value, spec.flatten(grads), spec.flatten(hvps)


def hessian_vector_product(spec: NetworkSpec, params, inputs, targets, v) -> np.ndarray:
    """Exact ``H @ v`` where ``H`` is the Hessian of the MSE loss at ``params``."""
    return grad_and_hvp(spec, params, inputs, targets, v)[2]
