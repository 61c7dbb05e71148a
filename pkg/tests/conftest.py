import numpy as np
import pytest

from metareg.net import NetworkSpec, init_network


def central_difference(f, x, eps=1e-5):
    """Gradient of scalar ``f`` at ``x`` by central differences, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += eps
        xm[j] -= eps
        out[j] = (f(xp) - f(xm)) / (2 * eps)
    return out


def rel_err(a, b, floor=1e-6):
    """Per-coordinate relative error, guarded against near-zero references."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def naive_mse_loss(spec, params, X, Y):
    """Straight-line loss used by the oracles, written without the library forward."""
    a = np.asarray(X, dtype=np.float64)
    pos = 0
    layers = spec.layers
    for i, (fi, fo, has_b) in enumerate(layers):
        W = params[pos:pos + fi * fo].reshape(fi, fo)
        pos += fi * fo
        a = a @ W
        if has_b:
            a = a + params[pos:pos + fo]
            pos += fo
        if i < len(layers) - 1:
            a = {"tanh": np.tanh, "relu": lambda z: np.maximum(z, 0), "identity": lambda z: z}[spec.activation](a)
    return float(np.mean((a - np.asarray(Y).reshape(a.shape)) ** 2))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_net():
    return NetworkSpec(4, (8,), 1, "tanh")


def random_problem(spec, rng, n=5, scale=0.5):
    params = init_network(spec, int(rng.integers(2**31))) + scale * rng.normal(size=spec.n_params) * 0.1
    X = rng.normal(size=(n, spec.input_dim))
    Y = rng.normal(size=(n, spec.output_dim))
    return params, X, Y
