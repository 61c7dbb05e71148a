import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metareg import autodiff
from metareg.errors import ConfigError, ShapeError
from metareg.net import (AdamState, NetworkSpec, adam_step, cosine_annealing_lr, forward, init_network, sgd_step)


def test_layout_size():
    spec = NetworkSpec(4, (64, 64, 64), 1)
    assert spec.n_params == 4 * 64 + 64 + 2 * (64 * 64 + 64) + 64 + 1
    assert spec.layers[0] == (4, 64, True)


def test_flatten_roundtrip(rng):
    spec = NetworkSpec(3, (5, 2), 2)
    p = rng.normal(size=spec.n_params)
    assert np.array_equal(spec.flatten(spec.unflatten(p)), p)


def test_flatten_order_weights_row_major_then_bias():
    spec = NetworkSpec(2, (), 3)
    p = np.arange(spec.n_params, dtype=float)
    (W, b), = spec.unflatten(p)
    np.testing.assert_array_equal(W, [[0, 1, 2], [3, 4, 5]])
    np.testing.assert_array_equal(b, [6, 7, 8])


def test_init_deterministic():
    spec = NetworkSpec(4, (16, 16), 1)
    assert np.array_equal(init_network(spec, 7), init_network(spec, 7))
    assert not np.array_equal(init_network(spec, 7), init_network(spec, 8))


def test_init_glorot_bound_and_zero_bias():
    spec = NetworkSpec(2, (3,), 1)
    (W1, b1), (W2, b2) = spec.unflatten(init_network(spec, 3))
    assert np.all(np.abs(W1) <= math.sqrt(6 / 5))
    assert math.sqrt(6 / 5) == pytest.approx(1.0954, abs=1e-4)
    assert np.all(b1 == 0) and np.all(b2 == 0)


def test_forward_examples():
    spec = NetworkSpec(3, (4,), 2)
    assert np.all(forward(spec, np.zeros(spec.n_params), np.ones((5, 3))) == 0)
    lin = NetworkSpec(1, (), 1)
    assert forward(lin, [2.0, 1.0], [[3.0]])[0, 0] == 7.0
    tiny = NetworkSpec(1, (1,), 1, "tanh")
    assert forward(tiny, [1.0, 0.0, 1.0, 0.0], [[0.0]])[0, 0] == 0.0


def test_forward_shape_error(small_net):
    with pytest.raises(ShapeError):
        forward(small_net, np.zeros(small_net.n_params), np.zeros((2, 3)))


def test_output_layer_homogeneous(rng):
    spec = NetworkSpec(3, (6, 6), 2)
    p = rng.normal(size=spec.n_params)
    layers = spec.unflatten(p)
    W, b = layers[-1]
    doubled = spec.flatten(layers[:-1] + [(2 * W, 2 * b)])
    X = rng.normal(size=(4, 3))
    assert np.array_equal(forward(spec, doubled, X), 2 * forward(spec, p, X))


def test_sgd_examples():
    p = np.array([1.0, 1.0])
    assert np.array_equal(sgd_step(p, [5.0, -3.0], 0.0), p)
    np.testing.assert_allclose(sgd_step(p, [1.0, 2.0], 0.1), [0.9, 0.8])
    with pytest.raises(ShapeError):
        sgd_step(p, [1.0], 0.1)


def test_sgd_does_not_mutate():
    p = np.array([1.0, 2.0])
    g = np.array([0.5, 0.5])
    sgd_step(p, g, 0.3)
    assert np.array_equal(p, [1.0, 2.0]) and np.array_equal(g, [0.5, 0.5])


def _quadratic_problem(a):
    # Bias-only model on one sample with target a: loss = (theta - a)^2.
    spec = NetworkSpec(1, (), 1)
    return spec, np.array([[0.0]]), np.array([[a]])


def test_sgd_closed_form_recursion():
    a, theta0, lr = 1.5, -2.0, 0.1
    spec, X, Y = _quadratic_problem(a)
    p = np.array([0.0, theta0])
    for k in range(1, 21):
        _, g = autodiff.value_and_grad(spec, p, X, Y)
        p = sgd_step(p, g, lr)
        assert p[1] == pytest.approx(a + (1 - 2 * lr) ** k * (theta0 - a), abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(a=st.floats(-5, 5), theta0=st.floats(-5, 5), lr=st.floats(0.01, 0.49))
def test_sgd_monotone_on_convex_toy(a, theta0, lr):
    spec, X, Y = _quadratic_problem(a)
    p = np.array([0.0, theta0])
    prev = autodiff.loss(spec, p, X, Y)
    for _ in range(15):
        _, g = autodiff.value_and_grad(spec, p, X, Y)
        p = sgd_step(p, g, lr)
        cur = autodiff.loss(spec, p, X, Y)
        assert cur <= prev
        prev = cur


def test_adam_zero_gradient():
    s = AdamState.zeros(3, learning_rate=0.1)
    p = np.array([1.0, -2.0, 3.0])
    p2, s2 = adam_step(s, p, np.zeros(3))
    assert np.array_equal(p2, p)
    assert np.all(s2.first_moment == 0) and np.all(s2.second_moment == 0)
    assert s2.step_count == 1 and s.step_count == 0


def test_adam_first_step_is_signed_lr():
    s = AdamState.zeros(4, learning_rate=0.01)
    g = np.array([3.0, -0.5, 1e-2, -40.0])
    p2, _ = adam_step(s, np.zeros(4), g)
    np.testing.assert_allclose(p2, -0.01 * np.sign(g), rtol=1e-5)


def test_adam_deterministic_and_pure(rng):
    s = AdamState.zeros(5, learning_rate=0.01)
    p = rng.normal(size=5)
    g = rng.normal(size=5)
    a, sa = adam_step(s, p.copy(), g.copy())
    b, sb = adam_step(s, p.copy(), g.copy())
    assert np.array_equal(a, b) and np.array_equal(sa.second_moment, sb.second_moment)
    assert np.all(s.first_moment == 0)


def test_adam_layout_mismatch():
    with pytest.raises(ShapeError):
        adam_step(AdamState.zeros(3), np.zeros(4), np.zeros(4))


def test_cosine_schedule():
    assert cosine_annealing_lr(0, 100, 1e-3, 1e-5) == 1e-3
    assert cosine_annealing_lr(100, 100, 1e-3, 1e-5) == pytest.approx(1e-5, abs=1e-18)
    assert cosine_annealing_lr(50, 100, 1e-3, 1e-5) == pytest.approx((1e-3 + 1e-5) / 2, rel=1e-12)
    with pytest.raises(ConfigError):
        cosine_annealing_lr(0, 0, 1e-3, 0.0)


def test_spec_validation():
    with pytest.raises(ConfigError):
        NetworkSpec(0, (3,), 1)
    with pytest.raises(ConfigError):
        NetworkSpec(2, (3,), 1, "sigmoid")
