import numpy as np
import pytest

from metareg.bench import SINUSOID_NET, adaptation_curve, held_out_episodes, run_sinusoid_benchmark
from metareg.errors import ConfigError
from metareg.gpr import predict_mean
from metareg.net import init_network
from metareg.synthetic import geometry_seed_dataset, gpr_task_family, heterogeneous_family
from metareg.tasks import NormalizationBounds, normalize_features, transform_target


def test_heterogeneous_family_shapes_and_ranges():
    tasks = heterogeneous_family(9, seed=4)
    assert [t.feedstock for t in tasks[:3]] == ["powder", "wire", "wire_powder"]
    for t in tasks:
        assert 20 <= t.n <= 36 and np.all(t.targets >= 0)
        normalize_features(t.features)
    assert len({t.meta["gain"] for t in tasks}) == 9
    a, b = heterogeneous_family(3, seed=4), heterogeneous_family(3, seed=4)
    assert all(np.array_equal(x.features, y.features) for x, y in zip(a, b))


def test_gpr_family_stays_in_seed_box():
    seed = geometry_seed_dataset(25, seed=1)
    assert seed.targets.shape == (25, 3)
    tasks, models = gpr_task_family(seed, 6, 15, seed=2)
    assert len(models) == 3 and len(tasks) == 6
    lo, hi = seed.features.min(0), seed.features.max(0)
    for t in tasks:
        assert t.targets.shape == (15, 3) and np.all(t.targets >= 0)
        assert np.all(t.features >= lo - 1e-9) and np.all(t.features <= hi + 1e-9)
    again, _ = gpr_task_family(seed, 6, 15, seed=2)
    assert np.array_equal(again[3].targets, tasks[3].targets)


def test_gpr_family_tracks_seed_law():
    seed = geometry_seed_dataset(30, seed=0)
    # the fitted posterior mean should reproduce the seed heights closely
    _, models = gpr_task_family(seed, 1, 2, seed=0)
    Xn = normalize_features(seed.features, NormalizationBounds())
    fit = predict_mean(models[1], Xn)
    assert np.max(np.abs(fit - transform_target(seed.targets[:, 1]))) < 0.05


def test_adaptation_curve_zero_steps_matches_loss():
    theta = init_network(SINUSOID_NET, 0)
    eps = held_out_episodes(0, 3, 5, 5)
    assert len(adaptation_curve(SINUSOID_NET, theta, eps, 0.01, 4)) == 5
    held = held_out_episodes(0, 3, 5, 5)
    assert all(np.array_equal(a.query_y, b.query_y) for a, b in zip(eps, held))


@pytest.mark.parametrize("algo", ["maml", "reptile"])
def test_sinusoid_benchmark_smoke(algo):
    ck, report = run_sinusoid_benchmark(algo, seed=0, max_iterations=3, n_test=4)
    assert report["iterations"] == 3 and len(ck.history) == 3
    assert len(report["adaptation_curve"]) == 11
    _, again = run_sinusoid_benchmark(algo, seed=0, max_iterations=3, n_test=4)
    assert again == report


def test_sinusoid_benchmark_plateau_stop():
    _, report = run_sinusoid_benchmark("maml", max_iterations=100, n_test=2, plateau_window=5,
                                       plateau_patience=1, plateau_tol=0.99)
    assert report["stopped_on_plateau"] and report["iterations"] == 10


def test_sinusoid_benchmark_errors():
    with pytest.raises(ConfigError):
        run_sinusoid_benchmark("sgd")
    with pytest.raises(ConfigError):
        run_sinusoid_benchmark("maml", max_iterations=0)
