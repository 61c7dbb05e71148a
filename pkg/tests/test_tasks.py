import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from metareg.errors import ConfigError, DataError
from metareg.tasks import (NormalizationBounds, assign_cv_folds, denormalize_features, inverse_transform_target,
                           load_task_csv, normalize_features, prepare_task, resample_seeds, sample_sinusoid_task,
                           split_support_query, support_size, transform_target, write_task_csv)


def test_normalize_examples():
    b = NormalizationBounds()
    assert b.maxima == (3000.0, 2000.0, 25.0, 10.0)
    np.testing.assert_array_equal(normalize_features([3000, 2000, 25, 10], b), [1, 1, 1, 1])
    np.testing.assert_array_equal(normalize_features([0, 0, 0, 0], b), [0, 0, 0, 0])
    np.testing.assert_array_equal(normalize_features([1500, 1000, 12.5, 5], b), [0.5, 0.5, 0.5, 0.5])


def test_normalize_out_of_range():
    with pytest.raises(DataError):
        normalize_features([3001, 0, 0, 0])
    with pytest.raises(DataError) as exc:
        normalize_features([[10, 10, 1, 1], [10, -1, 1, 1]])
    assert exc.value.row == 2


@settings(max_examples=50)
@given(st.lists(st.floats(0, 1), min_size=4, max_size=4))
def test_normalize_roundtrip(fracs):
    b = NormalizationBounds()
    raw = np.array(fracs) * b.as_array()
    back = denormalize_features(normalize_features(raw, b), b)
    assert np.max(np.abs(back - raw)) <= 1e-12 * 3000


def test_transform_examples():
    assert transform_target(0.0) == 0.0
    assert transform_target(math.e - 1) == pytest.approx(1.0, abs=1e-15)
    for h in (0.1, 0.5, 2.2):
        assert abs(inverse_transform_target(transform_target(h)) - h) <= 1e-12
    with pytest.raises(DataError):
        transform_target(-1.0)


def _write(tmp_path, text, name="t.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_well_formed(tmp_path):
    p = _write(tmp_path, "power_w,speed_mm_min,powder_g_min,wire_g_min,height_mm\n"
                         "1000,600,8,0,0.8\n1500,900,10,0,0.7\n2000,500,12,0,1.4\n")
    t = load_task_csv(p, task_id="a", feedstock="powder")
    assert t.n == 3 and t.task_id == "a"
    np.testing.assert_array_equal(t.targets, [0.8, 0.7, 1.4])


def test_load_missing_optional_column(tmp_path):
    p = _write(tmp_path, "power_w,speed_mm_min,powder_g_min,height_mm\n1000,600,8,0.8\n1200,700,6,0.5\n")
    t = load_task_csv(p)
    assert np.all(t.features[:, 3] == 0)
    assert t.feedstock == "powder"


def test_load_infers_wire(tmp_path):
    p = _write(tmp_path, "power_w,speed_mm_min,wire_g_min,height_mm\n1000,600,3,0.8\n")
    t = load_task_csv(p)
    assert t.feedstock == "wire" and np.all(t.features[:, 2] == 0)


def test_load_negative_height_names_row(tmp_path):
    p = _write(tmp_path, "power_w,speed_mm_min,height_mm\n1000,600,0.8\n1000,600,-1\n")
    with pytest.raises(DataError, match="row 2") as exc:
        load_task_csv(p)
    assert exc.value.row == 2


def test_load_missing_required_column(tmp_path):
    p = _write(tmp_path, "power_w,height_mm\n1000,0.8\n")
    with pytest.raises(DataError, match="speed_mm_min"):
        load_task_csv(p)


@pytest.mark.parametrize("cell", ["abc", "nan", ""])
def test_load_bad_cells(tmp_path, cell):
    p = _write(tmp_path, f"power_w,speed_mm_min,height_mm\n1000,600,0.8\n1000,{cell},0.3\n")
    with pytest.raises(DataError, match="row 2"):
        load_task_csv(p)


def test_load_feature_above_bound(tmp_path):
    p = _write(tmp_path, "power_w,speed_mm_min,height_mm\n1000,600,0.8\n1000,600,0.8\n4000,600,0.8\n")
    with pytest.raises(DataError) as exc:
        load_task_csv(p)
    assert exc.value.row == 3


def test_write_then_load_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    from metareg.tasks import TaskDataset
    t = TaskDataset("x", "powder", rng.uniform(0, 1, (6, 4)) * [3000, 2000, 25, 10], rng.uniform(0, 2, 6))
    write_task_csv(t, tmp_path / "x.csv")
    back = load_task_csv(tmp_path / "x.csv")
    assert np.array_equal(back.features, t.features) and np.array_equal(back.targets, t.targets)


@pytest.mark.parametrize("n,expected", [(25, 5), (13, 3), (36, 7)])
def test_support_sizes_match_reported_counts(n, expected):
    split = split_support_query(n, 0.2, seed=0)
    assert len(split.support_indices) == expected


def test_support_rounding_ties_up():
    assert support_size(5, 0.5) == 3
    assert support_size(10, 0.25) == 3


@settings(max_examples=100)
@given(n=st.integers(2, 200), fraction=st.floats(0.01, 0.99), seed=st.integers(0, 2**32))
def test_split_partition_property(n, fraction, seed):
    k = support_size(n, fraction)
    if k < 1 or k > n - 1:
        with pytest.raises(DataError):
            split_support_query(n, fraction, seed)
        return
    s = split_support_query(n, fraction, seed)
    sup, qry = set(s.support_indices.tolist()), set(s.query_indices.tolist())
    assert not sup & qry
    assert sup | qry == set(range(n))
    assert len(sup) == k


def test_split_errors():
    with pytest.raises(DataError):
        split_support_query(1, 0.5, 0)
    with pytest.raises(DataError):
        split_support_query(3, 0.1, 0)
    with pytest.raises(ConfigError):
        split_support_query(10, 1.0, 0)


def test_resampled_splits_reproducible_and_distinct():
    a = [tuple(split_support_query(25, 0.2, s).support_indices) for s in resample_seeds(42, 5)]
    b = [tuple(split_support_query(25, 0.2, s).support_indices) for s in resample_seeds(42, 5)]
    assert a == b
    assert len(set(a)) > 1


def test_sinusoid_ranges_and_determinism():
    for seed in range(50):
        t = sample_sinusoid_task(seed, 10)
        assert 0.1 <= t.meta["amplitude"] <= 5.0
        assert 0.0 <= t.meta["phase"] <= math.pi
        assert np.all(np.abs(t.features) <= 5.0)
        np.testing.assert_allclose(t.targets, t.meta["amplitude"] * np.sin(t.features[:, 0] + t.meta["phase"]))
    a, b = sample_sinusoid_task(3, 20), sample_sinusoid_task(3, 20)
    assert np.array_equal(a.features, b.features) and np.array_equal(a.targets, b.targets)


def test_sinusoid_forced_parameters():
    t = sample_sinusoid_task(0, 5, amplitude=1.0, phase=0.0)
    assert math.sin(math.pi / 2) == 1.0
    np.testing.assert_allclose(t.targets, np.sin(t.features[:, 0]))


def test_cv_folds_protocol():
    ids = [f"task{i}" for i in range(13)]
    folds = assign_cv_folds(ids, n_folds=5, n_val=2, seed=1)
    assert len(folds) == 5
    for train, val in folds:
        assert len(val) == 2 and len(train) == 11
        assert not set(train) & set(val)
        assert set(train) | set(val) == set(ids)
    assert folds == assign_cv_folds(ids, 5, 2, seed=1)
    # 13 tasks hold five disjoint validation pairs
    assert len({v for _, val in folds for v in val}) == 10


def test_cv_folds_error():
    with pytest.raises(ConfigError):
        assign_cv_folds(["a", "b"], 5, 2)


def test_prepare_task_applies_bounds_and_transform(tmp_path):
    from metareg.tasks import TaskDataset
    t = TaskDataset("x", "powder", [[1500, 1000, 12.5, 0]], [math.e - 1])
    X, Y = prepare_task(t, NormalizationBounds())
    np.testing.assert_allclose(X, [[0.5, 0.5, 0.5, 0.0]])
    np.testing.assert_allclose(Y, [[1.0]])
