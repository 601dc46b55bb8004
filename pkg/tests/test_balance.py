import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ibgan.balance import apply_mask, draw_mask, mask_pool_probabilities, noise, weighted_resample
from ibgan.dataio import Dataset


def make(counts, m=4):
    y = np.concatenate([np.full(n, c) for c, n in enumerate(counts)])
    X = np.arange(len(y) * m, dtype=float).reshape(len(y), 1, m)
    return Dataset(X, y, len(counts))


def test_mask_pool_probabilities():
    np.testing.assert_allclose(mask_pool_probabilities([0.9, 0.1]), [0.1, 0.9])
    assert np.allclose(mask_pool_probabilities([0.25] * 4), 0.25)
    np.testing.assert_allclose(mask_pool_probabilities([0.5, 0.3, 0.2], "exact"),
                               [1 / 6, 11 / 30, 14 / 30])
    with pytest.raises(ValueError):
        mask_pool_probabilities([0.8, 0.1, 0.1], "exact")


@given(st.lists(st.floats(0.01, 1.0), min_size=3, max_size=6))
def test_inverse_rule_orders_inversely(raw):
    w = np.asarray(raw) / np.sum(raw)
    q = mask_pool_probabilities(w)
    assert abs(q.sum() - 1) < 1e-12
    order = np.argsort(w, kind="stable")
    assert np.all(np.diff(q[order]) <= 1e-15)


@given(st.lists(st.floats(0.01, 1.0), min_size=2, max_size=2))
def test_two_class_union_is_uniform(raw):
    w = np.asarray(raw) / np.sum(raw)
    np.testing.assert_allclose((w + mask_pool_probabilities(w)) / 2, [0.5, 0.5], atol=1e-12)


def test_resample_labels_are_true_labels():
    ds = make([9, 3])
    bp = weighted_resample(ds, [0.75, 0.25], 50, np.random.default_rng(0))
    assert np.array_equal(bp.real_y, ds.y[bp.real_idx])
    assert np.array_equal(bp.mask_y, ds.y[bp.mask_idx])
    assert len(bp.real_idx) == len(bp.mask_idx) == 50
    with pytest.raises(ValueError):
        weighted_resample(ds, [0.75, 0.25], 0, np.random.default_rng(0))


def test_resample_seeded():
    ds = make([9, 3])
    a = weighted_resample(ds, [0.75, 0.25], 20, np.random.default_rng(1))
    b = weighted_resample(ds, [0.75, 0.25], 20, np.random.default_rng(1))
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_draw_mask_extremes():
    rng = np.random.default_rng(0)
    assert not draw_mask((5, 7), 0.0, rng).any()
    assert draw_mask((5, 7), 1.0, rng).all()
    m = draw_mask((3, 3), 0.5, rng)
    assert set(np.unique(m)) <= {0.0, 1.0}
    with pytest.raises(ValueError):
        draw_mask((2,), 1.5, rng)


def test_apply_mask_examples():
    x, z = np.array([1.0, 2.0]), np.array([9.0, 9.0])
    assert np.array_equal(apply_mask(x, np.array([0.0, 1.0]), z), [1, 9])
    assert np.array_equal(apply_mask(x, np.zeros(2), z), x)
    assert np.array_equal(apply_mask(x, np.ones(2), z), z)
    with pytest.raises(ValueError):
        apply_mask(x, np.zeros(3), z)


def test_apply_mask_ignores_x_under_full_mask():
    rng = np.random.default_rng(2)
    z = rng.standard_normal(10)
    a = apply_mask(rng.standard_normal(10), np.ones(10), z)
    b = apply_mask(rng.standard_normal(10) * 100, np.ones(10), z)
    assert np.array_equal(a, b)


def test_noise_moments_and_seed():
    z = noise(10**5, np.random.default_rng(3))
    assert abs(z.mean()) < 3 / np.sqrt(1e5)
    assert abs(z.var() - 1) < 0.02
    assert np.array_equal(noise((4, 2), np.random.default_rng(8)), noise((4, 2), np.random.default_rng(8)))


def test_mask_independent_of_data():
    rng = np.random.default_rng(4)
    x = rng.standard_normal((10**4, 8)) * rng.uniform(0.1, 5, (10**4, 1))
    mask = draw_mask(x.shape, 0.3, rng)
    assert abs(np.corrcoef(mask.ravel(), np.abs(x).ravel())[0, 1]) < 0.02
