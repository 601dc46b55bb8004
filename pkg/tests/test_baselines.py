import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibgan.baselines import (
    class_weighted_loss,
    cross_entropy,
    downsample,
    fit_classifier,
    run_baseline,
    smote,
    smote_interpolate,
    upsample,
)
from ibgan.dataio import Dataset
from ibgan.nets import LayerSpec, NetSpec
from ibgan.trainer import TrainConfig, init_state


def make(counts, k=2, m=5, seed=0):
    rng = np.random.default_rng(seed)
    y = np.concatenate([np.full(n, c) for c, n in enumerate(counts)])
    return Dataset(rng.standard_normal((len(y), k, m)), y, len(counts))


def rows(ds):
    return {tuple(r) for r in ds.flat()}


@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_uniform_weights_equal_cross_entropy(seed, n):
    rng = np.random.default_rng(seed)
    c, y = rng.dirichlet(np.ones(n), 7), rng.integers(0, n, 7)
    assert class_weighted_loss(c, y, np.full(n, 1 / n)).data == cross_entropy(c, y).data


def test_minority_weight_ratio():
    c = np.array([[0.5, 0.5], [0.5, 0.5]])
    a = class_weighted_loss(c[:1], [0], [0.9, 0.1]).data
    b = class_weighted_loss(c[:1], [1], [0.9, 0.1]).data
    assert abs(b / a - 9.0) < 1e-12
    assert class_weighted_loss(np.eye(2), [0, 1], [0.9, 0.1]).data == 0.0
    with pytest.raises(ValueError):
        class_weighted_loss(c, [0, 1], [1.0, 0.0])


def test_upsample():
    ds = make([100, 25])
    out = upsample(ds, np.random.default_rng(0))
    assert out.counts().tolist() == [100, 100]
    assert np.array_equal(out.X[: len(ds)], ds.X)
    assert rows(out) == rows(ds)
    bal = make([10, 10])
    assert upsample(bal, np.random.default_rng(0)).counts().tolist() == [10, 10]
    a, b = upsample(ds, np.random.default_rng(3)), upsample(ds, np.random.default_rng(3))
    assert np.array_equal(a.X, b.X)


def test_downsample():
    ds = make([100, 25])
    out = downsample(ds, np.random.default_rng(0))
    assert out.counts().tolist() == [25, 25]
    assert rows(out) <= rows(ds)
    bal = make([10, 10])
    assert np.array_equal(downsample(bal, np.random.default_rng(0)).X, bal.X)
    a, b = downsample(ds, np.random.default_rng(3)), downsample(ds, np.random.default_rng(3))
    assert np.array_equal(a.X, b.X)


def test_smote_interpolate_example():
    assert np.array_equal(smote_interpolate(np.zeros(2), np.full(2, 2.0), 0.5), [1, 1])


def test_smote_counts_and_labels():
    ds = make([100, 25])
    out = smote(ds, np.random.default_rng(0))
    assert out.counts().tolist() == [100, 100]
    assert np.array_equal(out.X[: len(ds)], ds.X)
    assert (out.y[len(ds):] == 1).all()


def test_smote_identical_pair():
    X = np.zeros((6, 1, 3))
    X[4:] = 7.0
    ds = Dataset(X, np.array([0, 0, 0, 0, 1, 1]), 2)
    out = smote(ds, np.random.default_rng(0))
    assert np.all(out.X[6:] == 7.0)


def test_smote_singleton_class_duplicates():
    ds = make([6, 1])
    out = smote(ds, np.random.default_rng(0))
    assert out.counts().tolist() == [6, 6]
    assert np.all(out.flat()[out.y == 1] == ds.flat()[ds.y == 1])
    assert any("duplication" in w for w in out.warnings)


def test_smote_neighbours_are_nearest():
    # 1-D points; with k=1 each synthetic must sit between a point and its nearest neighbour
    X = np.array([0.0, 1.0, 10.0, 11.5, 0, 0, 0, 0, 0, 0]).reshape(-1, 1, 1)
    y = np.array([1, 1, 1, 1, 0, 0, 0, 0, 0, 0])
    out, parents = smote(Dataset(X, y, 2), np.random.default_rng(0), k_neighbors=1,
                         return_parents=True)
    pairs = {(int(a), int(b)) for a, b, _ in parents}
    assert pairs <= {(0, 1), (1, 0), (2, 3), (3, 2)}


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_smote_on_segment(seed):
    ds = make([40, 8], seed=seed)
    out, parents = smote(ds, np.random.default_rng(seed), return_parents=True)
    flat = ds.flat()
    for s, (i, j, u) in zip(out.flat()[len(ds):], parents):
        a, b = flat[int(i)], flat[int(j)]
        assert ds.y[int(i)] == ds.y[int(j)] and 0 <= u < 1
        resid = np.linalg.norm(s - a) + np.linalg.norm(b - s) - np.linalg.norm(b - a)
        assert abs(resid) < 1e-9


TINY = NetSpec((LayerSpec("conv1d", 4, None), LayerSpec("dense", 6)))


def test_fit_classifier_shares_initialization():
    ds = make([30, 10], seed=1)
    cfg = TrainConfig(epochs=0, seed=5, classifier=TINY)
    C, hist = fit_classifier(ds, cfg)
    trip = init_state(ds, cfg).C
    assert hist == []
    assert all(np.array_equal(C.params[k], trip.params[k]) for k in C.params)


@pytest.mark.parametrize("kind", ["plain", "class_weights", "upsample", "downsample", "smote"])
def test_run_baseline(kind):
    ds = make([30, 10], seed=2)
    cfg = TrainConfig(epochs=2, n_mb=8, classifier=TINY)
    C, hist = run_baseline(kind, ds, cfg)
    assert len(hist) == 2 and all(math.isfinite(h["loss_C"]) for h in hist)
    C2, hist2 = run_baseline(kind, ds, cfg)
    assert hist == hist2


def test_unknown_baseline():
    with pytest.raises(ValueError):
        run_baseline("adasyn", make([5, 5]), TrainConfig())
