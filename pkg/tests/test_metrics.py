import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn import metrics as skm

from ibgan.metrics import (
    MetricsReport,
    aggregate,
    balanced_accuracy,
    confusion_matrix,
    macro_f1,
    macro_pr_auc,
    per_class_precision_recall,
    pr_auc,
    report,
)

HAND = np.array([[8, 2], [3, 7]])


def test_balanced_accuracy_examples():
    assert balanced_accuracy(np.eye(3, dtype=int) * 4) == 1.0
    assert balanced_accuracy(HAND) == 0.75
    assert balanced_accuracy([[10, 0], [5, 0]]) == 0.5
    with pytest.raises(ValueError):
        balanced_accuracy([[1, 0], [0, 0]])


def test_macro_f1_examples():
    p, r = per_class_precision_recall(HAND)
    np.testing.assert_allclose(p, [8 / 11, 7 / 9])
    np.testing.assert_allclose(r, [0.8, 0.7])
    assert abs(macro_f1(HAND) - 0.7494) < 5e-4
    assert macro_f1(np.eye(2, dtype=int)) == 1.0
    # class 1 never predicted: its F1 is 0, class 0 has P=0.5, R=1
    assert abs(macro_f1([[5, 0], [5, 0]]) - (2 / 3) / 2) < 1e-15


def test_pr_auc_examples():
    assert abs(pr_auc([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0]) - 0.8333) < 1e-4
    assert pr_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0]) == 1.0
    assert pr_auc([0.5] * 5, [1, 0, 0, 1, 0]) == 0.4
    with pytest.raises(ValueError):
        pr_auc([0.1, 0.2], [1, 1])


def random_cm(rng, n):
    cm = rng.integers(0, 20, (n, n))
    cm[np.arange(n), rng.integers(0, n, n)] += 1
    cm[cm.sum(axis=1) == 0, 0] = 1
    return cm


def test_balanced_accuracy_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        cm = random_cm(rng, int(rng.integers(2, 6)))
        recalls = [cm[i, i] / sum(cm[i]) for i in range(len(cm))]
        assert balanced_accuracy(cm) == sum(recalls) / len(recalls)


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5), st.integers(5, 60))
def test_against_sklearn(seed, n_classes, n):
    rng = np.random.default_rng(seed)
    y = np.r_[np.arange(n_classes), rng.integers(0, n_classes, n)]
    pred = rng.integers(0, n_classes, y.size)
    cm = confusion_matrix(y, pred, n_classes)
    assert cm.sum() == y.size
    assert abs(balanced_accuracy(cm) - skm.balanced_accuracy_score(y, pred)) < 1e-12
    ref = skm.f1_score(y, pred, average="macro", labels=range(n_classes), zero_division=0)
    assert abs(macro_f1(cm) - ref) < 1e-12


@settings(max_examples=200)
@given(st.integers(0, 2**32 - 1), st.integers(4, 80), st.booleans())
def test_pr_auc_matches_sklearn(seed, n, ties):
    rng = np.random.default_rng(seed)
    labels = np.r_[0, 1, rng.integers(0, 2, n)]
    scores = rng.random(labels.size)
    if ties:
        scores = np.round(scores, 1)
    ref = skm.average_precision_score(labels, scores)
    assert abs(pr_auc(scores, labels) - ref) < 1e-12


def test_pr_auc_monotone_invariance():
    rng = np.random.default_rng(1)
    transforms = [np.exp, lambda s: s**3 + 2 * s, lambda s: 1 / (1 + np.exp(-7 * s)), np.arctan]
    for _ in range(100):
        labels = np.r_[0, 1, rng.integers(0, 2, 30)]
        scores = np.round(rng.standard_normal(labels.size), 1)
        base = pr_auc(scores, labels)
        for f in transforms:
            assert pr_auc(f(scores), labels) == base


def test_multiclass_pr_auc_is_one_vs_rest_mean():
    rng = np.random.default_rng(2)
    probs = rng.dirichlet(np.ones(3), 40)
    labels = np.r_[0, 1, 2, rng.integers(0, 3, 37)]
    want = np.mean([skm.average_precision_score(labels == c, probs[:, c]) for c in range(3)])
    assert abs(macro_pr_auc(probs, labels) - want) < 1e-12


def test_report_ranges():
    rng = np.random.default_rng(3)
    probs = rng.dirichlet(np.ones(4), 50)
    labels = np.r_[0, 1, 2, 3, rng.integers(0, 4, 46)]
    r = report(probs, labels)
    for v in (r.balanced_accuracy, r.macro_f1, r.pr_auc):
        assert 0 <= v <= 1
    assert abs(r.balanced_accuracy - np.mean(r.recall)) < 1e-15
    assert set(r.to_dict()) == {"balanced_accuracy", "macro_f1", "pr_auc", "precision", "recall"}


def test_aggregate_examples():
    reps = [MetricsReport(0.8, 0.7, 0.6), MetricsReport(0.9, 0.7, 0.6)]
    agg = aggregate(reps)
    assert abs(agg["balanced_accuracy"][0] - 0.85) < 1e-15
    assert abs(agg["balanced_accuracy"][1] - 0.0707) < 5e-5
    assert agg["macro_f1"][1] == 0.0
    assert aggregate([reps[0]])["pr_auc"] == (0.6, None)
