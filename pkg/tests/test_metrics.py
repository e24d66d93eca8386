"""Metric oracles and statistical procedure properties."""

import numpy as np
import pytest

from slidelm import metrics as M
from tests_helpers import brute_force_auc, brute_force_c_index

rng = np.random.default_rng(8)


def test_auc_perfect_separation():
    assert M.auc(np.array([0.9, 0.8, 0.2, 0.1]), np.array([1, 1, 0, 0])) == 1.0


def test_auc_all_equal_scores():
    assert M.auc(np.ones(10), np.array([1] * 4 + [0] * 6)) == 0.5


def test_auc_single_class_rejected():
    with pytest.raises(ValueError):
        M.auc(np.arange(4.0), np.ones(4))


@pytest.mark.parametrize("n", [10, 57, 200])
def test_auc_matches_brute_force(n):
    scores = np.round(rng.standard_normal(n), 1)  # coarse: force ties
    labels = rng.integers(0, 2, size=n)
    if labels.min() == labels.max():
        labels[0] = 1 - labels[0]
    assert M.auc(scores, labels) == pytest.approx(
        brute_force_auc(scores, labels), abs=1e-12)


def test_auc_monotone_transform_invariant():
    scores = rng.standard_normal(80)
    labels = rng.integers(0, 2, size=80)
    labels[:2] = [0, 1]
    a = M.auc(scores, labels)
    assert M.auc(np.exp(scores) * 3 + 1, labels) == pytest.approx(a, abs=1e-12)


def test_auc_multiclass_one_vs_one():
    # three classes, probabilities concentrated on the true class
    probs = np.array([[0.8, 0.1, 0.1], [0.7, 0.2, 0.1], [0.1, 0.8, 0.1],
                      [0.2, 0.6, 0.2], [0.1, 0.2, 0.7], [0.0, 0.3, 0.7]])
    labels = np.array([0, 0, 1, 1, 2, 2])
    assert M.auc(probs, labels) == 1.0
    # compare against pairwise Hand-Till built on the brute-force binary AUC
    probs = rng.dirichlet(np.ones(3), size=40)
    labels = rng.integers(0, 3, size=40)
    labels[:3] = [0, 1, 2]
    pair_aucs = []
    for a in range(3):
        for b in range(a + 1, 3):
            sel = (labels == a) | (labels == b)
            y = (labels[sel] == a).astype(int)
            pair_aucs.append(0.5 * (brute_force_auc(probs[sel, a], y)
                                    + brute_force_auc(probs[sel, b], 1 - y)))
    assert M.auc(probs, labels) == pytest.approx(np.mean(pair_aucs), abs=1e-12)


def test_balanced_accuracy_cases():
    y = np.array([0, 0, 0, 1, 1, 2])
    assert M.balanced_accuracy(y.copy(), y) == 1.0
    assert M.balanced_accuracy(np.zeros(6, int), y) == pytest.approx(1 / 3)
    pred = np.array([0, 0, 1, 1, 0, 2])
    recalls = [2 / 3, 1 / 2, 1.0]
    assert M.balanced_accuracy(pred, y) == pytest.approx(np.mean(recalls))


def test_balanced_accuracy_class_size_invariant():
    y1 = np.array([0] * 10 + [1] * 10)
    p1 = np.array([0] * 8 + [1] * 2 + [1] * 5 + [0] * 5)
    y2 = np.array([0] * 100 + [1] * 10)
    p2 = np.array([0] * 80 + [1] * 20 + [1] * 5 + [0] * 5)
    assert M.balanced_accuracy(p1, y1) == pytest.approx(M.balanced_accuracy(p2, y2))


def test_amr_four_class_random_is_zero():
    r = np.random.default_rng(0)
    labels = r.integers(0, 4, size=4000)
    pred = r.integers(0, 4, size=4000)
    amr = M.adjusted_mean_recall(pred, labels, chance=0.25)
    assert abs(amr) < 0.05


def test_amr_perfect_is_one():
    labels = np.tile(np.arange(4), 20)
    assert M.adjusted_mean_recall(labels.copy(), labels, chance=0.25) == 1.0


def test_amr_binary_formula():
    # mean recall 0.75 at chance 0.5 -> 0.5
    labels = np.array([0] * 20 + [1] * 20)
    pred = np.array([0] * 20 + [1] * 10 + [0] * 10)
    assert M.adjusted_mean_recall(pred, labels, chance=0.5) == pytest.approx(0.5)


def test_amr_support_filter():
    labels = np.array([0] * 50 + [1] * 3)
    pred = labels.copy()
    pred[:25] = 1  # class 0 recall 0.5; class 1 below support
    amr = M.adjusted_mean_recall(pred, labels, chance=0.5, min_support=10)
    assert amr == pytest.approx(0.0)
    with pytest.raises(ValueError):
        M.adjusted_mean_recall(pred[:5], labels[:5], chance=0.5, min_support=10)


def test_c_index_perfect_and_constant():
    time = np.array([5, 4, 3, 2, 1])
    event = np.ones(5, bool)
    risk = np.array([1.0, 2.0, 3.0, 4.0, 5.0])  # anti-ordered with time
    assert M.c_index(risk, time, event) == 1.0
    assert M.c_index(np.zeros(5), time, event) == 0.5


def test_c_index_needs_comparable_pairs():
    with pytest.raises(ValueError):
        M.c_index(np.arange(3.0), np.ones(3), np.zeros(3, bool))


@pytest.mark.parametrize("n", [5, 30, 100])
def test_c_index_matches_enumeration(n):
    risk = np.round(rng.standard_normal(n), 1)
    time = rng.integers(0, 20, size=n)
    event = rng.integers(0, 2, size=n).astype(bool)
    event[0] = True
    time[0] = 0
    assert M.c_index(risk, time, event) == pytest.approx(
        brute_force_c_index(risk, time, event), abs=1e-12)


def test_c_index_monotone_invariance():
    risk = rng.standard_normal(40)
    time = rng.integers(0, 30, size=40)
    event = rng.integers(0, 2, size=40).astype(bool)
    event[0], time[0] = True, 0
    a = M.c_index(risk, time, event)
    assert M.c_index(np.tanh(risk) * 7, time, event) == pytest.approx(a)


def test_bootstrap_constant_metric_zero_width():
    lo, hi = M.bootstrap_ci(lambda x: 1.23, (np.arange(10),), n_iter=50, seed=3)
    assert lo == hi == 1.23


def test_bootstrap_deterministic_under_seed():
    x = rng.standard_normal(50)
    a = M.bootstrap_ci(np.mean, (x,), n_iter=200, seed=9)
    b = M.bootstrap_ci(np.mean, (x,), n_iter=200, seed=9)
    assert a == b
    c = M.bootstrap_ci(np.mean, (x,), n_iter=200, seed=10)
    assert a != c


def test_bootstrap_redraws_on_degenerate_resample():
    scores = np.array([0.1, 0.9, 0.4, 0.6])
    labels = np.array([0, 1, 0, 1])
    lo, hi = M.bootstrap_ci(M.auc, (scores, labels), n_iter=100, seed=0)
    assert 0.0 <= lo <= hi <= 1.0


def test_bootstrap_redraw_cap():
    def impossible(x):
        raise ValueError("never defined")

    with pytest.raises(ValueError, match="redraws"):
        M.bootstrap_ci(impossible, (np.arange(5),), n_iter=3, seed=0)


def test_permutation_identical_predictions_p_one():
    labels = rng.integers(0, 2, size=30)
    preds = rng.integers(0, 2, size=30)
    p = M.permutation_test(M.balanced_accuracy, preds, preds.copy(), labels,
                           n_iter=200, seed=4)
    assert p == 1.0


def test_permutation_deterministic():
    labels = rng.integers(0, 2, size=40)
    a = rng.integers(0, 2, size=40)
    b = rng.integers(0, 2, size=40)
    p1 = M.permutation_test(M.balanced_accuracy, a, b, labels, n_iter=300, seed=5)
    p2 = M.permutation_test(M.balanced_accuracy, a, b, labels, n_iter=300, seed=5)
    assert p1 == p2


def test_permutation_detects_real_difference():
    labels = rng.integers(0, 2, size=400)
    good = labels.copy()
    flip = rng.random(400) < 0.05
    good[flip] = 1 - good[flip]
    bad = rng.integers(0, 2, size=400)
    p = M.permutation_test(M.balanced_accuracy, good, bad, labels,
                           n_iter=500, seed=6)
    assert p < 0.01


def test_pooled_metric_micro_vs_macro():
    folds = [(np.array([1.0, 0.0]), np.array([1, 0])),
             (np.array([0.9, 0.95, 0.1]), np.array([1, 0, 0]))]
    micro = M.pooled_metric(M.auc, folds, "micro")
    macro = M.pooled_metric(M.auc, folds, "macro")
    assert micro == pytest.approx(5 / 6)
    assert macro == pytest.approx(0.5 * (1.0 + 0.5))


def test_eval_report_serialization(tmp_path):
    r = M.EvalReport("auc", 0.8, 0.7, 0.9, 0.95, 100, {"vs": 0.03})
    r.validate()
    M.write_reports_json({"task": r}, tmp_path / "r.json")
    M.write_reports_csv({"task": r}, tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().strip().splitlines()
    assert lines[0] == "task,metric,point,lo,hi,n"
    assert lines[1].startswith("task,auc,0.800000")
    bad = M.EvalReport("auc", 0.95, 0.7, 0.9, 0.95, 10)
    with pytest.raises(ValueError):
        bad.validate()
