import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oudpipe.metrics import (
    MetricsError, compare_models, confusion_and_prf, confusion_counts, evaluate_scores, rank_auc, roc_auc,
    roc_curve, stratified_folds, stratified_split, trapezoid_auc,
)
from oracles import pair_auc


def test_prf_from_hand_counts():
    y = np.array([1, 1, 1, 0, 0])
    p = np.array([1, 1, 0, 1, 0])  # TP 2, FP 1, FN 1, TN 1
    m = confusion_and_prf(y, p)["OUD"]
    assert (m.precision, m.recall, m.f1) == pytest.approx((2 / 3, 2 / 3, 2 / 3))
    assert confusion_counts(y, p) == {"tp": 2, "fp": 1, "fn": 1, "tn": 1}
    assert confusion_and_prf(y, p)["NOUD"].support == 2


def test_no_predictions_flag():
    with pytest.warns(RuntimeWarning):
        m = confusion_and_prf([1, 0, 0], [0, 0, 0])
    assert m["OUD"].precision == 0 and m["OUD"].no_predictions and not m["NOUD"].no_predictions


@pytest.mark.parametrize("scores,labels,auc", [
    ([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0], 1.0),
    ([0.5] * 4, [1, 0, 1, 0], 0.5),
    ([0.9, 0.4, 0.5, 0.1], [1, 1, 0, 0], 0.75),
])
def test_auc_worked_examples(scores, labels, auc):
    assert rank_auc(labels, scores) == auc


def test_auc_equals_pair_enumeration_exactly():
    rng = np.random.default_rng(0)
    for _ in range(200):
        n = int(rng.integers(2, 51))
        y = rng.integers(0, 2, n)
        y[0], y[1] = 0, 1
        s = rng.integers(0, 6, n) / 5 if rng.random() < 0.5 else rng.random(n)
        assert rank_auc(y, s) == pair_auc(y.tolist(), s.tolist())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.integers(0, 8)), min_size=2, max_size=40))
def test_auc_invariants(rows):
    y = np.array([r[0] for r in rows], dtype=int)
    if y.all() or not y.any():
        return
    s = np.array([r[1] for r in rows], dtype=float)
    auc = rank_auc(y, s)
    assert 0 <= auc <= 1
    assert rank_auc(y, np.exp(3 * s) + 7) == pytest.approx(auc, abs=1e-15)
    assert rank_auc(1 - y, s) == pytest.approx(1 - auc, abs=1e-15)
    fpr, tpr, _ = roc_curve(y, s)
    assert trapezoid_auc(fpr, tpr) == pytest.approx(auc, abs=1e-12)
    assert fpr[-1] == tpr[-1] == 1.0
    assert (np.diff(fpr) >= 0).all() and (np.diff(tpr) >= 0).all()


def test_recall_equals_tpr_at_threshold():
    rng = np.random.default_rng(1)
    y = rng.integers(0, 2, 300)
    s = np.round(rng.random(300) * 0.6 + 0.3 * y, 2)
    rep = evaluate_scores(y, s, threshold=0.5)
    fpr, tpr, thr = rep.roc
    k = np.flatnonzero(thr >= 0.5)[-1]
    assert rep.per_class["OUD"].recall == pytest.approx(tpr[k])
    assert sum(rep.confusion.values()) == 300
    assert rep.roc_frame().shape[1] == 3
    assert roc_auc(y, s)[0] == rep.auc


def test_single_class_errors():
    with pytest.raises(MetricsError):
        rank_auc([1, 1], [0.1, 0.2])
    with pytest.raises(MetricsError):
        roc_curve([0, 0], [0.1, 0.2])
    with pytest.raises(MetricsError):
        confusion_and_prf([], [])


def test_stratified_split_proportions():
    y = np.r_[np.ones(15, int), np.zeros(985, int)]
    tr, te = stratified_split(y, 0.3, 0)
    assert y[te].sum() == 5 and len(te) == 5 + 296  # round-half-up per class
    assert not set(tr) & set(te) and len(tr) + len(te) == 1000
    assert np.array_equal(te, stratified_split(y, 0.3, 0)[1])
    assert not np.array_equal(te, stratified_split(y, 0.3, 1)[1])
    with pytest.raises(MetricsError):
        stratified_split(np.r_[1, np.zeros(9, int)])


def test_stratified_folds_partition():
    y = np.r_[np.ones(23, int), np.zeros(77, int)]
    seen = []
    for tr, va in stratified_folds(y, 5, 3):
        assert abs(y[va].sum() - 23 / 5) < 1
        assert not set(tr) & set(va)
        seen.extend(va)
    assert sorted(seen) == list(range(100))


def test_compare_models_flags_best_per_stage():
    y = np.array([1, 0, 1, 0, 0, 1])
    good, bad = np.array([0.9, 0.1, 0.8, 0.2, 0.3, 0.7]), np.array([0.5, 0.6, 0.4, 0.5, 0.1, 0.2])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        reports = {("LOGISTIC", "chi2"): evaluate_scores(y, bad), ("FOREST", "chi2"): evaluate_scores(y, good),
                   ("LOGISTIC", "rfe"): evaluate_scores(y, good)}
    table = compare_models(reports, {("FOREST", "chi2"): 12})
    best = table.loc[table["best"], ["model", "stage"]].values.tolist()
    assert best == [["FOREST", "chi2"], ["LOGISTIC", "rfe"]]
    assert table.loc[1, "n_features"] == 12
    metric_cols = [c for c in table.columns if c.startswith(("precision", "recall", "f1", "auc"))]
    assert ((table[metric_cols] >= 0) & (table[metric_cols] <= 1)).all().all()
    with pytest.raises(MetricsError):
        compare_models({})


def test_split_of_one_percent_minority():
    y = np.r_[np.ones(10, int), np.zeros(990, int)]
    tr, te = stratified_split(y, 0.3, 5)
    assert len(te) == 300 and y[te].sum() == 3


def test_degenerate_all_noud_predictor():
    y = np.r_[np.ones(1, int), np.zeros(99, int)]
    with pytest.warns(RuntimeWarning):
        m = confusion_and_prf(y, np.zeros(100, int))
    assert m["NOUD"].recall == 1.0 and m["OUD"].recall == 0.0


def test_perfect_predictions():
    y = np.array([1, 0, 1, 0])
    m = confusion_and_prf(y, y)
    assert all((c.precision, c.recall, c.f1) == (1.0, 1.0, 1.0) for c in m.values())
