"""Splitting, confusion-matrix metrics, ROC/AUC and model comparison."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Dict, List, Sequence

import numpy as np
import pandas as pd
from scipy.stats import rankdata


class MetricsError(ValueError):
    pass


def stratified_split(y, test_fraction: float = 0.30, seed: int = 0):
    """Stratified train/test row indices.

    Each class contributes ``round(test_fraction * class_size)`` rows to the
    test set, so per-class proportions are within one row of exact. Both
    index arrays are returned sorted.
    """
    y = np.asarray(y)
    if not 0 < test_fraction < 1:
        raise MetricsError("test_fraction must be in (0, 1)")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise MetricsError("both classes must be present")
    if counts.min() < 2:
        raise MetricsError("every class needs at least 2 members to split")
    rng = np.random.default_rng(seed)
    test = []
    for c in classes:
        rows = np.flatnonzero(y == c)
        k = int(np.floor(test_fraction * len(rows) + 0.5))
        k = min(max(k, 1), len(rows) - 1)
        test.append(rng.permutation(rows)[:k])
    test = np.sort(np.concatenate(test))
    train = np.setdiff1d(np.arange(len(y)), test)
    return train, test


def stratified_folds(y, n_folds: int = 5, seed: int = 0):
    """Yield ``(train_idx, valid_idx)`` for stratified K-fold cross-validation."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    fold_of = np.empty(len(y), dtype=np.int64)
    for c in np.unique(y):
        rows = rng.permutation(np.flatnonzero(y == c))
        fold_of[rows] = np.arange(len(rows)) % n_folds
    for k in range(n_folds):
        yield np.flatnonzero(fold_of != k), np.flatnonzero(fold_of == k)


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    no_predictions: bool = False


def confusion_counts(y_true, y_pred) -> Dict[str, int]:
    """TP/FP/FN/TN with OUD (1) as the positive class."""
    y_true = np.asarray(y_true).astype(bool)
    y_pred = np.asarray(y_pred).astype(bool)
    return {
        "tp": int(np.sum(y_true & y_pred)), "fp": int(np.sum(~y_true & y_pred)),
        "fn": int(np.sum(y_true & ~y_pred)), "tn": int(np.sum(~y_true & ~y_pred)),
    }


def _prf(tp, fp, fn):
    flagged = tp + fp == 0
    precision = 0.0 if flagged else tp / (tp + fp)
    recall = 0.0 if tp + fn == 0 else tp / (tp + fn)
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    return precision, recall, f1, flagged


def confusion_and_prf(y_true, y_pred) -> Dict[str, ClassMetrics]:
    """Per-class precision/recall/F1 keyed ``"OUD"`` and ``"NOUD"``.

    A class that is never predicted gets precision 0 and ``no_predictions``
    set (a warning is also emitted).
    """
    y_true, y_pred = np.asarray(y_true), np.asarray(y_pred)
    if len(y_true) != len(y_pred):
        raise MetricsError("label and prediction lengths differ")
    if len(y_true) == 0:
        raise MetricsError("empty input")
    c = confusion_counts(y_true, y_pred)
    out = {}
    for name, (tp, fp, fn) in (("OUD", (c["tp"], c["fp"], c["fn"])),
                               ("NOUD", (c["tn"], c["fn"], c["fp"]))):
        p, r, f, flagged = _prf(tp, fp, fn)
        if flagged:
            warnings.warn(f"no {name} predictions; precision set to 0", RuntimeWarning,
                          stacklevel=2)
        out[name] = ClassMetrics(p, r, f, tp + fn, flagged)
    return out


def rank_auc(y_true, scores) -> float:
    """AUC as the Mann-Whitney statistic: P(score_OUD > score_NOUD), ties count 1/2."""
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=float)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("AUC needs both classes")
    ranks = rankdata(s)  # midranks
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2
    return float(u / (n_pos * n_neg))


def roc_curve(y_true, scores):
    """ROC points ``(fpr, tpr, threshold)`` at every distinct score, highest first.

    The first point is ``(0, 0, inf)``. A row is predicted OUD when its score
    is ``>= threshold``.
    """
    y = np.asarray(y_true).astype(bool)
    s = np.asarray(scores, dtype=float)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricsError("ROC needs both classes")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    fpr = np.r_[0.0, fps / n_neg]
    tpr = np.r_[0.0, tps / n_pos]
    thr = np.r_[np.inf, s[last]]
    return fpr, tpr, thr


def trapezoid_auc(fpr, tpr) -> float:
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2))


def roc_auc(y_true, scores):
    """Return ``(auc, (fpr, tpr, thresholds))``; AUC from the rank statistic."""
    return rank_auc(y_true, scores), roc_curve(y_true, scores)


@dataclass
class MetricsReport:
    per_class: Dict[str, ClassMetrics]
    auc: float
    confusion: Dict[str, int]
    roc: tuple
    threshold: float = 0.5
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "auc": self.auc,
            "threshold": self.threshold,
            "confusion": self.confusion,
            "per_class": {k: vars(v) for k, v in self.per_class.items()},
            **self.extra,
        }

    def roc_frame(self) -> pd.DataFrame:
        fpr, tpr, thr = self.roc
        return pd.DataFrame({"fpr": fpr, "tpr": tpr, "threshold": thr})


def evaluate_scores(y_true, scores, threshold: float = 0.5) -> MetricsReport:
    y = np.asarray(y_true).astype(int)
    s = np.asarray(scores, dtype=float)
    pred = (s >= threshold).astype(int)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        per_class = confusion_and_prf(y, pred)
    auc, curve = roc_auc(y, s)
    return MetricsReport(per_class, auc, confusion_counts(y, pred), curve, threshold)


COMPARISON_COLUMNS = ["model", "stage", "n_features", "precision_oud", "recall_oud", "f1_oud",
                      "precision_noud", "recall_noud", "f1_noud", "auc", "best"]


def compare_models(reports: Dict[tuple, MetricsReport], n_features: Dict[tuple, int] = None
                   ) -> pd.DataFrame:
    """One row per ``(model, stage)`` with per-class P/R/F1 and AUC.

    Within each stage the row with the highest AUC is flagged ``best``
    (first in key order on ties).
    """
    if not reports:
        raise MetricsError("no reports to compare")
    rows = []
    for (model, stage), r in reports.items():
        o, no = r.per_class["OUD"], r.per_class["NOUD"]
        rows.append({
            "model": model, "stage": stage,
            "n_features": (n_features or {}).get((model, stage), np.nan),
            "precision_oud": o.precision, "recall_oud": o.recall, "f1_oud": o.f1,
            "precision_noud": no.precision, "recall_noud": no.recall, "f1_noud": no.f1,
            "auc": r.auc, "best": False,
        })
    table = pd.DataFrame(rows, columns=COMPARISON_COLUMNS)
    for stage, grp in table.groupby("stage", sort=False):
        table.loc[grp["auc"].idxmax(), "best"] = True
    return table
