"""Feature-selection cascade: variance threshold, chi-squared filter, RFE.

The two filters accept dense arrays or scipy sparse matrices. RFE works on
a dense matrix of the features that survived the filters and applies SMOTE
inside every training fold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import chi2

from .metrics import rank_auc, stratified_folds
from .models import ModelSpec, train
from .smote import SmoteConfig, smote


class SelectionError(ValueError):
    pass


def _column_sums(X, rows=None):
    if rows is not None:
        X = X[rows]
    return np.asarray(X.sum(axis=0)).ravel().astype(float)


def column_variances(X) -> np.ndarray:
    """Population variance of every column."""
    n = X.shape[0]
    mean = _column_sums(X) / n
    if sp.issparse(X):
        sq = np.asarray(X.multiply(X).sum(axis=0)).ravel() / n
    else:
        sq = np.einsum("ij,ij->j", X, X) / n
    return np.maximum(sq - mean ** 2, 0.0)


def variance_filter(X, names: Sequence[str], threshold: float = 0.03):
    """Keep columns with population variance >= ``threshold``.

    Returns ``(retained_names, variances)``; ``variances`` covers all columns.
    """
    if X.shape[0] == 0 or X.shape[1] == 0:
        raise SelectionError("empty matrix")
    if len(names) != X.shape[1]:
        raise SelectionError("names do not match the number of columns")
    var = column_variances(X)
    return [n for n, v in zip(names, var) if v >= threshold], var


def chi2_scores(X, y):
    """Chi-squared statistic and upper-tail p-value per column.

    Observed values are the per-class column sums; expected values split the
    column total in proportion to the class sizes. One degree of freedom.
    """
    y = np.asarray(y).astype(bool)
    if len(y) != X.shape[0]:
        raise SelectionError("row count of X and labels differ")
    if y.all() or not y.any():
        raise SelectionError("both classes must be present")
    if (X.min() if X.shape[0] else 0) < 0:
        raise SelectionError("chi-squared filter needs non-negative features")
    obs = np.vstack([_column_sums(X, np.flatnonzero(~y)), _column_sums(X, np.flatnonzero(y))])
    total = obs.sum(axis=0)
    frac = np.array([(~y).mean(), y.mean()])[:, None]
    exp = frac * total
    with np.errstate(divide="ignore", invalid="ignore"):
        stat = np.where(total > 0, ((obs - exp) ** 2 / np.where(exp > 0, exp, 1)).sum(axis=0), 0.0)
    p = np.where(total > 0, chi2.sf(stat, df=1), 1.0)
    return stat, np.clip(p, 0.0, 1.0)


def chi2_filter(X, y, names: Sequence[str], alpha: float = 0.05):
    """Keep columns with p < ``alpha``. Returns ``(retained, statistics, p_values)``."""
    if len(names) != X.shape[1]:
        raise SelectionError("names do not match the number of columns")
    stat, p = chi2_scores(X, y)
    return [n for n, pv in zip(names, p) if pv < alpha], stat, p


@dataclass
class RfeResult:
    kind: str
    trajectory: List[tuple]            # (n_features, mean_cv_auc)
    subsets: List[List[str]]           # feature set evaluated at each step
    best_features: List[str]
    best_auc: float

    def to_dict(self) -> dict:
        return {
            "trajectory": [{"n_features": n, "mean_auc": a} for n, a in self.trajectory],
            "best_features": self.best_features,
            "best_auc": self.best_auc,
        }


def _prune_order(names, weights):
    """Indices sorted for removal: lowest weight first, ties drop the later name."""
    name_rank = np.argsort(np.argsort(np.array(names, dtype=object)))
    return np.lexsort((-name_rank, np.asarray(weights)))


def rfe(spec: ModelSpec, X, y, names: Sequence[str], prune_fraction: float = 0.10,
        folds: int = 5, smote_config: Optional[SmoteConfig] = SmoteConfig(), seed: int = 0,
        progress=None) -> RfeResult:
    """Recursive feature elimination scored by stratified cross-validated AUC.

    At each step the fold models are trained on the current features and
    their weights are averaged; the lowest ``ceil(prune_fraction * m)``
    (at least one) are dropped. Elimination stops at two features. The best
    subset maximizes mean AUC, preferring fewer features on ties.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(int)
    names = list(names)
    if len(names) != X.shape[1]:
        raise SelectionError("names do not match the number of columns")
    if not 0 < prune_fraction < 1:
        raise SelectionError("prune_fraction must be in (0, 1)")
    if len(names) < 1:
        raise SelectionError("no features to eliminate")
    splits = list(stratified_folds(y, folds, seed))

    cols = np.arange(len(names))
    trajectory, subsets = [], []
    while True:
        aucs, weights = [], np.zeros(len(cols))
        for k, (tr, va) in enumerate(splits):
            Xt, yt = X[np.ix_(tr, cols)], y[tr]
            if smote_config is not None:
                cfg = SmoteConfig(smote_config.k_neighbors, smote_config.target_ratio,
                                  smote_config.seed + 1000 * k, smote_config.standardize)
                Xt, yt = smote(Xt, yt, cfg)
            model = train(spec, Xt, yt, [names[c] for c in cols])
            aucs.append(rank_auc(y[va], model.predict_proba(X[np.ix_(va, cols)])))
            weights += model.feature_weights()
        current = [names[c] for c in cols]
        trajectory.append((len(cols), float(np.mean(aucs))))
        subsets.append(current)
        if progress is not None:
            progress(len(cols), trajectory[-1][1])
        m = len(cols)
        if m <= 2:
            break
        drop = min(max(1, math.ceil(prune_fraction * m - 1e-12)), m - 2)
        order = _prune_order(current, weights / len(splits))
        cols = np.sort(np.delete(cols, order[:drop]))

    best_auc = max(a for _, a in trajectory)
    best = min((i for i, (_, a) in enumerate(trajectory) if a == best_auc),
               key=lambda i: trajectory[i][0])
    return RfeResult(spec.kind, trajectory, subsets, subsets[best], best_auc)


@dataclass
class SelectionReport:
    variance_retained: List[str]
    chi2_retained: List[str]
    variances: Dict[str, float]
    chi2_statistics: Dict[str, float]
    p_values: Dict[str, float]
    rfe: Dict[str, RfeResult] = field(default_factory=dict)

    def mean_p_value(self, kind: str) -> float:
        """Average chi-squared p-value over a model's chosen features."""
        feats = self.rfe[kind].best_features
        return float(np.mean([self.p_values[f] for f in feats])) if feats else float("nan")

    def to_dict(self) -> dict:
        return {
            "stages": {"variance": self.variance_retained, "chi2": self.chi2_retained},
            "variances": self.variances,
            "chi2": {f: {"statistic": self.chi2_statistics[f], "p_value": self.p_values[f]}
                     for f in self.chi2_statistics},
            "rfe": {k: {**r.to_dict(), "mean_p_value": self.mean_p_value(k)}
                    for k, r in self.rfe.items()},
        }

    def write(self, directory) -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        (d / "selection_report.json").write_text(json.dumps(self.to_dict(), indent=2) + "\n")
        for kind, r in self.rfe.items():
            (d / f"retained_features_{kind}.txt").write_text("".join(f + "\n" for f in r.best_features))

    @classmethod
    def read(cls, directory) -> "SelectionReport":
        doc = json.loads((Path(directory) / "selection_report.json").read_text())
        rfe_results = {}
        for kind, r in doc["rfe"].items():
            traj = [(t["n_features"], t["mean_auc"]) for t in r["trajectory"]]
            rfe_results[kind] = RfeResult(kind, traj, [], list(r["best_features"]), r["best_auc"])
        return cls(doc["stages"]["variance"], doc["stages"]["chi2"], doc["variances"],
                   {f: v["statistic"] for f, v in doc["chi2"].items()},
                   {f: v["p_value"] for f, v in doc["chi2"].items()}, rfe_results)


def run_filters(X, y, names: Sequence[str], variance_threshold: float = 0.03,
                alpha: float = 0.05) -> SelectionReport:
    """Variance threshold then chi-squared on the survivors."""
    kept_v, var = variance_filter(X, names, variance_threshold)
    pos = {n: j for j, n in enumerate(names)}
    idx = [pos[n] for n in kept_v]
    if kept_v:
        kept_c, stat, p = chi2_filter(X[:, idx], y, kept_v, alpha)
    else:
        kept_c, stat, p = [], [], []
    return SelectionReport(
        kept_v, kept_c,
        {n: float(v) for n, v in zip(names, var)},
        {n: float(s) for n, s in zip(kept_v, stat)},
        {n: float(q) for n, q in zip(kept_v, p)},
    )
