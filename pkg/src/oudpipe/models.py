"""Four classifiers behind one interface.

``train(spec, X, y, features)`` returns a fitted model exposing
``predict_proba`` (probability of OUD) and ``feature_weights`` (absolute
coefficients for the logistic model, normalized impurity decrease for the
tree kinds). Fitted models serialize to a versioned JSON document.

Trees are grown with scikit-learn's CART splitter and immediately copied
into plain arrays; prediction, importances, bagging and boosting are done
here on those arrays.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit
from sklearn.tree import DecisionTreeClassifier, DecisionTreeRegressor

from .features import AgeBucket, ChronicityLevel, MALE

LOGISTIC, TREE, FOREST, BOOSTING = "LOGISTIC", "TREE", "FOREST", "BOOSTING"
KINDS = (LOGISTIC, TREE, FOREST, BOOSTING)
FORMAT_VERSION = 1

DEFAULT_PARAMS = {
    LOGISTIC: {"l2": 0.0, "max_iter": 100, "tol": 1e-6},
    TREE: {"max_depth": 12, "min_samples_leaf": 5},
    FOREST: {"n_estimators": 100, "max_depth": 12, "min_samples_leaf": 5,
             "max_features": "sqrt", "max_samples": 1.0},
    BOOSTING: {"n_estimators": 100, "max_depth": 3, "learning_rate": 0.1, "min_samples_leaf": 1},
}


class ModelError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ModelError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        unknown = set(self.params) - set(DEFAULT_PARAMS[self.kind])
        if unknown:
            raise ModelError(f"{self.kind}: unknown hyperparameter(s) {sorted(unknown)}")
        p = self.resolved()
        if self.kind == LOGISTIC:
            if p["l2"] < 0 or p["max_iter"] < 1 or p["tol"] <= 0:
                raise ModelError("LOGISTIC: need l2 >= 0, max_iter >= 1, tol > 0")
        else:
            if p["max_depth"] < 1 or p["min_samples_leaf"] < 1:
                raise ModelError(f"{self.kind}: need max_depth >= 1 and min_samples_leaf >= 1")
        if self.kind in (FOREST, BOOSTING) and p["n_estimators"] < 1:
            raise ModelError(f"{self.kind}: n_estimators must be >= 1")
        if self.kind == FOREST and not 0 < p["max_samples"] <= 1:
            raise ModelError("FOREST: max_samples must be in (0, 1]")
        if self.kind == BOOSTING and not 0 < p["learning_rate"] <= 1:
            raise ModelError("BOOSTING: learning_rate must be in (0, 1]")

    def resolved(self) -> dict:
        return {**DEFAULT_PARAMS[self.kind], **self.params}

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(sorted(self.params.items())), "seed": self.seed}

    @classmethod
    def from_dict(cls, d) -> "ModelSpec":
        return cls(d["kind"], dict(d.get("params", {})), int(d.get("seed", 0)))


# ---------------------------------------------------------------------------
# logistic regression
# ---------------------------------------------------------------------------

def logistic_loss_grad(w, X, y, l2: float = 0.0):
    """Mean log-loss and its gradient. ``w[0]`` is the intercept (not penalized)."""
    z = w[0] + X @ w[1:]
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z)) + 0.5 * l2 * float(w[1:] @ w[1:])
    r = (expit(z) - y) / len(y)
    grad = np.empty_like(w)
    grad[0] = r.sum()
    grad[1:] = X.T @ r + l2 * w[1:]
    return loss, grad


def _fit_logistic(X, y, l2, max_iter, tol):
    """Damped Newton iterations on the mean log-loss."""
    n, d = X.shape
    A = np.hstack([np.ones((n, 1)), X])
    w = np.zeros(d + 1)
    prev = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    w[0] = math.log(prev / (1 - prev))
    pen = np.full(d + 1, l2)
    pen[0] = 0.0
    loss, grad = logistic_loss_grad(w, X, y, l2)
    trace = [loss]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        if np.linalg.norm(grad) < tol:
            converged = True
            it -= 1
            break
        p = expit(A @ w)
        h = p * (1 - p) / n
        H = (A * h[:, None]).T @ A + np.diag(pen) + 1e-12 * np.eye(d + 1)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = w - t * step
            new_loss, new_grad = logistic_loss_grad(cand, X, y, l2)
            if new_loss <= loss - 1e-4 * t * float(grad @ step) or t < 1e-10:
                break
            t *= 0.5
        w, loss, grad = cand, new_loss, new_grad
        trace.append(loss)
    else:
        converged = np.linalg.norm(grad) < tol
    return w, {"iterations": it, "converged": bool(converged), "loss_trace": trace,
               "gradient_norm": float(np.linalg.norm(grad))}


# ---------------------------------------------------------------------------
# tree arrays
# ---------------------------------------------------------------------------

@dataclass
class TreeArrays:
    """Flat binary tree. ``value`` is P(OUD) for classification trees and the
    additive leaf score for boosting stages. Leaves have ``left == -1``."""

    left: np.ndarray
    right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray
    impurity: np.ndarray
    weight: np.ndarray

    @classmethod
    def from_sklearn(cls, est, value=None) -> "TreeArrays":
        t = est.tree_
        if value is None:
            v = t.value[:, 0, :]
            classes = list(est.classes_)
            if len(classes) == 1:
                value = np.full(t.node_count, float(classes[0] == 1))
            else:
                value = v[:, classes.index(1)] / v.sum(axis=1)
        return cls(t.children_left.astype(np.int64), t.children_right.astype(np.int64),
                   t.feature.astype(np.int64), t.threshold.astype(float),
                   np.asarray(value, dtype=float), t.impurity.astype(float),
                   t.weighted_n_node_samples.astype(float))

    def apply(self, X) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        rows = np.arange(X.shape[0])
        while True:
            inner = self.left[node] != -1
            if not inner.any():
                return node
            r, nd = rows[inner], node[inner]
            go_left = X[r, self.feature[nd]] <= self.threshold[nd]
            node[inner] = np.where(go_left, self.left[nd], self.right[nd])

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]

    def importances(self, n_features: int) -> np.ndarray:
        """Weighted impurity decrease per feature, normalized to sum 1."""
        out = np.zeros(n_features)
        inner = np.flatnonzero(self.left != -1)
        l, r = self.left[inner], self.right[inner]
        dec = (self.weight[inner] * self.impurity[inner] - self.weight[l] * self.impurity[l]
               - self.weight[r] * self.impurity[r])
        np.add.at(out, self.feature[inner], dec)
        total = out.sum()
        return out / total if total > 0 else out

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in
                ("left", "right", "feature", "threshold", "value", "impurity", "weight")}

    @classmethod
    def from_dict(cls, d) -> "TreeArrays":
        ints = {"left", "right", "feature"}
        return cls(**{k: np.asarray(v, dtype=np.int64 if k in ints else float)
                      for k, v in d.items()})


# ---------------------------------------------------------------------------
# fitted models
# ---------------------------------------------------------------------------

@dataclass
class FittedModel:
    spec: ModelSpec
    features: List[str]
    coef: Optional[np.ndarray] = None        # LOGISTIC: [intercept, w_1..w_d]
    trees: List[TreeArrays] = field(default_factory=list)
    init_score: float = 0.0                  # BOOSTING
    meta: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.spec.kind

    def _check(self, X, features=None):
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if features is not None and list(features) != list(self.features):
            raise ModelError("feature catalog does not match the fitted model")
        if X.shape[1] != len(self.features):
            raise ModelError(f"expected {len(self.features)} features, got {X.shape[1]}")
        return X

    def decision_function(self, X, features=None) -> np.ndarray:
        X = self._check(X, features)
        if self.kind == LOGISTIC:
            return self.coef[0] + X @ self.coef[1:]
        if self.kind == BOOSTING:
            return self.init_score + sum(t.predict(X) for t in self.trees)
        raise ModelError(f"{self.kind} has no additive score")

    def predict_proba(self, X, features=None) -> np.ndarray:
        """P(OUD) per row."""
        if self.kind in (LOGISTIC, BOOSTING):
            return expit(self.decision_function(X, features))
        X = self._check(X, features)
        return np.mean([t.predict(X) for t in self.trees], axis=0)

    def feature_weights(self) -> np.ndarray:
        d = len(self.features)
        if self.kind == LOGISTIC:
            return np.abs(self.coef[1:])
        imp = np.sum([t.importances(d) for t in self.trees], axis=0)
        total = imp.sum()
        return imp / total if total > 0 else imp

    def to_dict(self) -> dict:
        d = {"format": "oudpipe-model", "version": FORMAT_VERSION, **self.spec.to_dict(),
             "features": list(self.features), "meta": self.meta}
        if self.kind == LOGISTIC:
            d["intercept"] = float(self.coef[0])
            d["coefficients"] = [float(c) for c in self.coef[1:]]
        else:
            d["init_score"] = float(self.init_score)
            d["trees"] = [t.to_dict() for t in self.trees]
        return d

    @classmethod
    def from_dict(cls, d) -> "FittedModel":
        if d.get("format") != "oudpipe-model" or d.get("version") != FORMAT_VERSION:
            raise ModelError("not an oudpipe model document of a supported version")
        spec = ModelSpec.from_dict(d)
        if spec.kind == LOGISTIC:
            coef = np.array([d["intercept"]] + list(d["coefficients"]), dtype=float)
            return cls(spec, list(d["features"]), coef=coef, meta=d.get("meta", {}))
        return cls(spec, list(d["features"]), trees=[TreeArrays.from_dict(t) for t in d["trees"]],
                   init_score=float(d.get("init_score", 0.0)), meta=d.get("meta", {}))


def predict_proba(model: FittedModel, X, features=None) -> np.ndarray:
    return model.predict_proba(X, features)


def feature_weights(model: FittedModel) -> np.ndarray:
    return model.feature_weights()


def save_model(model: FittedModel, path) -> None:
    Path(path).write_text(json.dumps(model.to_dict(), sort_keys=True) + "\n")


def load_model(path) -> FittedModel:
    return FittedModel.from_dict(json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _check_training(X, y):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y).astype(float)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ModelError("empty training matrix")
    if len(y) != X.shape[0]:
        raise ModelError("row count of X and y differ")
    if not np.isfinite(X).all():
        raise ModelError("training matrix contains non-finite values")
    if not np.isin(y, (0.0, 1.0)).all():
        raise ModelError("labels must be 0/1 with 1 = OUD")
    if len(np.unique(y)) < 2:
        raise ModelError("training labels contain a single class")
    return X, y


def _tree_seeds(seed, n):
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def train(spec: ModelSpec, X, y, features: Optional[Sequence[str]] = None) -> FittedModel:
    """Fit ``spec`` on ``X`` (rows x features) and 0/1 labels ``y`` (1 = OUD)."""
    X, y = _check_training(X, y)
    features = [f"x{j}" for j in range(X.shape[1])] if features is None else list(features)
    if len(features) != X.shape[1]:
        raise ModelError("feature names do not match the number of columns")
    p = spec.resolved()

    if spec.kind == LOGISTIC:
        w, meta = _fit_logistic(X, y, p["l2"], p["max_iter"], p["tol"])
        return FittedModel(spec, features, coef=w, meta=meta)

    if spec.kind == TREE:
        est = DecisionTreeClassifier(criterion="gini", max_depth=p["max_depth"],
                                     min_samples_leaf=p["min_samples_leaf"],
                                     random_state=spec.seed).fit(X, y)
        return FittedModel(spec, features, trees=[TreeArrays.from_sklearn(est)],
                           meta={"n_nodes": int(est.tree_.node_count)})

    if spec.kind == FOREST:
        n = X.shape[0]
        draws = max(1, int(round(p["max_samples"] * n)))
        trees = []
        for s in _tree_seeds(spec.seed, p["n_estimators"]):
            rng = np.random.default_rng(s)
            weight = np.bincount(rng.integers(0, n, draws), minlength=n).astype(float)
            est = DecisionTreeClassifier(criterion="gini", max_depth=p["max_depth"],
                                         min_samples_leaf=p["min_samples_leaf"],
                                         max_features=p["max_features"],
                                         random_state=s % (2 ** 31))
            est.fit(X, y, sample_weight=weight)
            trees.append(TreeArrays.from_sklearn(est))
        return FittedModel(spec, features, trees=trees, meta={"n_trees": len(trees)})

    return _fit_boosting(spec, p, X, y, features)


def _log_loss(y, F):
    return float(np.mean(np.logaddexp(0.0, F) - y * F))


def _fit_boosting(spec, p, X, y, features):
    """Gradient boosting on log-loss with Newton leaf values.

    Each stage is shrunk by ``learning_rate`` and halved further until the
    training loss does not increase, so the loss trace is non-increasing.
    """
    prior = float(np.clip(y.mean(), 1e-12, 1 - 1e-12))
    init = math.log(prior / (1 - prior))
    F = np.full(len(y), init)
    loss = _log_loss(y, F)
    trace, trees = [loss], []
    for s in _tree_seeds(spec.seed, p["n_estimators"]):
        prob = expit(F)
        resid = y - prob
        est = DecisionTreeRegressor(criterion="friedman_mse", max_depth=p["max_depth"],
                                    min_samples_leaf=p["min_samples_leaf"],
                                    random_state=s % (2 ** 31)).fit(X, resid)
        leaf = est.apply(X)
        num = np.bincount(leaf, weights=resid, minlength=est.tree_.node_count)
        den = np.bincount(leaf, weights=prob * (1 - prob), minlength=est.tree_.node_count)
        gamma = np.where(den > 1e-12, num / np.maximum(den, 1e-12), 0.0)
        shrink = p["learning_rate"]
        for _ in range(40):
            F_new = F + shrink * gamma[leaf]
            new_loss = _log_loss(y, F_new)
            if new_loss <= loss:
                break
            shrink *= 0.5
        else:
            shrink, F_new, new_loss = 0.0, F, loss
        F, loss = F_new, new_loss
        trace.append(loss)
        trees.append(TreeArrays.from_sklearn(est, value=shrink * gamma))
    return FittedModel(spec, features, trees=trees, init_score=init,
                       meta={"loss_trace": trace})


# ---------------------------------------------------------------------------
# interpretation
# ---------------------------------------------------------------------------

_REFERENCE_NOTE = {
    MALE: "vs female",
    **{b.value: "vs age 65+" for b in AgeBucket},
    **{c.value: "vs non-chronic use" for c in ChronicityLevel},
}


def odds_ratios(model: FittedModel) -> pd.DataFrame:
    """``exp(coefficient)`` per feature with its reference group or unit."""
    if model.kind != LOGISTIC:
        raise ModelError("odds ratios are only defined for the logistic model")
    coef = model.coef[1:]
    notes = [_REFERENCE_NOTE.get(f, "per additional diagnosis claim" if f.startswith("dx_")
                                 else "per unit increase") for f in model.features]
    return pd.DataFrame({"feature": model.features, "coefficient": coef,
                         "odds_ratio": np.exp(coef), "interpretation": notes})
