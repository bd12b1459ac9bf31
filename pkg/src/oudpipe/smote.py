"""SMOTE oversampling of the minority class."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree


class SmoteError(ValueError):
    pass


@dataclass(frozen=True)
class SmoteConfig:
    """``target_ratio`` is minority / majority after augmentation.

    ``standardize`` scales columns to unit variance for the neighbor search
    only; synthetic rows are always interpolated in the original units.
    """

    k_neighbors: int = 5
    target_ratio: float = 1.0
    seed: int = 0
    standardize: bool = False

    def __post_init__(self):
        if self.k_neighbors < 1:
            raise SmoteError("k_neighbors must be >= 1")
        if not 0 < self.target_ratio <= 1:
            raise SmoteError("target_ratio must be in (0, 1]")


def _neighbors(P, k):
    """Indices of the ``k`` nearest other rows of ``P`` (self excluded)."""
    _, idx = cKDTree(P).query(P, k=k + 1)
    idx = np.atleast_2d(idx)
    out = np.empty((len(P), k), dtype=np.int64)
    for i, row in enumerate(idx):
        others = row[row != i]
        out[i] = others[:k]
    return out


def smote(X, y, config: SmoteConfig = SmoteConfig(), return_parents: bool = False):
    """Append synthetic minority rows until minority = floor(ratio * majority).

    Returns ``(X_aug, y_aug)``; original rows come first, unchanged. With
    ``return_parents`` also returns an ``(n_new, 2)`` array of row indices
    into ``X`` for the base row and the neighbor of every synthetic row.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y)
    if X.ndim != 2 or X.shape[0] == 0:
        raise SmoteError("empty training matrix")
    if len(y) != len(X):
        raise SmoteError("row count of X and y differ")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) != 2:
        raise SmoteError("SMOTE needs exactly two classes")
    minority = classes[np.argmin(counts)] if counts[0] != counts[1] else classes[1]
    rows = np.flatnonzero(y == minority)
    n_min, n_maj = len(rows), len(y) - len(rows)
    if n_min < 2:
        raise SmoteError("minority class needs at least 2 rows")

    n_new = max(0, int(np.floor(config.target_ratio * n_maj)) - n_min)
    parents = np.empty((0, 2), dtype=np.int64)
    if n_new == 0:
        return (X.copy(), y.copy(), parents) if return_parents else (X.copy(), y.copy())

    k = min(config.k_neighbors, n_min - 1)
    P = X[rows]
    if config.standardize:
        sd = P.std(axis=0)
        P = P / np.where(sd > 0, sd, 1.0)
    nbrs = _neighbors(P, k)

    rng = np.random.default_rng(config.seed)
    base = rng.integers(0, n_min, n_new)
    other = nbrs[base, rng.integers(0, k, n_new)]
    gap = rng.random(n_new)[:, None]
    synth = X[rows[base]] + gap * (X[rows[other]] - X[rows[base]])

    X_aug = np.vstack([X, synth])
    y_aug = np.concatenate([y, np.full(n_new, minority, dtype=y.dtype)])
    if return_parents:
        return X_aug, y_aug, np.column_stack([rows[base], rows[other]])
    return X_aug, y_aug
