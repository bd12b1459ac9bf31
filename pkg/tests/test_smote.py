import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oudpipe.smote import SmoteConfig, SmoteError, smote


def imbalanced(n=10_000, minority=0.01, d=6, seed=0):
    rng = np.random.default_rng(seed)
    y = np.zeros(n, dtype=int)
    y[: int(n * minority)] = 1
    X = rng.normal(size=(n, d)) + y[:, None]
    return X, y


def convex_check(X, synth, parents, tol=1e-9):
    """Each synthetic row lies on the segment between its two parents."""
    a, b = X[parents[:, 0]], X[parents[:, 1]]
    d = b - a
    denom = np.einsum("ij,ij->i", d, d)
    lam = np.where(denom > 0, np.einsum("ij,ij->i", synth - a, d) / np.where(denom > 0, denom, 1), 0.0)
    resid = synth - (a + lam[:, None] * d)
    return (lam >= -tol) & (lam <= 1 + tol) & (np.abs(resid).max(axis=1) <= tol)


def test_balances_to_equal_counts():
    X, y = imbalanced()
    Xa, ya, parents = smote(X, y, SmoteConfig(seed=3), return_parents=True)
    assert np.sum(ya == 0) == np.sum(ya == 1) == 9900
    assert np.array_equal(Xa[: len(X)], X) and np.array_equal(ya[: len(y)], y)
    assert convex_check(X, Xa[len(X):], parents).all()
    assert (y[parents] == 1).all()
    assert (parents[:, 0] != parents[:, 1]).all()


def test_target_ratio():
    X, y = imbalanced(2000, 0.05)
    _, ya = smote(X, y, SmoteConfig(target_ratio=0.5))
    assert np.sum(ya == 1) == int(np.floor(0.5 * 1900))


def test_already_balanced_is_a_copy():
    X, y = imbalanced(100, 0.5)
    Xa, ya = smote(X, y)
    assert np.array_equal(Xa, X) and Xa is not X


def test_deterministic_per_seed():
    X, y = imbalanced(1000, 0.05)
    a = smote(X, y, SmoteConfig(seed=1))[0]
    b = smote(X, y, SmoteConfig(seed=1))[0]
    c = smote(X, y, SmoteConfig(seed=2))[0]
    assert np.array_equal(a, b) and not np.array_equal(a, c)


def test_neighbors_are_nearest_minority_rows():
    X, y = imbalanced(500, 0.1, d=2, seed=4)
    _, _, parents = smote(X, y, SmoteConfig(k_neighbors=3), return_parents=True)
    rows = np.flatnonzero(y == 1)
    for base, other in parents[:50]:
        dist = np.linalg.norm(X[rows] - X[base], axis=1)
        dist[rows == base] = np.inf
        assert np.linalg.norm(X[other] - X[base]) <= np.sort(dist)[2] + 1e-12


def test_k_clamped_for_tiny_minority():
    X, y = imbalanced(100, 0.03)
    _, ya = smote(X, y, SmoteConfig(k_neighbors=5))
    assert np.sum(ya == 1) == 97


def test_errors():
    with pytest.raises(SmoteError):
        SmoteConfig(k_neighbors=0)
    with pytest.raises(SmoteError):
        SmoteConfig(target_ratio=1.5)
    with pytest.raises(SmoteError):
        smote(np.zeros((0, 2)), np.zeros(0))
    with pytest.raises(SmoteError):
        smote(np.zeros((4, 2)), np.zeros(4))
    with pytest.raises(SmoteError):
        smote(np.zeros((4, 2)), np.array([0, 0, 0, 1]))


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 12), st.integers(20, 60), st.integers(1, 4), st.integers(0, 10_000))
def test_convexity_property(n_min, n_maj, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 3, size=(n_min + n_maj, d)).astype(float)
    y = np.r_[np.ones(n_min, int), np.zeros(n_maj, int)]
    Xa, ya, parents = smote(X, y, SmoteConfig(seed=seed), return_parents=True)
    assert np.sum(ya == 1) == n_maj
    assert convex_check(X, Xa[len(X):], parents).all()


def test_standardized_search_keeps_original_units():
    X, y = imbalanced(300, 0.1)
    X[:, 0] *= 1000
    Xa, _, parents = smote(X, y, SmoteConfig(standardize=True), return_parents=True)
    assert convex_check(X, Xa[len(X):], parents, tol=1e-6).all()
