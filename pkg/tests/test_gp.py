import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import multivariate_normal

from bilba.errors import FitFailure
from bilba.gp import JITTER, GpModel, SearchGrid, fit_hyperparams, log_marginal_likelihood, normalize_scores, predict_mean, rbf

from oracles import gp_mean_dense


def _dataset(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(5, 51))
    X = rng.uniform(-1, 1, size=(n, 3))
    y = np.sin(3 * X[:, 0]) + X[:, 1] * X[:, 2]
    return X, y, rng


@pytest.mark.parametrize("seed", range(10))
def test_posterior_mean_matches_dense_solve(seed):
    X, y, rng = _dataset(seed)
    model = GpModel(0.7, 2.0, X, y)
    T = rng.uniform(-1, 1, size=(20, 3))
    np.testing.assert_allclose(predict_mean(model, T), gp_mean_dense(X, y, T, 0.7, 2.0, JITTER), atol=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_interpolates_training_points(seed):
    X, y, _ = _dataset(seed, n=30)
    model = GpModel(1.0, 3.0, X, y)
    assert np.max(np.abs(predict_mean(model, X) - y)) < 1e-5


def test_log_marginal_likelihood_matches_gaussian_density():
    X, y, _ = _dataset(3, n=15)
    K = rbf(X, X, 0.5, 1.5) + JITTER * np.eye(len(X))
    expected = multivariate_normal(mean=np.zeros(len(X)), cov=K).logpdf(y)
    assert math.isclose(log_marginal_likelihood(X, y, 0.5, 1.5), expected, rel_tol=1e-9)


def test_grid_search_returns_argmax():
    X, y, _ = _dataset(4, n=20)
    grid = SearchGrid((1e-2, 1e1), (1e-2, 1e2), 5)
    best = fit_hyperparams(X, y, grid)
    lmls = {p: log_marginal_likelihood(X, y, *p) for p in grid.points()}
    assert lmls[best] == max(lmls.values())


def test_ties_go_to_first_grid_point():
    X = np.array([[0.0], [1.0]])
    y = np.zeros(2)
    grid = SearchGrid((1.0, 1.0), (1.0, 1.0), 3)  # identical points
    assert fit_hyperparams(X, y, grid) == grid.points()[0]


def test_fit_needs_two_points():
    with pytest.raises(ValueError):
        fit_hyperparams(np.zeros((1, 3)), np.zeros(1))


def test_singular_gram_raises():
    X = np.zeros((4, 2))
    with pytest.raises(FitFailure):
        GpModel(1.0, 1.0, X, np.arange(4.0), jitter=0.0)


@settings(max_examples=50)
@given(st.lists(st.floats(-100, 100), min_size=1, max_size=30))
def test_normalized_scores(h):
    z, mean, std = normalize_scores(h)
    assert np.all(np.isfinite(z))
    np.testing.assert_allclose(z * std + mean, h, atol=1e-9 * max(1.0, max(abs(v) for v in h)))
    if np.ptp(h) == 0:
        assert std == 1.0
