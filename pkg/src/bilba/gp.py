"""Gaussian process regression with an RBF kernel.

The kernel is ``k(a, b) = signal_var * exp(-inv_length * |a - b|^2)``.
Hyperparameters are picked by grid search on the log marginal likelihood;
only the posterior mean is used downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import FitFailure

JITTER = 1e-8


@dataclass(frozen=True)
class SearchGrid:
    signal_var: tuple[float, float] = (1e-2, 1e1)
    inv_length: tuple[float, float] = (1e-2, 1e2)
    n: int = 8

    def points(self) -> list[tuple[float, float]]:
        sv = np.logspace(math.log10(self.signal_var[0]), math.log10(self.signal_var[1]), self.n)
        il = np.logspace(math.log10(self.inv_length[0]), math.log10(self.inv_length[1]), self.n)
        return [(float(s), float(l)) for s in sv for l in il]


def rbf(A: np.ndarray, B: np.ndarray, signal_var: float, inv_length: float) -> np.ndarray:
    A = np.atleast_2d(np.asarray(A, float))
    B = np.atleast_2d(np.asarray(B, float))
    sq = ((A[:, None, :] - B[None, :, :]) ** 2).sum(axis=-1)
    return signal_var * np.exp(-inv_length * sq)


def normalize_scores(H) -> tuple[np.ndarray, float, float]:
    """Zero-mean, unit-variance scores; a constant vector gets ``std = 1``."""
    H = np.asarray(H, float)
    if H.size == 0:
        raise ValueError("need at least one score")
    mean = float(H.mean())
    std = float(H.std())
    if std == 0.0:
        std = 1.0
    return (H - mean) / std, mean, std


def log_marginal_likelihood(X, y, signal_var: float, inv_length: float, jitter: float = JITTER) -> float:
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    K = rbf(X, X, signal_var, inv_length) + jitter * np.eye(len(X))
    c, low = cho_factor(K, lower=True)
    alpha = cho_solve((c, low), y)
    logdet = 2.0 * np.log(np.diag(c)).sum()
    return float(-0.5 * y @ alpha - 0.5 * logdet - 0.5 * len(X) * math.log(2.0 * math.pi))


def fit_hyperparams(X, y, grid: SearchGrid | None = None, jitter: float = JITTER) -> tuple[float, float]:
    """Grid point with the highest log marginal likelihood (first one on ties)."""
    X = np.asarray(X, float)
    y = np.asarray(y, float)
    if len(X) < 2:
        raise ValueError("need at least two training points")
    best, best_lml = None, -math.inf
    for sv, il in (grid or SearchGrid()).points():
        try:
            lml = log_marginal_likelihood(X, y, sv, il, jitter)
        except (LinAlgError, ValueError):
            continue
        if math.isfinite(lml) and lml > best_lml:
            best, best_lml = (sv, il), lml
    if best is None:
        raise FitFailure("Gram matrix is singular for every grid point")
    return best


@dataclass(frozen=True)
class GpModel:
    signal_var: float
    inv_length: float
    X_train: np.ndarray
    y_train: np.ndarray
    jitter: float = JITTER

    def __post_init__(self):
        if not (self.signal_var > 0 and self.inv_length > 0):
            raise ValueError("kernel hyperparameters must be positive")
        X = np.atleast_2d(np.asarray(self.X_train, float))
        y = np.asarray(self.y_train, float).reshape(-1)
        K = rbf(X, X, self.signal_var, self.inv_length) + self.jitter * np.eye(len(X))
        try:
            chol = cho_factor(K, lower=True)
        except LinAlgError as exc:
            raise FitFailure("Gram matrix is not positive definite") from exc
        object.__setattr__(self, "X_train", X)
        object.__setattr__(self, "y_train", y)
        object.__setattr__(self, "_alpha", cho_solve(chol, y))

    @classmethod
    def fit(cls, X, y, grid: SearchGrid | None = None, jitter: float = JITTER) -> "GpModel":
        sv, il = fit_hyperparams(X, y, grid, jitter)
        return cls(sv, il, np.asarray(X, float), np.asarray(y, float), jitter)


def predict_mean(model: GpModel, T) -> np.ndarray:
    """Posterior mean ``K(T, X) (K(X, X) + jitter I)^-1 y``."""
    Kt = rbf(T, model.X_train, model.signal_var, model.inv_length)
    return Kt @ model._alpha
