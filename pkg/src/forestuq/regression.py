"""Localized prediction intervals from OOB residuals (RF-FIRE) and baselines.

Residuals are signed, ``r = y - y_oob``. An interval for a query is
``[y_hat + q(alpha/2), y_hat + q(1 - alpha/2)]`` where ``q`` are empirical
quantiles of the residuals of the query's proximity neighbours. Using every
training point (``k = n``) recovers the global OOB interval.

Fixed ``k`` is a dataset-dependent hyperparameter; roughly 3-5% of the
training-set size is usually enough to reach the nominal coverage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .forest import oob_predict, predict
from .proximity import rf_gap_test

__all__ = [
    "ResidualSet",
    "LocalDistribution",
    "PredictionInterval",
    "IntervalReport",
    "QUANTILE_METHODS",
    "k_min_for",
    "empirical_quantile",
    "oob_residuals",
    "select_neighbors",
    "local_distribution",
    "fire_interval",
    "global_oob_interval",
    "weighted_error_band",
    "qrf_quantile",
    "fire_intervals",
    "global_oob_intervals",
    "weighted_error_bands",
    "qrf_intervals",
]

# name -> numpy.quantile method
QUANTILE_METHODS = {
    "linear": "linear",
    "nearest_rank": "inverted_cdf",
    "median_unbiased": "median_unbiased",
}

DYNAMIC = "dynamic"


@dataclass(frozen=True)
class ResidualSet:
    residuals: np.ndarray
    defined: np.ndarray

    def __len__(self):
        return self.residuals.shape[0]

    @property
    def defined_indices(self):
        return np.flatnonzero(self.defined)


@dataclass(frozen=True)
class LocalDistribution:
    sample: np.ndarray
    indices: np.ndarray

    @property
    def k(self):
        return self.sample.shape[0]


@dataclass(frozen=True)
class PredictionInterval:
    prediction: float
    lower: float
    upper: float
    alpha: float
    k_used: int
    method: str

    @property
    def width(self):
        return self.upper - self.lower


@dataclass
class IntervalReport:
    """Column-wise interval results for a batch of queries."""

    prediction: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    k_used: np.ndarray
    alpha: float
    method: str

    def __len__(self):
        return self.prediction.shape[0]

    @property
    def width(self):
        return self.upper - self.lower

    def __getitem__(self, i):
        return PredictionInterval(float(self.prediction[i]), float(self.lower[i]),
                                  float(self.upper[i]), self.alpha, int(self.k_used[i]),
                                  self.method)

    def affine(self, mean, sd):
        """Map bounds from standardized back to original response units."""
        return IntervalReport(self.prediction * sd + mean, self.lower * sd + mean,
                              self.upper * sd + mean, self.k_used, self.alpha, self.method)

    def to_records(self):
        return [
            {"instance": i, "prediction": float(self.prediction[i]),
             "lower": float(self.lower[i]), "upper": float(self.upper[i]),
             "k_used": int(self.k_used[i]), "method": self.method, "alpha": self.alpha}
            for i in range(len(self))
        ]


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def k_min_for(alpha):
    """Smallest neighbourhood that resolves the alpha/2 tails."""
    _check_alpha(alpha)
    return max(20, math.ceil(2.0 / alpha))


def empirical_quantile(sorted_sample, gamma, method="median_unbiased"):
    return float(np.quantile(sorted_sample, gamma, method=QUANTILE_METHODS[method]))


def oob_residuals(forest, dataset):
    if forest.task != "regression":
        raise ValueError("OOB residuals need a regression forest")
    pred, defined = oob_predict(forest, dataset)
    return ResidualSet(dataset.response - pred, defined)


def _dense_row(W_row):
    if isinstance(W_row, tuple):
        raise TypeError("pass a dense weight row")
    return np.asarray(W_row, dtype=np.float64).ravel()


def select_neighbors(W_row, k, defined, k_min=20):
    """Neighbour indices for one query.

    ``k="dynamic"`` takes every defined index with positive weight. An
    integer ``k`` takes the ``k`` largest weights among defined indices,
    ties going to the lower index. Either result is padded to ``k_min``
    by continuing down the same ranking.
    """
    w = _dense_row(W_row)
    defined = np.asarray(defined, dtype=bool)
    if w.shape != defined.shape:
        raise ValueError("weight row and defined-mask lengths differ")
    cand = np.flatnonzero(defined)
    if cand.size < k_min:
        raise ValueError(f"only {cand.size} defined residuals, need at least {k_min}")
    order = cand[np.lexsort((cand, -w[cand]))]
    if k == DYNAMIC:
        size = int(np.count_nonzero(w[cand] > 0))
    else:
        if int(k) < 1:
            raise ValueError("k must be >= 1")
        size = int(k)
    size = min(max(size, k_min), cand.size)
    return order[:size]


def local_distribution(residuals, indices):
    idx = np.asarray(indices)
    if not residuals.defined[idx].all():
        raise ValueError("neighbourhood contains undefined residuals")
    return LocalDistribution(np.sort(residuals.residuals[idx]), idx)


def fire_interval(y_hat, local, alpha, method="median_unbiased", k_min=None):
    _check_alpha(alpha)
    k_min = k_min_for(alpha) if k_min is None else k_min
    if local.k < k_min:
        raise ValueError(f"local sample of size {local.k} is below k_min={k_min}")
    lo = empirical_quantile(local.sample, alpha / 2, method)
    hi = empirical_quantile(local.sample, 1 - alpha / 2, method)
    return PredictionInterval(float(y_hat), y_hat + lo, y_hat + hi, alpha, local.k, "fire")


def global_oob_interval(y_hat, residuals, alpha, method="median_unbiased"):
    _check_alpha(alpha)
    sample = np.sort(residuals.residuals[residuals.defined])
    lo = empirical_quantile(sample, alpha / 2, method)
    hi = empirical_quantile(sample, 1 - alpha / 2, method)
    return PredictionInterval(float(y_hat), y_hat + lo, y_hat + hi, alpha, sample.size,
                              "global-oob")


def weighted_error_band(y_hat, W_row, residuals, loss="absolute"):
    """Symmetric band ``y_hat +- sum_i w_i L(r_i)``; no coverage guarantee."""
    w = _dense_row(W_row)
    if loss == "absolute":
        L = np.abs(residuals.residuals)
    elif loss == "squared":
        L = residuals.residuals ** 2
    else:
        raise ValueError(f"unknown loss {loss!r}")
    w = np.where(residuals.defined, w, 0.0)
    total = w.sum()
    if total <= 0:
        raise ValueError("no defined residual carries positive weight")
    half = float(np.dot(w / total, np.where(residuals.defined, L, 0.0)))
    return PredictionInterval(float(y_hat), y_hat - half, y_hat + half, float("nan"),
                              int(np.count_nonzero(w)), "weighted-band")


def _weighted_quantile(y, u, gamma):
    keep = u > 0
    y, u = y[keep], u[keep]
    order = np.argsort(y, kind="stable")
    cdf = np.cumsum(u[order])
    cdf /= cdf[-1]
    pos = np.searchsorted(cdf, gamma - 1e-12, side="left")
    return float(y[order][min(pos, y.size - 1)])


def qrf_quantile(forest, dataset, x, gamma):
    """Quantile-regression-forest estimate at level ``gamma`` for one vector.

    Instance weights are tree-averaged ``c_j(t) / |leaf_t(x)|``.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ValueError("gamma must lie in [0, 1]")
    u = rf_gap_test(forest, dataset, np.atleast_2d(x)).row(0)
    return _weighted_quantile(dataset.response, u, gamma)


# batch helpers

def _test_weights(forest, dataset, X_test, W):
    if W is None:
        W = rf_gap_test(forest, dataset, X_test)
    return W


def fire_intervals(forest, dataset, X_test, alpha, k=DYNAMIC, residuals=None, W=None,
                   method="median_unbiased"):
    """RF-FIRE intervals for every row of ``X_test``."""
    _check_alpha(alpha)
    residuals = oob_residuals(forest, dataset) if residuals is None else residuals
    W = _test_weights(forest, dataset, X_test, W)
    y_hat = predict(forest, X_test)
    k_min = k_min_for(alpha)
    m = y_hat.shape[0]
    lower, upper, k_used = np.empty(m), np.empty(m), np.empty(m, dtype=np.int64)
    for i in range(m):
        idx = select_neighbors(W.row(i), k, residuals.defined, k_min)
        iv = fire_interval(y_hat[i], local_distribution(residuals, idx), alpha, method, k_min)
        lower[i], upper[i], k_used[i] = iv.lower, iv.upper, iv.k_used
    return IntervalReport(y_hat, lower, upper, k_used, alpha, "fire")


def global_oob_intervals(forest, dataset, X_test, alpha, residuals=None,
                         method="median_unbiased"):
    residuals = oob_residuals(forest, dataset) if residuals is None else residuals
    y_hat = predict(forest, X_test)
    iv = global_oob_interval(0.0, residuals, alpha, method)
    m = y_hat.shape[0]
    return IntervalReport(y_hat, y_hat + iv.lower, y_hat + iv.upper,
                          np.full(m, iv.k_used), alpha, "global-oob")


def weighted_error_bands(forest, dataset, X_test, loss="absolute", residuals=None, W=None):
    residuals = oob_residuals(forest, dataset) if residuals is None else residuals
    W = _test_weights(forest, dataset, X_test, W)
    y_hat = predict(forest, X_test)
    m = y_hat.shape[0]
    lower, upper, k_used = np.empty(m), np.empty(m), np.empty(m, dtype=np.int64)
    for i in range(m):
        iv = weighted_error_band(y_hat[i], W.row(i), residuals, loss)
        lower[i], upper[i], k_used[i] = iv.lower, iv.upper, iv.k_used
    return IntervalReport(y_hat, lower, upper, k_used, float("nan"), "weighted-band")


def qrf_intervals(forest, dataset, X_test, alpha, W=None):
    _check_alpha(alpha)
    W = _test_weights(forest, dataset, X_test, W)
    y_hat = predict(forest, X_test)
    m = y_hat.shape[0]
    lower, upper, k_used = np.empty(m), np.empty(m), np.empty(m, dtype=np.int64)
    for i in range(m):
        u = W.row(i)
        lower[i] = _weighted_quantile(dataset.response, u, alpha / 2)
        upper[i] = _weighted_quantile(dataset.response, u, 1 - alpha / 2)
        k_used[i] = np.count_nonzero(u)
    return IntervalReport(y_hat, lower, upper, k_used, alpha, "qrf")

