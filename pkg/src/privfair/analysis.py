"""Correlation analysis: OLS fits of metric-vs-epsilon curves and significance tests.

log_fit regresses y on ln(x) (the shape of a diminishing-returns privacy curve);
linear_fit is the same machinery with the identity transform. Slope significance
is the usual t-test with n-2 degrees of freedom, with the t CDF evaluated through
the regularized incomplete beta function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import betainc


@dataclass(frozen=True)
class FitReport:
    model: str  # "logarithmic" | "linear"
    slope: float
    intercept: float
    r_squared: float
    slope_p_value: float
    n: int


def slope_p_value(slope: float, residual_variance: float, x_variance: float, n: int) -> float:
    """Two-sided p-value for slope != 0.

    residual_variance = SSR/(n-2); x_variance = population variance of x.
    se(slope)^2 = residual_variance / (n * x_variance); t = slope/se;
    p = I_{v/(v+t^2)}(v/2, 1/2) with v = n-2 (the two-sided t tail mass).
    """
    if n <= 2:
        raise ValueError("p-value needs n > 2")
    if x_variance <= 0:
        raise ValueError("x has zero variance")
    if residual_variance < 0:
        raise ValueError("negative residual variance")
    if slope == 0.0:
        return 1.0
    if residual_variance == 0.0:
        return 0.0  # perfect fit, nonzero slope
    dof = n - 2
    se2 = residual_variance / (n * x_variance)
    t2 = slope * slope / se2
    return float(betainc(dof / 2.0, 0.5, dof / (dof + t2)))


def _ols(x: np.ndarray, y: np.ndarray, model: str) -> FitReport:
    n = x.size
    if n < 3:
        raise ValueError(f"need at least 3 points, got {n}")
    xbar, ybar = x.mean(), y.mean()
    dx = x - xbar
    sxx = float(np.sum(dx * dx))
    if sxx == 0.0:
        raise ValueError("zero variance in x; slope undefined")
    slope = float(np.sum(dx * (y - ybar)) / sxx)
    intercept = float(ybar - slope * xbar)
    resid = y - (slope * x + intercept)
    ssr = float(np.sum(resid * resid))
    sst = float(np.sum((y - ybar) ** 2))
    if sst == 0.0:
        r2, p = 0.0, 1.0  # constant y: flat line, no evidence of trend
    else:
        r2 = max(0.0, 1.0 - ssr / sst)
        p = slope_p_value(slope, ssr / (n - 2), sxx / n, n)
    return FitReport(model, slope, intercept, r2, p, n)


def linear_fit(xs, ys) -> FitReport:
    """Ordinary least squares of y on x."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError("xs and ys must have equal length")
    return _ols(x, y, "linear")


def log_fit(xs, ys) -> FitReport:
    """Ordinary least squares of y on ln(x); xs must be strictly positive."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size != y.size:
        raise ValueError("xs and ys must have equal length")
    if np.any(x <= 0):
        raise ValueError("log_fit requires strictly positive xs")
    return _ols(np.log(x), y, "logarithmic")


def _average_ranks(v: np.ndarray) -> np.ndarray:
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # average rank, 1-based
        i = j + 1
    return ranks


def spearman(xs, ys) -> float:
    """Rank correlation: Pearson correlation of average ranks."""
    x = np.asarray(xs, dtype=np.float64).ravel()
    y = np.asarray(ys, dtype=np.float64).ravel()
    if x.size != y.size or x.size < 2:
        raise ValueError("need two equal-length vectors with at least 2 points")
    rx, ry = _average_ranks(x), _average_ranks(y)
    sx, sy = rx.std(), ry.std()
    if sx == 0.0 or sy == 0.0:
        raise ValueError("constant input has no rank correlation")
    return float(np.mean((rx - rx.mean()) * (ry - ry.mean())) / (sx * sy))
