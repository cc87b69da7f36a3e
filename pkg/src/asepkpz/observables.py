"""Self-normalized (importance-weighted) estimators with delta-method errors.

With normalized weights ``w`` the mean of ``f`` is ``sum w f`` and its
standard error ``sqrt(sum w^2 (f - mean)^2)``; variance and covariance use
the same formula on the centred products. Uniform weights reduce exactly
to the plug-in unweighted estimators. ``n_effective`` is the Kish
effective sample size ``1 / sum w^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.special import logsumexp


@dataclass(frozen=True)
class Estimate:
    name: str
    estimate: float
    stderr: float
    n_effective: float | None

    def as_dict(self) -> dict:
        return {"name": self.name, "estimate": self.estimate, "stderr": self.stderr,
                "n_effective": self.n_effective}


def normalized_weights(log_weights, n: int | None = None) -> np.ndarray:
    if log_weights is None:
        if n is None or n < 1:
            raise ValueError("empty sample")
        return np.full(n, 1.0 / n)
    lw = np.asarray(log_weights, dtype=float)
    if lw.size == 0:
        raise ValueError("empty sample")
    if not np.all(np.isfinite(lw)):
        raise ValueError("log weights must be finite")
    if np.all(lw == lw[0]):
        return np.full(lw.size, 1.0 / lw.size)
    return np.exp(lw - logsumexp(lw))


def effective_sample_size(log_weights) -> float:
    """``(sum w)^2 / sum w^2``."""
    lw = np.asarray(log_weights, dtype=float)
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def _n_eff(w, log_weights) -> float:
    if log_weights is None or np.all(w == w[0]):
        return float(len(w))
    return float(1.0 / (w @ w))


def _moment(values, w):
    mu = float(w @ values)
    dev = values - mu
    se = math.sqrt(float((w * w) @ (dev * dev)))
    return mu, se


def weighted_mean(values, log_weights=None, name="mean") -> Estimate:
    values = np.asarray(values, dtype=float)
    w = normalized_weights(log_weights, len(values))
    mu, se = _moment(values, w)
    return Estimate(name, mu, se, _n_eff(w, log_weights))


def weighted_variance(values, log_weights=None, name="var") -> Estimate:
    values = np.asarray(values, dtype=float)
    w = normalized_weights(log_weights, len(values))
    # shift by a sample value first so constant input gives exactly zero
    values = values - values[0]
    mu = float(w @ values)
    var, se = _moment((values - mu) ** 2, w)
    return Estimate(name, var, se, _n_eff(w, log_weights))


def weighted_covariance(x, y, log_weights=None, name="cov") -> Estimate:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = normalized_weights(log_weights, len(x))
    x, y = x - x[:1], y - y[:1]
    prod = (x - w @ x) * (y - w @ y)
    cov, se = _moment(prod, w)
    return Estimate(name, cov, se, _n_eff(w, log_weights))


def weighted_correlation(x, y, log_weights=None, name="corr") -> Estimate:
    """Weighted Pearson correlation; the error is the large-sample ``(1 - r^2)/sqrt(n_eff)``."""
    cov = weighted_covariance(x, y, log_weights)
    vx = weighted_variance(x, log_weights).estimate
    vy = weighted_variance(y, log_weights).estimate
    r = cov.estimate / math.sqrt(vx * vy) if vx > 0 and vy > 0 else 0.0
    return Estimate(name, r, (1.0 - r * r) / math.sqrt(cov.n_effective), cov.n_effective)


def weighted_histogram(values, bins, value_range, log_weights=None):
    """Fixed-binning histogram of probability masses with per-bin standard errors."""
    values = np.asarray(values, dtype=float)
    w = normalized_weights(log_weights, len(values))
    edges = np.linspace(value_range[0], value_range[1], bins + 1)
    idx = np.clip(np.searchsorted(edges, values, side="right") - 1, 0, bins - 1)
    inside = (values >= edges[0]) & (values <= edges[-1])
    mass = np.bincount(idx[inside], weights=w[inside], minlength=bins)
    se = np.empty(bins)
    for b in range(bins):
        ind = ((idx == b) & inside).astype(float)
        se[b] = math.sqrt(float((w * w) @ (ind - mass[b]) ** 2))
    return edges, mass, se


def weighted_ks(values, cdf, log_weights=None):
    """Kolmogorov-Smirnov distance between the weighted ECDF and ``cdf``.

    Returns ``(statistic, n_effective, pvalue)``; the p-value uses the exact
    one-sample KS law at ``n = floor(n_effective)``. For weights independent
    of the values, the weighted ECDF has variance ``F(1-F)/n_effective``.
    """
    values = np.asarray(values, dtype=float)
    w = normalized_weights(log_weights, len(values))
    order = np.argsort(values, kind="stable")
    xs = values[order]
    cw = np.cumsum(w[order])
    F = cdf(xs)
    before = np.concatenate([[0.0], cw[:-1]])
    d = float(max(np.max(cw - F), np.max(F - before)))
    n_eff = _n_eff(w, log_weights)
    n = max(1, int(math.floor(n_eff)))
    return d, n_eff, float(stats.kstwo.sf(d, n))


def linear_extrapolation(xs, ys, ses):
    """Weighted least squares ``y = a + b x``; returns ``(a, se_a, b, se_b)``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    ses = np.asarray(ses, dtype=float)
    if len(xs) < 2:
        raise ValueError("extrapolation needs at least two points")
    wts = 1.0 / np.maximum(ses, 1e-300) ** 2
    A = np.stack([np.ones_like(xs), xs], axis=1)
    cov = np.linalg.inv(A.T @ (wts[:, None] * A))
    coef = cov @ (A.T @ (wts * ys))
    return float(coef[0]), math.sqrt(cov[0, 0]), float(coef[1]), math.sqrt(cov[1, 1])
