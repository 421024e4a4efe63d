"""Case-resampling bootstrap and Monte Carlo error propagation."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .engine import BootstrapSummary, FitConfig, FitError, FitResult, ParametricModel, least_squares_fit

ONE_SIGMA = 0.6826894921370859


def _take(a, idx):
    if a is None:
        return None
    a = np.asarray(a)
    return a if a.ndim == 0 else a[idx]


def bootstrap_errors(model: ParametricModel, x, y, sigma=None, n_resamples=200, seed=0, *,
                     fit: FitResult | None = None, level=ONE_SIGMA, config: FitConfig | None = None,
                     workers=1, fixed=None, attach=True) -> BootstrapSummary:
    """Refit ``n_resamples`` case-resampled data sets and return percentile intervals.

    Resample ``k`` uses its own generator spawned from ``seed``, so the result
    does not depend on ``workers``.  ``x`` is indexed along its first axis.
    """
    if n_resamples < 100:
        raise ValueError("need at least 100 resamples")
    x_arr = np.asarray(x)
    y = np.asarray(y, dtype=float)
    n = y.size
    if fit is None:
        fit = least_squares_fit(model, x, y, sigma, config, fixed=fixed)
    children = np.random.SeedSequence(seed).spawn(n_resamples)

    def one(k):
        idx = np.sort(np.random.default_rng(children[k]).integers(0, n, n))
        try:
            res = least_squares_fit(model, x_arr[idx], y[idx], _take(sigma, idx), config,
                                    p0=fit.values, fixed=fixed)
            return res.values
        except FitError:
            return np.full(len(fit.values), np.nan)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            samples = np.array(list(pool.map(one, range(n_resamples))))
    else:
        samples = np.array([one(k) for k in range(n_resamples)])
    ok = samples[np.all(np.isfinite(samples), axis=1)]
    tail = 50 * (1 - level)
    lo, med, hi = np.percentile(ok, [tail, 50, 100 - tail], axis=0)
    summary = BootstrapSummary(samples=samples, median=med, lower=lo, upper=hi,
                               std=ok.std(axis=0, ddof=1), level=level, seed=seed)
    if attach:
        fit.bootstrap = summary
    return summary


def monte_carlo_propagate(func, mean, cov, n_samples=10000, seed=0, level=ONE_SIGMA):
    """Push Gaussian parameter uncertainty through ``func``; returns (median, lower, upper)."""
    rng = np.random.default_rng(seed)
    draws = rng.multivariate_normal(np.asarray(mean, dtype=float), np.asarray(cov, dtype=float), n_samples)
    vals = np.array([func(d) for d in draws])
    tail = 50 * (1 - level)
    lo, med, hi = np.percentile(vals, [tail, 50, 100 - tail], axis=0)
    return med, lo, hi
