"""Small Monte Carlo statistics helpers shared by the simulators and tests."""

from __future__ import annotations

import math

import numpy as np

__all__ = ["ks_distance", "ks_2samp_distance", "binomial_se", "mean_se", "ecdf"]


def ks_distance(samples, cdf) -> float:
    """One-sample Kolmogorov-Smirnov statistic sup |F_n - F|.

    ``cdf`` is a callable mapping a sorted array to CDF values. Ties in the
    sample (atoms) are handled exactly.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


def ks_2samp_distance(a, b) -> float:
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ecdf(samples, grid) -> np.ndarray:
    x = np.sort(np.asarray(samples, dtype=float))
    return np.searchsorted(x, np.asarray(grid, dtype=float), side="right") / x.size


def binomial_se(p: float, n: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / n)


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))
