"""Goodness-of-fit helpers shared by the verification reports."""
from __future__ import annotations

import numpy as np
from scipy import stats


def wald_chi_square(estimate, target, cov, scale: float) -> tuple[float, int, float]:
    """Wald statistic for ``estimate ~ N(target, cov / scale)`` with singular ``cov``.

    Returns ``(statistic, dof, p_value)``; ``dof`` is the numerical rank of ``cov``.
    """
    d = np.asarray(estimate, float) - np.asarray(target, float)
    cov = np.asarray(cov, float)
    pinv = np.linalg.pinv(cov, rcond=1e-10, hermitian=True)
    dof = int(np.linalg.matrix_rank(cov, tol=1e-10 * np.abs(cov).max(), hermitian=True))
    stat = float(scale * d @ pinv @ d)
    return stat, dof, float(stats.chi2.sf(stat, dof))


def chi_square_counts(counts, probs) -> tuple[float, int, float]:
    """Pearson test of observed category counts against probabilities.

    Categories with zero probability must have zero counts (otherwise p = 0).
    """
    counts = np.asarray(counts, float)
    probs = np.asarray(probs, float)
    support = probs > 0
    if np.any(counts[~support] > 0):
        return float("inf"), int(support.sum() - 1), 0.0
    n = counts.sum()
    exp = n * probs[support]
    stat = float(np.sum((counts[support] - exp) ** 2 / exp))
    dof = int(support.sum() - 1)
    if dof == 0:
        return 0.0, 0, 1.0
    return stat, dof, float(stats.chi2.sf(stat, dof))


def exponential_chi_square(samples, rate: float, bins: int = 20) -> float:
    """p-value of a chi-square test of ``samples`` against ``Exp(rate)`` on equiprobable bins."""
    samples = np.asarray(samples, float)
    edges = stats.expon.ppf(np.linspace(0, 1, bins + 1), scale=1.0 / rate)
    counts = np.histogram(samples, edges)[0]
    return chi_square_counts(counts, np.full(bins, 1.0 / bins))[2]


def serial_independence(seq, n_categories: int) -> float:
    """p-value for independence of consecutive values, using disjoint pairs."""
    seq = np.asarray(seq, dtype=np.int64)
    m = seq.size // 2
    a, b = seq[0:2 * m:2], seq[1:2 * m:2]
    table = np.zeros((n_categories, n_categories))
    np.add.at(table, (a, b), 1)
    table = table[table.sum(axis=1) > 0][:, table.sum(axis=0) > 0]
    if min(table.shape) < 2:
        return 1.0
    return float(stats.chi2_contingency(table, correction=False)[1])


def autocorrelation(x, max_lag: int) -> np.ndarray:
    """Sample autocorrelations ``r_1..r_max_lag`` (biased normalisation)."""
    x = np.asarray(x, float)
    c = x - x.mean()
    g0 = np.dot(c, c) / c.size
    if g0 == 0:
        return np.zeros(max_lag)
    return np.array([np.dot(c[:-h], c[h:]) / c.size / g0 for h in range(1, max_lag + 1)])
