"""Replicate experiments that score estimators against injected oracle values."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from ..errors import InsufficientReplicates
from ..rng import make_stream, stream_id
from .batch import BatchSchedule, batch_means


@dataclass
class ReplicateRow:
    """One replicate of a batch-means experiment; mirrors the CSV columns."""

    T: float
    ell: float
    k: int
    sigma2_hat: float
    oracle_sigma2: float
    seed: int


@dataclass
class MseReport:
    rows: list
    sigma2: float
    empirical_mse: float
    mse_ci: tuple
    predicted: float
    mean_estimate: float
    mean_ci: tuple

    @property
    def ratio(self) -> float:
        return self.empirical_mse / self.predicted if self.predicted > 0 else math.nan

    @property
    def estimates(self) -> np.ndarray:
        return np.array([r.sigma2_hat for r in self.rows])


def batch_means_replicates(sim_factory, f, schedule: BatchSchedule, T: float, reps: int,
                           seed: int, sigma2: float, key: int = 0) -> list:
    """Run ``reps`` independent batch-means estimates.

    ``sim_factory(rng, T)`` returns a trajectory stream; replicate ``i`` uses
    the stream ``(seed, key, i)``.
    """
    rows = []
    for i in range(reps):
        path = sim_factory(make_stream(seed, key, i), T)
        est = batch_means(path, f, schedule)
        rows.append(ReplicateRow(T, est.ell, est.k, est.sigma2, sigma2, stream_id(seed, key, i)))
    return rows


def _bootstrap_ci(x: np.ndarray, seed: int, level: float = 0.95) -> tuple:
    if np.all(x == x[0]):
        return float(x[0]), float(x[0])
    res = stats.bootstrap((x,), np.mean, confidence_level=level, n_resamples=2000,
                          method="percentile", rng=make_stream(seed, 2**31 - 1))
    return float(res.confidence_interval.low), float(res.confidence_interval.high)


def summarize_mse(rows: list, sigma2: float, T: float, seed: int) -> MseReport:
    if len(rows) < 100:
        raise InsufficientReplicates(f"{len(rows)} replicates; need >= 100")
    est = np.array([r.sigma2_hat for r in rows])
    sq = (est - sigma2) ** 2
    ell = rows[0].ell
    return MseReport(
        rows=rows,
        sigma2=sigma2,
        empirical_mse=float(sq.mean()),
        mse_ci=_bootstrap_ci(sq, seed),
        predicted=2.0 * sigma2**2 * ell / T,
        mean_estimate=float(est.mean()),
        mean_ci=_bootstrap_ci(est, seed + 1),
    )


def mse_experiment(sim_factory, f, schedule: BatchSchedule, T: float, reps: int, seed: int,
                   sigma2: float) -> MseReport:
    """Empirical ``E|sigma2_hat - sigma2|^2`` against the leading term ``2 sigma^4 ell / T``."""
    if reps < 100:
        raise InsufficientReplicates(f"{reps} replicates; need >= 100")
    rows = batch_means_replicates(sim_factory, f, schedule, T, reps, seed, sigma2)
    return summarize_mse(rows, sigma2, T, seed)


@dataclass
class NormalityReport:
    z: np.ndarray
    ks_statistic: float
    ks_pvalue: float
    variance_ratio: float
    level: float = 1e-3
    ratio_band: tuple | None = None

    @property
    def passed(self) -> bool:
        ok = self.ks_pvalue > self.level
        if self.ratio_band is not None:
            lo, hi = self.ratio_band
            ok = ok and lo <= self.variance_ratio <= hi
        return bool(ok)


def bm_clt_check(estimates, sigma2: float, k, level: float = 1e-3,
                 ratio_band: tuple = (0.8, 1.25)) -> NormalityReport:
    """Standardise ``sqrt(k)(sigma2_hat - sigma2) / sqrt(2 sigma^4)`` and test against N(0, 1)."""
    est = np.asarray(estimates, dtype=float)
    if est.size < 200:
        raise InsufficientReplicates(f"{est.size} replicates; need >= 200")
    k = np.broadcast_to(np.asarray(k, dtype=float), est.shape)
    z = np.sqrt(k) * (est - sigma2) / math.sqrt(2.0 * sigma2**2)
    ks = stats.kstest(z, "norm")
    ratio = float(np.var(z, ddof=1))
    return NormalityReport(z, float(ks.statistic), float(ks.pvalue), ratio, level, ratio_band)


def clt_normality_check(averages, sigma2: float, level: float = 1e-3) -> NormalityReport:
    """KS test of ``sqrt(T)(mu_hat - mu) / sigma`` against N(0, 1)."""
    avg = np.asarray(averages, dtype=float)
    if avg.size < 200:
        raise InsufficientReplicates(f"{avg.size} replicates; need >= 200")
    z = avg / math.sqrt(sigma2)
    ks = stats.kstest(z, "norm")
    return NormalityReport(z, float(ks.statistic), float(ks.pvalue), float(np.mean(z**2)), level)
