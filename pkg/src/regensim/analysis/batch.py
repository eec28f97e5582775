"""Batch-means variance estimation and batch-size schedules."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidExponents, TooFewBatches
from ..trajectory import TrajectoryStream


@dataclass(frozen=True)
class BatchSchedule:
    """Batch length rule ``ell_T``.

    Parameters
    ----------
    exponent : power rule ``ell_T = ceil(T ** exponent)`` with ``0 < exponent < 1``.
    table : explicit ``{T: ell}`` mapping, used instead of the power rule.
    q, delta : moment parameters entering ``psi_T``.
    lam_prime : invariance-principle exponent parameter ``lambda'``.
    """

    exponent: float | None = 2.0 / 3.0
    table: dict | None = None
    q: float = 2.0
    delta: float = 2.0
    lam_prime: float = 0.25

    def __post_init__(self):
        if self.table is None:
            if self.exponent is None or not (0.0 < self.exponent < 1.0):
                raise InvalidExponents(f"batch exponent must lie in (0, 1), got {self.exponent}")
        if self.q <= 0 or self.delta <= 0 or self.lam_prime <= 0:
            raise InvalidExponents("q, delta and lam_prime must be positive")

    def ell(self, T: float) -> float:
        if self.table is not None:
            return float(self.table[T])
        return float(math.ceil(T**self.exponent))

    def k(self, T: float) -> int:
        return _count_batches(T, self.ell(T))

    @property
    def lam(self) -> float:
        return sip_lambda(self.delta, self.lam_prime)


def sip_lambda(delta: float, lam_prime: float) -> float:
    """``lambda = min(delta / (2 delta + 4), lambda')``."""
    return min(delta / (2.0 * delta + 4.0), lam_prime)


def psi_rate(T: float, q: float, delta: float) -> float:
    """``psi_T = max(T^{1/(2q)} log T, T^{1/(2+delta)} log^2 T)``.

    ``delta = inf`` is accepted and gives ``log^2 T`` for the second term.
    """
    if not (q > 0 and delta > 0 and T > 1):
        raise ValueError("need q > 0, delta > 0 and T > 1")
    L = math.log(T)
    return max(T ** (1.0 / (2.0 * q)) * L, T ** (1.0 / (2.0 + delta)) * L * L)


def psi_power(T: float, lam: float) -> float:
    """Invariance-principle rate in power form, ``psi_T = T^{1/2 - lambda}``."""
    return T ** (0.5 - lam)


@dataclass(frozen=True, eq=False)
class BatchMeansEstimate:
    ell: float
    k: int
    batch_means: np.ndarray
    sigma2: float
    batch_integrals: np.ndarray = field(repr=False)
    tail_integral: float = 0.0
    total_integral: float = 0.0

    @property
    def mean(self) -> float:
        return float(self.batch_means.mean())


def _count_batches(T: float, ell: float) -> int:
    k = int(math.floor(T / ell))
    while k > 0 and k * ell > T:
        k -= 1
    while (k + 1) * ell <= T:
        k += 1
    return k


def _count_windows(T: float, ell: float, stride: float) -> int:
    n = int(math.floor((T - ell) / stride)) + 1
    while n > 0 and (n - 1) * stride + ell > T:
        n -= 1
    while n * stride + ell <= T:
        n += 1
    return n


def _window_integrals(stream: TrajectoryStream, f, starts: np.ndarray, ell: float):
    times = np.concatenate((starts, starts + ell, [stream.horizon]))
    F = stream.cumulative(f, times)
    n = starts.size
    return F[n:2 * n] - F[:n], F


def _variance_of_means(means: np.ndarray, ell: float) -> float:
    d = means - means.mean()
    return float(ell * np.dot(d, d) / (means.size - 1))


def batch_means(stream: TrajectoryStream, f, schedule) -> BatchMeansEstimate:
    """Non-overlapping batch means ``sigma^2 = ell / (k - 1) sum (Zbar_i - Zbar)^2``.

    ``schedule`` is a :class:`BatchSchedule` or a batch length. The trailing
    partial batch is discarded.
    """
    T = stream.horizon
    ell = schedule.ell(T) if isinstance(schedule, BatchSchedule) else float(schedule)
    if not ell > 0:
        raise ValueError("batch length must be positive")
    k = _count_batches(T, ell)
    if k < 2:
        raise TooFewBatches(f"k = {k} batches of length {ell} in T = {T}; need >= 2")
    starts = ell * np.arange(k)
    ints, F = _window_integrals(stream, f, starts, ell)
    means = ints / ell
    tail = float(F[-1] - F[2 * k - 1])
    return BatchMeansEstimate(ell, k, means, _variance_of_means(means, ell), ints, tail, float(F[-1]))


def overlapping_batch_means(stream: TrajectoryStream, f, ell: float, stride: float) -> BatchMeansEstimate:
    """Batch means over windows ``[j stride, j stride + ell]``.

    Uses the same normalisation as :func:`batch_means`, to which it reduces
    exactly when ``stride == ell``.
    """
    T = stream.horizon
    ell = float(ell)
    stride = float(stride)
    if not (0 < stride <= ell):
        raise ValueError("need 0 < stride <= ell")
    n = _count_windows(T, ell, stride)
    if n < 2 or T < 2 * ell:
        raise TooFewBatches(f"{n} windows of length {ell} in T = {T}; need T >= 2 ell")
    starts = stride * np.arange(n)
    ints, F = _window_integrals(stream, f, starts, ell)
    means = ints / ell
    tail = float(F[-1] - F[2 * n - 1])
    return BatchMeansEstimate(ell, n, means, _variance_of_means(means, ell), ints, tail, float(F[-1]))


def _trend(values: np.ndarray) -> str:
    d = np.diff(values)
    if np.all(d < 0):
        return "decreasing"
    if np.all(d > 0):
        return "increasing"
    return "mixed"


@dataclass
class ScheduleReport:
    grid: np.ndarray
    ell: np.ndarray
    k: np.ndarray
    growth_ok: bool
    monotone_ok: bool
    summability_c: float
    consistency_quantity: np.ndarray
    consistency_trend: str
    clt_quantity: np.ndarray
    clt_trend: str
    lam: float
    in_consistency_region: bool
    in_clt_region: bool

    @property
    def passed(self) -> bool:
        return self.growth_ok and self.monotone_ok and self.consistency_trend == "decreasing"

    def as_dict(self) -> dict:
        return {
            "growth_ok": self.growth_ok,
            "monotone_ok": self.monotone_ok,
            "summability_c_min": self.summability_c,
            "lambda": self.lam,
            "consistency_trend": self.consistency_trend,
            "in_consistency_region": self.in_consistency_region,
            "clt_trend": self.clt_trend,
            "in_clt_region": self.in_clt_region,
            "passed": self.passed,
        }


def validate_batch_schedule(schedule: BatchSchedule, grid) -> ScheduleReport:
    """Check a power-rule schedule against the batch-means growth conditions.

    Reported items:

    1. ``ell_T`` and ``k_T`` grow and ``ell_T / T`` shrinks along the grid;
    2. ``ell_T`` is non-decreasing and ``ell_T / T`` non-increasing;
    3. the smallest exponent ``c`` with ``sum k_n^{-c} < infinity``,
       ``c > 1 / (1 - a)``;
    4. the trend of ``psi_T^2 log T / ell_T`` with ``psi_T = T^{1/2 - lambda}``
       (must decrease), plus the same for ``psi_T sqrt(T log T) / ell_T``,
       the condition for a CLT of the estimator.

    The closed-form regions ``a > 1 - 2 lambda`` (consistency) and
    ``a > 1 - lambda`` (CLT) are reported alongside.
    """
    if schedule.exponent is None or schedule.table is not None:
        raise ValueError("schedule validation needs a power rule")
    grid = np.sort(np.asarray(grid, dtype=float))
    a = schedule.exponent
    ell = np.array([schedule.ell(T) for T in grid])
    k = np.array([schedule.k(T) for T in grid])
    ratio = ell / grid
    growth = bool(np.all(np.diff(ell) > 0) and np.all(np.diff(k) > 0) and np.all(np.diff(ratio) < 0))
    monotone = bool(np.all(np.diff(ell) >= 0) and np.all(np.diff(ratio) <= 0))
    lam = schedule.lam
    psi = np.array([psi_power(T, lam) for T in grid])
    logT = np.log(grid)
    cons = psi**2 * logT / ell
    clt = psi * np.sqrt(grid * logT) / ell
    return ScheduleReport(
        grid=grid,
        ell=ell,
        k=k,
        growth_ok=growth,
        monotone_ok=monotone,
        summability_c=1.0 / (1.0 - a),
        consistency_quantity=cons,
        consistency_trend=_trend(cons),
        clt_quantity=clt,
        clt_trend=_trend(clt),
        lam=lam,
        in_consistency_region=a > 1.0 - 2.0 * lam,
        in_clt_region=a > 1.0 - lam,
    )
