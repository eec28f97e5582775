"""Piecewise trajectories and exact additive-functional integration.

Three concrete stream types share one interface:

* :class:`JumpPath` -- piecewise-constant CTMC paths; integrals are exact.
* :class:`PdmpPath` -- piecewise-linear PDMP positions; integrals use
  3-point Gauss-Legendre per segment, exact for polynomials up to degree 5.
* :class:`GridPath` -- equally spaced diffusion samples; integrals use the
  trapezoidal rule (the integral of the linear interpolant of ``f`` values).

All estimators consume ``stream.cumulative(f, times)``, the running integral
``F(t) = int_0^t f(X_s) ds`` evaluated at arbitrary times.
"""
from __future__ import annotations

import csv
from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidModel, OutOfRange

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(3)


class TrajectoryStream(ABC):
    """Common surface of every simulated path."""

    horizon: float
    #: True when ``F`` is linear between consecutive breakpoints.
    linear_cumulative: bool = False

    @abstractmethod
    def cumulative(self, f, times) -> np.ndarray:
        """Running integral of ``f`` evaluated at ``times`` (within [0, T])."""

    @abstractmethod
    def breakpoints(self) -> np.ndarray:
        """Sorted times where the path changes regime, including 0."""

    def integrate(self, f, a: float, b: float) -> float:
        return integrate_functional(self, f, a, b)


def integrate_functional(path: TrajectoryStream, f, a: float, b: float) -> float:
    """Integral of ``f`` along ``path`` over ``[a, b]``.

    Raises
    ------
    OutOfRange
        If ``[a, b]`` is not contained in ``[0, T]``.
    """
    if not (0.0 <= a <= b <= path.horizon):
        raise OutOfRange(f"[{a}, {b}] not within [0, {path.horizon}]")
    Fa, Fb = path.cumulative(f, np.array([a, b], dtype=float))
    return float(Fb - Fa)


def _check_times(times, horizon):
    if times.ndim != 1 or times.size == 0:
        raise InvalidModel("times must be a non-empty 1-d array")
    if times[0] != 0.0:
        raise InvalidModel("first segment must start at t=0")
    if np.any(np.diff(times) < 0):
        raise InvalidModel("segment start times must be non-decreasing")
    if not horizon > 0 or times[-1] > horizon:
        raise InvalidModel("horizon must be positive and cover every segment")


@dataclass(frozen=True, eq=False)
class JumpPath(TrajectoryStream):
    """Piecewise-constant path: state ``states[k]`` on ``[times[k], times[k+1])``.

    The last holding interval runs to ``horizon``. ``f`` may be a
    state-indexed vector or a vectorized callable on integer state arrays.
    """

    states: np.ndarray
    times: np.ndarray
    horizon: float
    linear_cumulative = True

    def __post_init__(self):
        states = np.asarray(self.states, dtype=np.int64)
        times = np.asarray(self.times, dtype=float)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "horizon", float(self.horizon))
        if states.shape != times.shape:
            raise InvalidModel("states and times must have equal length")
        _check_times(times, self.horizon)
        if np.any(states[1:] == states[:-1]):
            raise InvalidModel("consecutive holding states must differ")

    @property
    def durations(self) -> np.ndarray:
        return np.diff(np.append(self.times, self.horizon))

    @property
    def n_jumps(self) -> int:
        return self.states.size - 1

    def _values(self, f) -> np.ndarray:
        if callable(f):
            return np.asarray(f(self.states), dtype=float)
        return np.asarray(f, dtype=float)[self.states]

    def cumulative(self, f, times) -> np.ndarray:
        vals = self._values(f)
        C = np.concatenate(([0.0], np.cumsum(vals * self.durations)))
        t = np.asarray(times, dtype=float)
        k = np.searchsorted(self.times, t, side="right") - 1
        return C[k] + vals[k] * (t - self.times[k])

    def breakpoints(self) -> np.ndarray:
        return self.times.copy()

    def state_at(self, t) -> np.ndarray:
        k = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.states[k]

    def occupation(self, n_states: int) -> np.ndarray:
        """Fraction of ``[0, T]`` spent in each state."""
        occ = np.bincount(self.states, weights=self.durations, minlength=n_states)
        return occ / self.horizon

    def holding_times(self, state: int | None = None) -> np.ndarray:
        """Completed holding durations (the censored final interval is dropped)."""
        dur = self.durations[:-1]
        if state is None:
            return dur
        return dur[self.states[:-1] == state]

    def restrict(self, start: float, stop: float) -> "JumpPath":
        """Sub-path on ``[start, stop]`` re-based to start at time 0."""
        if not (0.0 <= start < stop <= self.horizon):
            raise OutOfRange(f"[{start}, {stop}] not within [0, {self.horizon}]")
        k0 = np.searchsorted(self.times, start, side="right") - 1
        k1 = np.searchsorted(self.times, stop, side="left")
        times = self.times[k0:k1] - start
        times[0] = 0.0
        return JumpPath(self.states[k0:k1], times, stop - start)


@dataclass(frozen=True, eq=False)
class PdmpPath(TrajectoryStream):
    """Piecewise-linear path of a PDMP.

    Segment ``k`` starts at ``times[k]`` from ``positions[k]`` and moves with
    constant velocity ``velocities[k]`` until the next event (or the horizon).
    ``kinds[k]`` labels the event that opened segment ``k``.
    """

    times: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    kinds: np.ndarray
    horizon: float

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        pos = np.asarray(self.positions, dtype=float)
        vel = np.asarray(self.velocities, dtype=float)
        if pos.ndim == 1:
            pos = pos[:, None]
        if vel.ndim == 1:
            vel = vel[:, None]
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "velocities", vel)
        object.__setattr__(self, "kinds", np.asarray(self.kinds, dtype=object))
        object.__setattr__(self, "horizon", float(self.horizon))
        _check_times(times, self.horizon)
        if pos.shape != vel.shape or pos.shape[0] != times.size:
            raise InvalidModel("positions/velocities must be (n_events+1, d)")

    @property
    def dim(self) -> int:
        return self.positions.shape[1]

    @property
    def n_events(self) -> int:
        return self.times.size - 1

    @property
    def durations(self) -> np.ndarray:
        return np.diff(np.append(self.times, self.horizon))

    def end_positions(self) -> np.ndarray:
        """Position at the end of every segment."""
        return self.positions + self.velocities * self.durations[:, None]

    def _segment_integrals(self, f, k, h) -> np.ndarray:
        # Gauss-Legendre on [t_k, t_k + h] for each (k, h) pair
        h = np.asarray(h, dtype=float)
        s = 0.5 * h[:, None] * (1.0 + _GL_NODES[None, :])
        pts = self.positions[k][:, None, :] + self.velocities[k][:, None, :] * s[..., None]
        vals = np.asarray(f(pts.reshape(-1, self.dim)), dtype=float).reshape(s.shape)
        return 0.5 * h * (vals @ _GL_WEIGHTS)

    def cumulative(self, f, times) -> np.ndarray:
        nseg = self.times.size
        seg = self._segment_integrals(f, np.arange(nseg), self.durations)
        C = np.concatenate(([0.0], np.cumsum(seg)))
        t = np.atleast_1d(np.asarray(times, dtype=float))
        k = np.searchsorted(self.times, t, side="right") - 1
        out = C[k] + self._segment_integrals(f, k, t - self.times[k])
        return out.reshape(np.shape(times))

    def breakpoints(self) -> np.ndarray:
        return self.times.copy()

    def position_at(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        k = np.searchsorted(self.times, t, side="right") - 1
        return self.positions[k] + self.velocities[k] * (t - self.times[k])[..., None]

    def velocity_at(self, t) -> np.ndarray:
        k = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right") - 1
        return self.velocities[k]

    def velocity_integral(self, g) -> float:
        """Exact ``int_0^T g(V_s) ds`` (velocities are constant per segment)."""
        return float(np.dot(np.asarray(g(self.velocities), dtype=float), self.durations))

    def to_csv(self, path) -> None:
        d = self.dim
        header = ["t_event"] + [f"x_{i + 1}" for i in range(d)] + [f"v_{i + 1}" for i in range(d)]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header + ["event_kind"])
            for k in range(self.times.size):
                w.writerow(
                    [repr(float(self.times[k]))]
                    + [repr(float(x)) for x in self.positions[k]]
                    + [repr(float(v)) for v in self.velocities[k]]
                    + [self.kinds[k]]
                )


@dataclass(frozen=True, eq=False)
class GridPath(TrajectoryStream):
    """Values ``x_0..x_m`` at times ``k * step``; horizon ``m * step``."""

    step: float
    values: np.ndarray
    horizon: float = field(init=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.ndim != 1 or vals.size < 2:
            raise InvalidModel("GridPath needs at least two samples")
        if not self.step > 0:
            raise InvalidModel("step must be positive")
        if not np.all(np.isfinite(vals)):
            raise InvalidModel("GridPath values must be finite")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "horizon", (vals.size - 1) * float(self.step))

    @property
    def m(self) -> int:
        return self.values.size - 1

    def _fvals(self, f) -> np.ndarray:
        if f is None:
            return self.values
        return np.asarray(f(self.values), dtype=float)

    def cumulative(self, f, times) -> np.ndarray:
        fv = self._fvals(f)
        h = self.step
        C = np.concatenate(([0.0], np.cumsum(0.5 * h * (fv[:-1] + fv[1:]))))
        t = np.asarray(times, dtype=float)
        k = np.clip(np.floor(t / h).astype(np.int64), 0, self.m - 1)
        th = t / h - k
        return C[k] + h * (th * fv[k] + 0.5 * th * th * (fv[k + 1] - fv[k]))

    def breakpoints(self) -> np.ndarray:
        return np.arange(self.m + 1) * self.step

    def grid_cumulative(self, f) -> np.ndarray:
        """Trapezoidal running integral at every grid point."""
        fv = self._fvals(f)
        return np.concatenate(([0.0], np.cumsum(0.5 * self.step * (fv[:-1] + fv[1:]))))

    def to_csv(self, path) -> None:
        t = self.breakpoints()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x"])
            for ti, xi in zip(t, self.values):
                w.writerow([repr(float(ti)), repr(float(xi))])


def coordinate(i: int = 0):
    """Functional ``x -> x_i`` for PDMP paths."""

    def f(x):
        return x[:, i]

    f.__name__ = f"x{i}"
    return f


def monomial(p: int, i: int = 0):
    """Functional ``x -> x_i ** p`` for PDMP paths."""

    def f(x):
        return x[:, i] ** p

    f.__name__ = f"x{i}^{p}"
    return f
