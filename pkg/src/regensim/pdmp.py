"""Zig-Zag and Bouncy Particle samplers with exact piecewise-linear output.

Event times are drawn either by exact inversion of the integrated rate (for
Gaussian targets, where every rate is affine in time along a segment) or by
Poisson thinning against user-declared affine dominating rates. A true rate
above its declared bound is a hard error.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidModel, ThinningBoundViolated
from .trajectory import PdmpPath

_BOUND_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class PdmpState:
    x: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", np.atleast_1d(np.asarray(self.x, dtype=float)).copy())
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)).copy())
        if self.x.shape != self.v.shape:
            raise InvalidModel("x and v must have the same shape")


@dataclass(frozen=True, eq=False)
class TargetPotential:
    """Target ``pi(dx) ~ exp(-U(x)) dx``.

    Parameters
    ----------
    dim : int
    potential, grad : callables on a length-``dim`` array.
    precision : optional diagonal precision. When set, the target is the
        centred Gaussian with that precision and event times are sampled by
        exact inversion.
    zigzag_bound : optional ``(x, v) -> (a, b)`` with per-coordinate arrays
        such that ``(v_i d_iU(x + v s))_+ <= a_i + b_i s`` for all ``s >= 0``.
    bps_bound : optional ``(x, v) -> (a, b)`` scalars bounding
        ``(v . grad U(x + v s))_+`` the same way.
    """

    dim: int
    potential: Callable
    grad: Callable
    precision: np.ndarray | None = None
    zigzag_bound: Callable | None = None
    bps_bound: Callable | None = None
    name: str = "custom"

    def check_gradient(self, rng: np.random.Generator, n_probes: int = 10, tol: float = 1e-5,
                       scale: float = 1.0) -> float:
        """Max discrepancy between ``grad`` and central finite differences of ``potential``.

        Raises ``InvalidModel`` above ``tol``.
        """
        h = 1e-5
        worst = 0.0
        for _ in range(n_probes):
            x = scale * rng.standard_normal(self.dim)
            g = np.asarray(self.grad(x), dtype=float)
            for i in range(self.dim):
                e = np.zeros(self.dim)
                e[i] = h
                fd = (self.potential(x + e) - self.potential(x - e)) / (2 * h)
                worst = max(worst, abs(fd - g[i]) / max(1.0, abs(g[i])))
        if worst > tol:
            raise InvalidModel(f"gradient mismatch {worst:.2e} > {tol}")
        return worst


def gaussian_target(dim: int = 1, scales=None) -> TargetPotential:
    """Centred Gaussian with per-coordinate standard deviations ``scales``."""
    s = np.ones(dim) if scales is None else np.broadcast_to(np.asarray(scales, float), (dim,)).copy()
    prec = 1.0 / s**2
    name = "isotropic-gaussian" if np.all(s == s[0]) else "diagonal-gaussian"
    return TargetPotential(
        dim=dim,
        potential=lambda x: 0.5 * float(np.sum(prec * np.asarray(x) ** 2)),
        grad=lambda x: prec * np.asarray(x, dtype=float),
        precision=prec,
        name=name,
    )


def logistic_target(dim: int = 1) -> TargetPotential:
    """Product of standard logistic densities, ``U(x) = sum 2 log(2 cosh(x_i / 2))``.

    ``|d_i U| = |tanh(x_i / 2)| < 1`` gives constant dominating rates.
    """

    def potential(x):
        x = np.asarray(x, dtype=float)
        return float(np.sum(np.logaddexp(x / 2, -x / 2) * 2))

    def grad(x):
        return np.tanh(np.asarray(x, dtype=float) / 2)

    return TargetPotential(
        dim=dim,
        potential=potential,
        grad=grad,
        zigzag_bound=lambda x, v: (np.ones(dim), np.zeros(dim)),
        bps_bound=lambda x, v: (float(np.sum(np.abs(v))), 0.0),
        name="logistic",
    )


BUILTIN_TARGETS = {
    "isotropic-gaussian": lambda dim=1, **kw: gaussian_target(dim),
    "diagonal-gaussian": lambda dim=1, scales=None, **kw: gaussian_target(dim, scales),
    "logistic": lambda dim=1, **kw: logistic_target(dim),
}


def affine_event_time(a: float, b: float, e: float) -> float:
    """First time ``tau`` with ``int_0^tau (a + b s)_+ ds = e`` (``b >= 0``)."""
    if b > 0:
        if a >= 0:
            return 2.0 * e / (a + math.sqrt(a * a + 2.0 * b * e))
        return (-a + math.sqrt(2.0 * b * e)) / b
    if a > 0:
        return e / a
    return math.inf


class _Recorder:
    def __init__(self, x, v):
        self.t = [0.0]
        self.x = [x.copy()]
        self.v = [v.copy()]
        self.kind = ["start"]

    def add(self, t, x, v, kind):
        self.t.append(t)
        self.x.append(x.copy())
        self.v.append(v.copy())
        self.kind.append(kind)

    def path(self, T):
        return PdmpPath(np.array(self.t), np.array(self.x), np.array(self.v),
                        np.array(self.kind, dtype=object), T)


class _ExpStream:
    """Chunked standard exponentials / uniforms from one generator."""

    def __init__(self, rng, chunk=4096):
        self.rng = rng
        self.chunk = chunk
        self._e = []
        self._u = []

    def exp(self):
        if not self._e:
            self._e = self.rng.standard_exponential(self.chunk).tolist()
            self._e.reverse()
        return self._e.pop()

    def unif(self):
        if not self._u:
            self._u = self.rng.random(self.chunk).tolist()
            self._u.reverse()
        return self._u.pop()


def zigzag_simulate(target: TargetPotential, z0: PdmpState, T: float,
                    rng: np.random.Generator) -> PdmpPath:
    """Zig-Zag process with switching rates ``lambda_i(x, v) = (v_i d_iU(x))_+``.

    Each event flips exactly one velocity coordinate.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    x = z0.x.copy()
    v = z0.v.copy()
    if x.size != target.dim:
        raise InvalidModel("state dimension does not match target")
    if not np.all(np.abs(v) == 1.0):
        raise InvalidModel("Zig-Zag velocities must be in {-1, +1}^d")
    rec = _Recorder(x, v)
    draws = _ExpStream(rng)
    t = 0.0
    d = target.dim

    if target.precision is not None:
        prec = target.precision.tolist()
        xs = x.tolist()
        vs = v.tolist()
        while True:
            best, bi = math.inf, -1
            for i in range(d):
                tau = affine_event_time(prec[i] * vs[i] * xs[i], prec[i], draws.exp())
                if tau < best:
                    best, bi = tau, i
            if t + best >= T:
                break
            t += best
            for i in range(d):
                xs[i] += vs[i] * best
            vs[bi] = -vs[bi]
            rec.add(t, np.array(xs), np.array(vs), f"flip{bi}")
        return rec.path(T)

    if target.zigzag_bound is None:
        raise InvalidModel("non-Gaussian targets need zigzag_bound for thinning")
    while True:
        a, b = target.zigzag_bound(x, v)
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        taus = [affine_event_time(a[i], b[i], draws.exp()) for i in range(d)]
        i = int(np.argmin(taus))
        tau = taus[i]
        if t + tau >= T:
            break
        t += tau
        x = x + v * tau
        bound = a[i] + b[i] * tau
        rate = max(v[i] * float(target.grad(x)[i]), 0.0)
        if rate > bound * (1 + _BOUND_SLACK) + _BOUND_SLACK:
            raise ThinningBoundViolated(f"rate {rate} > bound {bound} at t={t}")
        if draws.unif() * bound < rate:
            v = v.copy()
            v[i] = -v[i]
            rec.add(t, x, v, f"flip{i}")
    return rec.path(T)


def _refresh_velocity(rng, d, law):
    g = rng.standard_normal(d)
    if law == "sphere":
        return g / np.linalg.norm(g)
    return g


def bps_simulate(target: TargetPotential, refresh_rate: float, z0: PdmpState, T: float,
                 rng: np.random.Generator, velocity_law: str = "sphere") -> PdmpPath:
    """Bouncy Particle Sampler with bounce rate ``(v . grad U(x))_+`` plus refreshment.

    Bounces reflect ``v`` in the hyperplane orthogonal to ``grad U``; at a
    refresh ``v`` is redrawn from ``velocity_law`` (``"sphere"`` for uniform
    unit vectors, ``"gaussian"`` for standard normal). A bounce where the
    gradient vanishes is handled as a refresh.
    """
    if not refresh_rate > 0:
        raise ValueError("refresh_rate must be positive")
    if not T > 0:
        raise ValueError("T must be positive")
    if velocity_law not in ("sphere", "gaussian"):
        raise ValueError(f"unknown velocity law {velocity_law!r}")
    x = z0.x.copy()
    v = z0.v.copy()
    d = target.dim
    if x.size != d:
        raise InvalidModel("state dimension does not match target")
    if not np.linalg.norm(v) > 0:
        raise InvalidModel("BPS velocity must be non-zero")
    rec = _Recorder(x, v)
    draws = _ExpStream(rng)
    t = 0.0
    exact = target.precision is not None
    if not exact and target.bps_bound is None:
        raise InvalidModel("non-Gaussian targets need bps_bound for thinning")
    prec = target.precision

    while True:
        if exact:
            a = float(np.dot(v * prec, x))
            b = float(np.dot(v * prec, v))
        else:
            a, b = target.bps_bound(x, v)
        tau_b = affine_event_time(a, b, draws.exp())
        tau_r = draws.exp() / refresh_rate
        tau = min(tau_b, tau_r)
        if t + tau >= T:
            break
        t += tau
        x = x + v * tau
        if tau_r <= tau_b:
            v = _refresh_velocity(rng, d, velocity_law)
            rec.add(t, x, v, "refresh")
            continue
        g = np.asarray(target.grad(x), dtype=float)
        vg = float(np.dot(v, g))
        if not exact:
            bound = a + b * tau
            rate = max(vg, 0.0)
            if rate > bound * (1 + _BOUND_SLACK) + _BOUND_SLACK:
                raise ThinningBoundViolated(f"rate {rate} > bound {bound} at t={t}")
            if draws.unif() * bound >= rate:
                continue
        gg = float(np.dot(g, g))
        if gg == 0.0:
            v = _refresh_velocity(rng, d, velocity_law)
            rec.add(t, x, v, "refresh")
            continue
        v = v - 2.0 * vg / gg * g
        rec.add(t, x, v, "bounce")
    return rec.path(T)


def ergodic_average(path: PdmpPath, f) -> float:
    """Time average ``(1/T) int_0^T f(X_s) ds`` of a PDMP path."""
    return path.integrate(f, 0.0, path.horizon) / path.horizon
