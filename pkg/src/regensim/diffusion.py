"""One-dimensional diffusions: exact OU sampling, Euler-Maruyama, and the
scale-function / speed-density regularity computations.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, signal

from .errors import InvalidModel, NumericalBlowup, QuadratureFailure
from .trajectory import GridPath

QUAD_RTOL = 1e-8


@dataclass(frozen=True, eq=False)
class SdeModel:
    """``dX = b(X) dt + sigma(X) dW`` on ``(lower, upper)``.

    ``x_ref`` is the base point of the scale integral.
    """

    drift: Callable[[float], float]
    vol: Callable[[float], float]
    lower: float = -math.inf
    upper: float = math.inf
    x_ref: float = 0.0
    name: str = "custom"

    def check_ellipticity(self, probes) -> None:
        for u in np.asarray(probes, dtype=float):
            if not self.vol(float(u)) > 0:
                raise InvalidModel(f"sigma({u}) <= 0: model is not elliptic")

    def with_reference(self, x_ref: float) -> "SdeModel":
        return SdeModel(self.drift, self.vol, self.lower, self.upper, x_ref, self.name)


def ou_model(theta: float = 1.0, sigma: float = math.sqrt(2.0)) -> SdeModel:
    return SdeModel(lambda x: -theta * x, lambda x: sigma, name="ou")


def brownian_model(sigma: float = 1.0) -> SdeModel:
    return SdeModel(lambda x: 0.0, lambda x: sigma, name="brownian")


def double_well_model() -> SdeModel:
    """Gradient diffusion for ``U(x) = x^4/4 - x^2/2`` with ``sigma = sqrt 2``."""
    return SdeModel(lambda x: x - x**3, lambda x: math.sqrt(2.0), name="double-well")


BUILTIN_SDES = {
    "ou": lambda theta=1.0, sigma=math.sqrt(2.0), **kw: ou_model(theta, sigma),
    "brownian": lambda sigma=1.0, **kw: brownian_model(sigma),
    "double-well": lambda **kw: double_well_model(),
}


def ou_simulate_exact(theta: float, sigma: float, x0, T: float, delta: float,
                      rng: np.random.Generator) -> GridPath:
    """OU path sampled from its exact Gaussian transition on a grid of step ``delta``.

    ``X_{t+delta} | X_t = x ~ N(x e^{-theta delta}, sigma^2 (1 - e^{-2 theta delta}) / (2 theta))``.
    Pass ``x0=None`` to start from the stationary law ``N(0, sigma^2 / (2 theta))``.
    """
    if not (theta > 0 and sigma > 0 and delta > 0):
        raise ValueError("theta, sigma and delta must be positive")
    m = int(round(T / delta))
    if m < 1:
        raise ValueError("T must be at least one step")
    if x0 is None:
        x0 = math.sqrt(sigma**2 / (2 * theta)) * rng.standard_normal()
    a = math.exp(-theta * delta)
    sd = sigma * math.sqrt(-math.expm1(-2 * theta * delta) / (2 * theta))
    noise = sd * rng.standard_normal(m)
    path, _ = signal.lfilter([1.0], [1.0, -a], noise, zi=[a * float(x0)])
    return GridPath(delta, np.concatenate(([float(x0)], path)))


def euler_maruyama_ensemble(model: SdeModel, x0, T: float, delta: float,
                            rng: np.random.Generator, guard: float = 1e8) -> np.ndarray:
    """Euler-Maruyama for a batch of independent paths; returns ``(m + 1, n_paths)``.

    ``drift`` and ``vol`` must accept numpy arrays.
    """
    if not delta > 0:
        raise ValueError("delta must be positive")
    m = int(round(T / delta))
    x = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
    out = np.empty((m + 1, x.size))
    out[0] = x
    sq = math.sqrt(delta)
    for k in range(m):
        xi = rng.standard_normal(x.size)
        x = x + np.asarray(model.drift(x), float) * delta + np.asarray(model.vol(x), float) * sq * xi
        if not np.all(np.abs(x) <= guard):
            raise NumericalBlowup(f"|X| exceeded {guard:g} at step {k + 1}")
        out[k + 1] = x
    return out


def euler_maruyama(model: SdeModel, x0: float, T: float, delta: float,
                   rng: np.random.Generator, guard: float = 1e8) -> GridPath:
    """``X_{k+1} = X_k + b(X_k) delta + sigma(X_k) sqrt(delta) xi_k``."""
    vals = euler_maruyama_ensemble(model, [x0], T, delta, rng, guard)[:, 0]
    return GridPath(delta, vals)


def _quad(fun, a, b, epsrel=QUAD_RTOL, epsabs=0.0):
    if a == b:
        return 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("error", integrate.IntegrationWarning)
        try:
            val, err = integrate.quad(fun, a, b, epsabs=epsabs, epsrel=epsrel, limit=200)
        except (integrate.IntegrationWarning, OverflowError, ZeroDivisionError) as exc:
            raise QuadratureFailure(str(exc)) from exc
    if not math.isfinite(val) or err > max(epsrel * abs(val), epsabs, 1e-14):
        raise QuadratureFailure(f"quadrature error {err:.3e} on [{a}, {b}]")
    return val


def _scale_exponent(model: SdeModel, z: float) -> float:
    # absolute floor: the exponent can pass through zero, where a relative tolerance is unattainable
    return _quad(lambda y: 2.0 * model.drift(y) / model.vol(y) ** 2, model.x_ref, z, epsabs=1e-12)


def scale_density(model: SdeModel, z: float) -> float:
    """``s'(z) = exp(-2 int_{x_ref}^z b / sigma^2)``."""
    return math.exp(-_scale_exponent(model, z))


def scale_function(model: SdeModel, u: float) -> float:
    """``s(u) = int_{x_ref}^u s'(z) dz`` by nested adaptive quadrature (rtol 1e-8)."""
    if not (model.lower <= u <= model.upper):
        raise ValueError(f"u={u} outside the state space")
    return _quad(lambda z: scale_density(model, z), model.x_ref, u)


def speed_density(model: SdeModel, u: float) -> float:
    """Speed density ``m(u) = 1 / (s'(u) sigma^2(u))``."""
    if not (model.lower <= u <= model.upper):
        raise ValueError(f"u={u} outside the state space")
    return math.exp(_scale_exponent(model, u)) / model.vol(u) ** 2


def speed_measure_total(model: SdeModel, lower=None, upper=None) -> float:
    """``int m(u) du`` over the state space (or ``[lower, upper]``)."""
    lo = model.lower if lower is None else lower
    hi = model.upper if upper is None else upper
    return _quad(lambda u: speed_density(model, u), lo, hi)


def stationary_density(model: SdeModel, u: float, total: float | None = None) -> float:
    """Normalized speed density, the invariant density of a positive recurrent diffusion."""
    if total is None:
        total = speed_measure_total(model)
    return speed_density(model, u) / total


@dataclass
class RecurrenceReport:
    points: np.ndarray
    scale: np.ndarray
    tails: dict = field(default_factory=dict)

    @property
    def verdict(self) -> str:
        bad = [side for side, ok in self.tails.items() if not ok]
        if not bad:
            return "DivergesBothTails"
        return "InconclusiveTail(" + ",".join(bad) + ")"


def recurrence_check(model: SdeModel, probe) -> RecurrenceReport:
    """Heuristic tail check of the scale function.

    ``probe`` must contain points on both sides of ``x_ref``. A tail counts
    as diverging when the outermost increment of ``s`` between successive
    probes is at least as large as the preceding one (the growth of ``s`` is
    not slowing down). Nothing is claimed about an actual limit.
    """
    pts = np.sort(np.asarray(probe, dtype=float))
    upper = pts[pts > model.x_ref]
    lower = pts[pts < model.x_ref][::-1]
    if upper.size < 3 or lower.size < 3:
        raise ValueError("probe needs >= 3 points on each side of x_ref")
    s = np.array([scale_function(model, float(u)) for u in pts])
    tails = {}
    for side, seq in (("lower", lower), ("upper", upper)):
        vals = np.array([s[np.searchsorted(pts, u)] for u in seq])
        inc = np.abs(np.diff(np.concatenate(([0.0], vals))))
        tails[side] = bool(inc[-1] >= inc[-2] and np.all(np.diff(np.abs(vals)) > 0))
    return RecurrenceReport(pts, s, tails)
