"""Continuous-time Nummelin splitting on a finite CTMC.

The resolvent chain ``X_{T_n}`` (``T_n`` a unit-rate Poisson clock) satisfies
``U(x, .) >= alpha nu(.)`` for ``x`` in a small set ``C``. Marking each
sampling time with ``u_n ~ Uniform[0, 1]`` and moving by

* ``nu``                                  if ``x in C`` and ``u_n <= alpha``,
* ``W(x, .) = (U(x, .) - alpha nu) / (1 - alpha)``   if ``x in C`` and ``u_n > alpha``,
* ``U(x, .)``                             otherwise,

gives the split resolvent chain. The continuous path between sampling times
is filled in with an endpoint-conditioned bridge, after the inter-sampling
time has been drawn from its conditional law
``p_t(x, x') e^{-t} / U(x, x') dt``. Hits of the atom ``C x [0, alpha]`` are
followed, one sampling time later, by a regeneration from ``nu``.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass

import numpy as np

from .ctmc import (
    CtmcModel,
    forward_batch,
    resolvent,
    simulate_ctmc,
    stationary_distribution,
    transition_matrix,
)
from .errors import (
    DegenerateSmallSet,
    EnvelopeViolation,
    InsufficientCycles,
    NegativeResidual,
    RejectionBudgetExceeded,
)
from .stats import autocorrelation
from .trajectory import JumpPath, TrajectoryStream

RESIDUAL_TOL = 1e-12
DEFAULT_MAX_ATTEMPTS = 1_000_000


@dataclass(frozen=True, eq=False)
class MinorisationCert:
    """Certificate ``U(x, y) >= alpha nu(y)`` for all ``x`` in ``C``."""

    C: tuple
    alpha: float
    nu: np.ndarray

    def in_set(self, n: int) -> np.ndarray:
        mask = np.zeros(n, dtype=bool)
        mask[list(self.C)] = True
        return mask

    def slack(self, U) -> float:
        """Smallest ``U(x, y) - alpha nu(y)`` over ``x in C``; non-negative for a valid cert."""
        U = np.asarray(U)
        return float(np.min(U[list(self.C)] - self.alpha * self.nu[None, :]))

    def regeneration_constant(self, pi) -> float:
        """``alpha * pi(C)``: long-run fraction of sampling times that hit the atom."""
        return float(self.alpha * np.sum(np.asarray(pi)[list(self.C)]))


def build_minorisation(model: CtmcModel, C) -> MinorisationCert:
    """Minorisation of the resolvent on ``C`` with ``nu`` the normalised row-minimum.

    ``nu(y) ~ min_{x in C} U(x, y)`` for ``y in C`` and
    ``alpha = sum_{y in C} min_{x in C} U(x, y)``, the largest constant for
    this choice of ``nu``.
    """
    C = tuple(sorted({int(c) for c in C}))
    if not C:
        raise DegenerateSmallSet("C must be non-empty")
    if C[0] < 0 or C[-1] >= model.n:
        raise DegenerateSmallSet("C contains unknown states")
    U = resolvent(model)
    idx = list(C)
    mins = U[np.ix_(idx, idx)].min(axis=0)
    alpha = float(mins.sum())
    if not (0.0 < alpha < 1.0):
        raise DegenerateSmallSet(f"alpha = {alpha} is not in (0, 1)")
    nu = np.zeros(model.n)
    nu[idx] = mins / alpha
    return MinorisationCert(C, alpha, nu)


@dataclass(frozen=True, eq=False)
class SplitKernel:
    """Resolvent ``U`` split into the regeneration and residual parts.

    ``W`` holds residual rows for ``x in C``; rows outside ``C`` are NaN.
    """

    cert: MinorisationCert
    U: np.ndarray
    W: np.ndarray

    def reconstruction_error(self) -> float:
        idx = list(self.cert.C)
        a = self.cert.alpha
        rebuilt = a * self.cert.nu[None, :] + (1 - a) * self.W[idx]
        return float(np.max(np.abs(rebuilt - self.U[idx])))

    def move_rows(self) -> np.ndarray:
        """Law of the next resolvent state when no regeneration happens."""
        rows = self.U.copy()
        idx = list(self.cert.C)
        rows[idx] = self.W[idx]
        return rows


def residual_kernel(cert: MinorisationCert, U) -> SplitKernel:
    U = np.asarray(U, dtype=float)
    idx = list(cert.C)
    W = np.full_like(U, np.nan)
    if cert.alpha == 0.0:
        W[idx] = U[idx]
        return SplitKernel(cert, U, W)
    res = (U[idx] - cert.alpha * cert.nu[None, :]) / (1.0 - cert.alpha)
    if np.any(res < -RESIDUAL_TOL):
        raise NegativeResidual(f"residual entry {res.min():.3e} < 0: certificate violated")
    W[idx] = np.clip(res, 0.0, None)
    return SplitKernel(cert, U, W)


def sample_sampling_time(x: int, xp: int, model: CtmcModel, U, rng: np.random.Generator,
                         max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> float:
    """Draw ``sigma`` from ``p_t(x, xp) e^{-t} / U(x, xp)`` by rejection.

    Proposal ``Exp(1)``; envelope constant ``1 / U(x, xp)`` since ``p_t <= 1``;
    a proposal ``t`` is kept with probability ``p_t(x, xp)``, so the mean
    acceptance rate is ``U(x, xp)``.
    """
    for _ in range(max_attempts):
        t = rng.standard_exponential()
        p = transition_matrix(model, t)[x, xp]
        if p > 1.0 + 1e-12:
            raise EnvelopeViolation(f"p_t = {p} exceeds 1")
        if rng.random() < p:
            return float(t)
    raise RejectionBudgetExceeded(f"no sampling time accepted in {max_attempts} attempts")


def sample_bridge(x: int, xp: int, t: float, model: CtmcModel, rng: np.random.Generator,
                  max_attempts: int = DEFAULT_MAX_ATTEMPTS) -> JumpPath:
    """CTMC path on ``[0, t]`` from ``x`` conditioned to be in ``xp`` at time ``t``.

    Forward paths are simulated until one ends in ``xp``.
    """
    for _ in range(max_attempts):
        frag = simulate_ctmc(model, x, t, rng)
        if frag.states[-1] == xp:
            return frag
    raise RejectionBudgetExceeded(f"no bridge {x}->{xp} over t={t} in {max_attempts} attempts")


@dataclass(frozen=True, eq=False)
class SplitChainPath(TrajectoryStream):
    """The split process observed on ``[0, T]``.

    ``path`` is the first coordinate ``Z^1``; index ``n`` of the other arrays
    refers to sampling time ``T_n``: ``states[n] = Z^1_{T_n}``, ``marks[n]``
    the uniform mark, ``next_states[n]`` the third coordinate (the next
    resolvent state) and ``atom[n]`` whether ``Z_{T_n}`` is in the atom.
    """

    path: JumpPath
    sampling_times: np.ndarray
    states: np.ndarray
    marks: np.ndarray
    next_states: np.ndarray
    atom: np.ndarray

    @property
    def horizon(self) -> float:
        return self.path.horizon

    linear_cumulative = True

    def cumulative(self, f, times):
        return self.path.cumulative(f, times)

    def breakpoints(self):
        return self.path.breakpoints()


@dataclass(frozen=True, eq=False)
class RegenerationLog:
    """Atom hits ``S_n`` and regeneration epochs ``R_n`` (``R_0 = 0`` implicit)."""

    S: np.ndarray
    R: np.ndarray
    S_index: np.ndarray
    R_index: np.ndarray
    regen_states: np.ndarray
    horizon: float
    strict: bool

    @property
    def n_regenerations(self) -> int:
        return self.R.size

    @property
    def rho(self) -> np.ndarray:
        """Cycle lengths ``R_n - R_{n-1}``, the first one measured from 0."""
        return np.diff(np.concatenate(([0.0], self.R)))

    def to_csv(self, path, cycles: "CycleFunctionals | None" = None) -> None:
        rho = self.rho
        xi = cycles.xi if cycles is not None else np.full(rho.size, np.nan)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "S_n", "R_n", "rho_n", "xi_n", "first_cycle_flag"])
            for i in range(self.R.size):
                w.writerow([i + 1, repr(float(self.S[i])), repr(float(self.R[i])),
                            repr(float(rho[i])), repr(float(xi[i])), int(i == 0)])


def _skeleton(kernel: SplitKernel, x0: int, steps: int, rng: np.random.Generator):
    n = kernel.U.shape[0]
    in_c = kernel.cert.in_set(n).tolist()
    alpha = kernel.cert.alpha
    nu_cum = np.cumsum(kernel.cert.nu)
    nu_cum[-1] = 1.0
    nu_cum = nu_cum.tolist()
    move = np.cumsum(kernel.move_rows(), axis=1)
    move[:, -1] = 1.0
    move = move.tolist()
    marks = rng.random(steps)
    picks = rng.random(steps).tolist()
    states = np.empty(steps + 1, dtype=np.int64)
    atom = np.zeros(steps, dtype=bool)
    x = int(x0)
    states[0] = x
    for i, (u, w) in enumerate(zip(marks.tolist(), picks)):
        if in_c[x] and u <= alpha:
            atom[i] = True
            x = bisect.bisect_right(nu_cum, w)
        else:
            x = bisect.bisect_right(move[x], w)
        states[i + 1] = x
    return states, marks, atom


def _joint_bridges(model, starts, ends, rng, max_attempts):
    """Draw ``(sigma, bridge)`` for every step at once.

    Proposing ``t ~ Exp(1)`` plus a free forward path and keeping the pair
    when the path ends in the target state yields exactly the conditional
    sampling-time law followed by an endpoint-conditioned bridge.
    """
    N = starts.size
    sigma = np.empty(N)
    pending = np.arange(N)
    out_step, out_off, out_state = [], [], []
    attempts = 0
    while pending.size:
        attempts += 1
        if attempts > max_attempts:
            raise RejectionBudgetExceeded(f"{pending.size} bridges unfinished after {max_attempts} rounds")
        t = rng.standard_exponential(pending.size)
        fin, pidx, jt, js = forward_batch(model, starts[pending], t, rng)
        ok = fin == ends[pending]
        sigma[pending[ok]] = t[ok]
        keep = ok[pidx]
        out_step.append(pending[pidx[keep]])
        out_off.append(jt[keep])
        out_state.append(js[keep])
        pending = pending[~ok]
    step = np.concatenate(out_step)
    off = np.concatenate(out_off)
    st = np.concatenate(out_state)
    order = np.lexsort((off, step))
    return sigma, step[order], off[order], st[order]


def _sequential_bridges(model, U, starts, ends, rng, max_attempts):
    N = starts.size
    sigma = np.empty(N)
    step, off, st = [], [], []
    for i in range(N):
        x, xp = int(starts[i]), int(ends[i])
        sigma[i] = sample_sampling_time(x, xp, model, U, rng, max_attempts)
        frag = sample_bridge(x, xp, sigma[i], model, rng, max_attempts)
        step.extend([i] * frag.n_jumps)
        off.extend(frag.times[1:].tolist())
        st.extend(frag.states[1:].tolist())
    return sigma, np.array(step, np.int64), np.array(off, float), np.array(st, np.int64)


def simulate_split_chain(model: CtmcModel, kernel: SplitKernel, x0: int, T: float,
                         rng: np.random.Generator, method: str = "joint", strict: bool = False,
                         max_attempts: int = DEFAULT_MAX_ATTEMPTS):
    """Simulate the split process on ``[0, T]``.

    Parameters
    ----------
    method : ``"joint"`` draws each (sampling time, bridge) pair with a single
        rejection loop; ``"sequential"`` first draws the sampling time with
        :func:`sample_sampling_time` and then the bridge with
        :func:`sample_bridge`. Both produce the same law; ``"sequential"`` is
        much slower.
    strict : if True, an atom hit exactly at a regeneration epoch is not
        counted (``S_{n+1} > R_n``); by default it is (``S_{n+1} >= R_n``),
        which makes every atom hit start a cycle and gives mean cycle length
        ``1 / (alpha pi(C))``.

    Returns
    -------
    (SplitChainPath, RegenerationLog)
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if method not in ("joint", "sequential"):
        raise ValueError(f"unknown method {method!r}")
    t_now = 0.0
    x = int(x0)
    blocks = []
    step_base = 0
    while t_now < T:
        nsteps = int(1.05 * (T - t_now) + 10.0 * math.sqrt(T - t_now) + 16)
        states, marks, atom = _skeleton(kernel, x, nsteps, rng)
        starts, ends = states[:-1], states[1:]
        if method == "joint":
            sigma, step, off, st = _joint_bridges(model, starts, ends, rng, max_attempts)
        else:
            sigma, step, off, st = _sequential_bridges(model, kernel.U, starts, ends, rng, max_attempts)
        T_n = t_now + np.concatenate(([0.0], np.cumsum(sigma)))
        blocks.append((states, marks, atom, T_n, step, off, st))
        t_now = float(T_n[-1])
        x = int(states[-1])
        step_base += nsteps

    samp_t, samp_x, samp_u, samp_next, samp_atom = [], [], [], [], []
    jt, js = [], []
    for states, marks, atom, T_n, step, off, st in blocks:
        samp_t.append(T_n[:-1])
        samp_x.append(states[:-1])
        samp_u.append(marks)
        samp_next.append(states[1:])
        samp_atom.append(atom)
        jt.append(T_n[step] + off)
        js.append(st)
    samp_t.append([t_now])
    samp_t = np.concatenate(samp_t)
    samp_x = np.concatenate(samp_x)
    samp_u = np.concatenate(samp_u)
    samp_next = np.concatenate(samp_next)
    samp_atom = np.concatenate(samp_atom)
    jt = np.concatenate(jt)
    js = np.concatenate(js)

    keep = jt < T
    path = JumpPath(np.concatenate(([x0], js[keep])), np.concatenate(([0.0], jt[keep])), T)
    N = int(np.searchsorted(samp_t, T, side="right"))  # sampling times T_0..T_{N-1} <= T
    split = SplitChainPath(path, samp_t[:N], samp_x[:N], samp_u[:N], samp_next[:N], samp_atom[:N])

    hits = np.flatnonzero(samp_atom[:N])
    hits = hits[hits + 1 < N]  # regeneration epoch must be observed
    if strict:
        chosen, last = [], 0
        for m in hits.tolist():
            if m > last:
                chosen.append(m)
                last = m + 1
        hits = np.asarray(chosen, dtype=np.int64)
    log = RegenerationLog(
        S=samp_t[hits],
        R=samp_t[hits + 1],
        S_index=hits,
        R_index=hits + 1,
        regen_states=samp_x[hits + 1],
        horizon=T,
        strict=strict,
    )
    return split, log


@dataclass(frozen=True, eq=False)
class CycleFunctionals:
    """Cycle integrals ``xi_n = int_{R_{n-1}}^{R_n} f`` and lengths ``rho_n``.

    Entry 0 is the initial cycle ``[0, R_1]``, which is excluded from
    stationary statistics. ``tail`` is the integral over ``[R_last, T]``.
    """

    xi: np.ndarray
    rho: np.ndarray
    tail: float

    @property
    def first_cycle_flag(self) -> np.ndarray:
        flag = np.zeros(self.xi.size, dtype=bool)
        flag[0] = True
        return flag

    def stationary(self) -> tuple[np.ndarray, np.ndarray]:
        return self.xi[1:], self.rho[1:]


def cycle_functionals(log: RegenerationLog, path: TrajectoryStream, f) -> CycleFunctionals:
    if log.n_regenerations < 2:
        raise InsufficientCycles(f"{log.n_regenerations} complete cycles; need >= 2")
    bounds = np.concatenate(([0.0], log.R, [path.horizon]))
    F = path.cumulative(f, bounds)
    inc = np.diff(F)
    return CycleFunctionals(inc[:-1], np.diff(bounds)[:-1], float(inc[-1]))


@dataclass(frozen=True)
class RegenerativeEstimate:
    rho_hat: float
    rho_se: float
    sigma2_xi: float
    mean: float
    n_cycles: int

    @property
    def sigma_xi(self) -> float:
        return math.sqrt(max(self.sigma2_xi, 0.0))

    @property
    def tavc(self) -> float:
        """Time-average variance constant ``sigma_xi^2 / rho``."""
        return self.sigma2_xi / self.rho_hat


def _lag01(c: np.ndarray) -> tuple[float, float]:
    d = c - c.mean()
    n = d.size
    return float(np.dot(d, d) / n), float(np.dot(d[:-1], d[1:]) / n)


def regenerative_estimates(cycles: CycleFunctionals, mean: float | None = None,
                           min_cycles: int = 10) -> RegenerativeEstimate:
    """Estimate ``rho = E_nu R_1`` and ``sigma_xi^2 = Var(xi_1) + 2 Cov(xi_1, xi_2)``.

    Cycle integrals are centred as ``xi_n - mu rho_n`` where ``mu`` is the
    supplied ``pi(f)`` or the ratio estimate ``sum xi / sum rho``. Lags of
    two and more are set to zero (cycles are one-dependent).
    """
    xi, rho = cycles.stationary()
    if xi.size < min_cycles:
        raise InsufficientCycles(f"{xi.size} stationary cycles; need >= {min_cycles}")
    mu = float(xi.sum() / rho.sum()) if mean is None else float(mean)
    g0, g1 = _lag01(xi - mu * rho)
    r0, r1 = _lag01(rho)
    rho_hat = float(rho.mean())
    rho_se = math.sqrt(max(r0 + 2 * r1, 0.0) / rho.size)
    return RegenerativeEstimate(rho_hat, rho_se, g0 + 2 * g1, mu, int(xi.size))


@dataclass(frozen=True)
class OneDependenceReport:
    lags: np.ndarray
    acf: np.ndarray
    band: np.ndarray
    n: int
    level: float

    @property
    def inside(self) -> np.ndarray:
        return np.abs(self.acf) <= self.band

    @property
    def passed(self) -> bool:
        """Lags >= 2 inside their bands; lag 1 is informational only."""
        return bool(np.all(self.inside[self.lags >= 2]))


def one_dependence_test(xi, max_lag: int = 5, level: float = 1e-3,
                        min_cycles: int = 100) -> OneDependenceReport:
    """Sample autocorrelations of cycle functionals with normal-approximation bands.

    For lags ``h >= 2`` the band uses Bartlett's variance for a one-dependent
    sequence, ``(1 + 2 r_1^2) / n``; lag 1 gets the white-noise band.
    """
    from scipy.stats import norm

    xi = np.asarray(xi, dtype=float)
    if xi.size < min_cycles:
        raise InsufficientCycles(f"{xi.size} cycles; need >= {min_cycles}")
    acf = autocorrelation(xi, max_lag)
    z = norm.isf(level / 2)
    n = xi.size
    band = np.full(max_lag, z * math.sqrt((1 + 2 * acf[0] ** 2) / n))
    band[0] = z / math.sqrt(n)
    return OneDependenceReport(np.arange(1, max_lag + 1), acf, band, n, level)


def cycle_moments(cycles: CycleFunctionals, orders=(1, 2, 4)) -> dict:
    """Empirical ``E_nu[R_1^q]`` and the largest single-cycle share of each sum.

    A share that stays small as the run grows is the finiteness diagnostic.
    """
    _, rho = cycles.stationary()
    out = {}
    for q in orders:
        pw = rho**q
        out[q] = {"moment": float(pw.mean()), "max_share": float(pw.max() / pw.sum())}
    return out


def split_occupation_reference(model: CtmcModel) -> np.ndarray:
    return stationary_distribution(model)
