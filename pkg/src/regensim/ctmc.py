"""Exact finite-state CTMC machinery.

Everything here is a closed-form or linear-algebra oracle for a finite,
irreducible generator ``Q``: the stationary law, the transition semigroup
(uniformization), the unit-rate resolvent ``U = (I - Q)^{-1}``, asymptotic
variances through the Poisson equation, alpha-mixing coefficients and TV
ergodicity profiles. ``simulate_ctmc`` produces exact jump paths.
"""
from __future__ import annotations

import bisect
import csv
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.sparse.csgraph import connected_components

from .errors import (
    InvalidExponents,
    InvalidModel,
    NonConvergence,
    ReducibleModel,
    SingularSystem,
    TooManyStates,
)
from .trajectory import JumpPath

ROW_SUM_TOL = 1e-12
UNIFORMIZATION_TAIL = 1e-14
MAX_ALPHA_STATES = 12


@dataclass(frozen=True, eq=False)
class CtmcModel:
    """Generator ``Q`` of an irreducible finite-state CTMC.

    Construction validates the generator: non-negative off-diagonal rates,
    zero row sums (within ``1e-12``) and strong connectivity of the
    off-diagonal support graph. A reducible generator raises
    :class:`ReducibleModel`, which is a :class:`SingularSystem`.
    """

    Q: np.ndarray
    labels: tuple | None = None

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        object.__setattr__(self, "Q", Q)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise InvalidModel("Q must be square")
        n = Q.shape[0]
        if n < 2:
            raise InvalidModel("need at least two states")
        if not np.all(np.isfinite(Q)):
            raise InvalidModel("Q has non-finite entries")
        off = Q - np.diag(np.diag(Q))
        if np.any(off < 0):
            raise InvalidModel("off-diagonal rates must be non-negative")
        if np.max(np.abs(Q.sum(axis=1))) > ROW_SUM_TOL:
            raise InvalidModel("rows of Q must sum to zero")
        ncomp, _ = connected_components(off > 0, directed=True, connection="strong")
        if ncomp != 1:
            raise ReducibleModel("generator is reducible")
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != n:
                raise InvalidModel("labels must match the number of states")
            object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.Q.shape[0]

    @property
    def exit_rates(self) -> np.ndarray:
        return -np.diag(self.Q)

    def jump_matrix(self) -> np.ndarray:
        """Transition matrix of the embedded jump chain."""
        P = self.Q / self.exit_rates[:, None]
        np.fill_diagonal(P, 0.0)
        return P

    def is_reversible(self, tol: float = 1e-10) -> bool:
        pi = stationary_distribution(self)
        flux = pi[:, None] * self.Q
        return bool(np.allclose(flux, flux.T, atol=tol))

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "Q": [float(q) for q in self.Q.ravel()],
            "labels": list(self.labels) if self.labels else None,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "CtmcModel":
        Q = np.asarray(doc["Q"], dtype=float)
        n = int(doc.get("n", round(math.sqrt(Q.size))))
        if Q.size != n * n:
            raise InvalidModel(f"Q has {Q.size} entries, expected n*n = {n * n}")
        return cls(Q.reshape(n, n), doc.get("labels"))


def load_model(path) -> CtmcModel:
    with open(path) as fh:
        return CtmcModel.from_dict(json.load(fh))


def save_model(model: CtmcModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model.to_dict(), fh, indent=2)
        fh.write("\n")


def stationary_distribution(model: CtmcModel) -> np.ndarray:
    """Solve ``pi Q = 0`` with ``sum(pi) = 1``."""
    n = model.n
    A = np.vstack([model.Q.T, np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, _, rank, _ = np.linalg.lstsq(A, b, rcond=None)
    if rank < n:
        raise SingularSystem("balance equations do not determine pi")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    if np.max(np.abs(pi @ model.Q)) > 1e-10:
        raise SingularSystem("balance residual too large")
    return pi


def _uniformization_terms(model: CtmcModel, t_max: float, max_terms: int):
    lam = float(model.exit_rates.max())
    K = int(stats.poisson.isf(UNIFORMIZATION_TAIL, lam * t_max)) + 1 if t_max > 0 else 0
    if K > max_terms:
        raise NonConvergence(f"uniformization needs {K} terms (> {max_terms})")
    return lam, K


def transition_matrices(model: CtmcModel, ts, max_terms: int = 200_000) -> np.ndarray:
    """``P_t = exp(tQ)`` for every ``t`` in ``ts`` by uniformization.

    With ``Lambda = max_i(-Q_ii)`` and ``P = I + Q / Lambda`` the series
    ``sum_k Pois(k; Lambda t) P^k`` is truncated where the Poisson tail mass
    drops below ``1e-14``; every retained term is stochastic, so rows sum to
    one up to that tail.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    if np.any(ts < 0):
        raise ValueError("t must be non-negative")
    lam, K = _uniformization_terms(model, float(ts.max(initial=0.0)), max_terms)
    n = model.n
    P = np.eye(n) + model.Q / lam
    ks = np.arange(K + 1)
    W = stats.poisson.pmf(ks[None, :], lam * ts[:, None])
    W[ts == 0.0] = 0.0
    W[ts == 0.0, 0] = 1.0
    tail = stats.poisson.sf(K, lam * ts)
    if np.any(tail > UNIFORMIZATION_TAIL):
        raise NonConvergence(f"uniformization tail mass {tail.max():.3e}")
    out = np.zeros((ts.size, n, n))
    Pk = np.eye(n)
    for k in range(K + 1):
        out += W[:, k, None, None] * Pk
        Pk = Pk @ P
    return out


def transition_matrix(model: CtmcModel, t: float) -> np.ndarray:
    """``P_t(x, y)``, the probability of being in ``y`` at time ``t`` from ``x``."""
    return transition_matrices(model, [t])[0]


def resolvent(model: CtmcModel) -> np.ndarray:
    """Unit-rate resolvent kernel ``U = int_0^inf P_t e^{-t} dt = (I - Q)^{-1}``."""
    n = model.n
    try:
        U = np.linalg.solve(np.eye(n) - model.Q, np.eye(n))
    except np.linalg.LinAlgError as exc:  # pragma: no cover - valid generators are safe
        raise SingularSystem(str(exc)) from exc
    if np.max(np.abs(U.sum(axis=1) - 1.0)) > 1e-10:
        raise SingularSystem("resolvent rows do not sum to one")
    return U


def poisson_solution(model: CtmcModel, f) -> np.ndarray:
    """Solve ``-Q g = f - pi(f)`` subject to ``pi(g) = 0``.

    ``f`` may be a vector or an ``(n, p)`` matrix of functionals; the
    constraint row is appended because ``-Q`` has rank ``n - 1``.
    """
    pi = stationary_distribution(model)
    F = np.asarray(f, dtype=float)
    fbar = F - pi @ F
    A = np.vstack([-model.Q, pi])
    rhs = np.concatenate([fbar, np.zeros((1,) + fbar.shape[1:])])
    g, _, rank, _ = np.linalg.lstsq(A, rhs, rcond=None)
    if rank < model.n or np.max(np.abs(A @ g - rhs)) > 1e-9 * max(1.0, np.max(np.abs(rhs))):
        raise SingularSystem("Poisson equation is inconsistent")
    return g


def asymptotic_variance_exact(model: CtmcModel, f) -> float:
    """Time-average variance constant ``2 <f - pi f, g>_pi`` of ``int f(X_s) ds``."""
    pi = stationary_distribution(model)
    f = np.asarray(f, dtype=float)
    fbar = f - pi @ f
    g = poisson_solution(model, f)
    return float(2.0 * np.sum(pi * fbar * g))


def asymptotic_covariance_exact(model: CtmcModel, F) -> np.ndarray:
    """Asymptotic covariance matrix for a family of functionals (columns of ``F``).

    Uses ``Sigma = <Fbar, G>_pi + <G, Fbar>_pi`` which covers the
    non-reversible case.
    """
    pi = stationary_distribution(model)
    F = np.asarray(F, dtype=float)
    Fbar = F - pi @ F
    G = poisson_solution(model, F)
    M = Fbar.T @ (pi[:, None] * G)
    return M + M.T


def alpha_mixing_exact(model: CtmcModel, s: float) -> float:
    """alpha-mixing coefficient between ``sigma(X_0)`` and ``sigma(X_s)`` under ``pi``.

    Enumerates every event ``A`` for ``X_0``; for fixed ``A`` the supremum over
    ``B`` is attained by collecting the positive entries of
    ``sum_{i in A} (pi_i P_s(i, j) - pi_i pi_j)``, so the result equals the
    brute-force supremum over all ``2^n x 2^n`` pairs.
    """
    n = model.n
    if n > MAX_ALPHA_STATES:
        raise TooManyStates(f"{n} states > {MAX_ALPHA_STATES}")
    pi = stationary_distribution(model)
    D = pi[:, None] * transition_matrix(model, s) - np.outer(pi, pi)
    masks = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    c = masks @ D
    return float(np.max(np.clip(c, 0.0, None).sum(axis=1)))


def davydov_bound_check(cov, alpha, normp, normq, p, q) -> bool:
    """True iff ``|cov| <= 8 alpha^{1/r} ||X||_p ||Y||_q`` with ``1/p + 1/q + 1/r = 1``."""
    if p < 1 or q < 1:
        raise InvalidExponents("p and q must be >= 1")
    inv_r = 1.0 - 1.0 / p - 1.0 / q
    if inv_r <= 1e-12:
        raise InvalidExponents("need 1/p + 1/q < 1")
    bound = 8.0 * alpha**inv_r * normp * normq
    return bool(abs(cov) <= bound)


@dataclass(frozen=True)
class ErgodicityProfile:
    """``psi_hat(t) = max_x ||P_t(x, .) - pi||_TV`` on a time grid (TV with factor 1/2)."""

    times: np.ndarray
    values: np.ndarray
    reversible: bool

    def is_monotone(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.values) <= tol))

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "psi_hat"])
            for t, v in zip(self.times, self.values):
                w.writerow([repr(float(t)), repr(float(v))])


def tv_ergodicity_profile(model: CtmcModel, grid) -> ErgodicityProfile:
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise ValueError("grid must be sorted and non-negative")
    pi = stationary_distribution(model)
    Ps = transition_matrices(model, grid)
    vals = 0.5 * np.abs(Ps - pi[None, None, :]).sum(axis=2).max(axis=1)
    return ErgodicityProfile(grid, vals, model.is_reversible())


class _JumpSampler:
    """Draws embedded-chain destinations from per-state cumulative tables."""

    def __init__(self, model: CtmcModel):
        P = model.jump_matrix()
        self.cum = []
        for row in P:
            c = np.cumsum(row)
            c[-1] = 1.0
            self.cum.append(c.tolist())
        self.rates = model.exit_rates.tolist()


def simulate_ctmc(model: CtmcModel, x0: int, T: float, rng: np.random.Generator) -> JumpPath:
    """Exact (Gillespie) path of the chain on ``[0, T]`` started at ``x0``."""
    if not T > 0:
        raise ValueError("T must be positive")
    js = _JumpSampler(model)
    rates, cum = js.rates, js.cum
    mean_rate = float(np.mean(rates))
    chunk = int(min(max(1024, 1.2 * mean_rate * T + 64), 1 << 20))
    states = [int(x0)]
    times = [0.0]
    t = 0.0
    x = int(x0)
    while True:
        E = rng.standard_exponential(chunk).tolist()
        U = rng.random(chunk).tolist()
        for e, u in zip(E, U):
            t += e / rates[x]
            if t >= T:
                return JumpPath(np.array(states), np.array(times), T)
            x = bisect.bisect_right(cum[x], u)
            states.append(x)
            times.append(t)


def forward_batch(model: CtmcModel, starts, horizons, rng: np.random.Generator):
    """Simulate many independent forward paths at once.

    Returns ``(ends, path_idx, jump_times, jump_states)`` where the jump
    records are ordered by path and time within each path.
    """
    starts = np.asarray(starts, dtype=np.int64)
    horizons = np.asarray(horizons, dtype=float)
    rates = model.exit_rates
    cum = np.cumsum(model.jump_matrix(), axis=1)
    cum[:, -1] = 1.0
    cur = starts.copy()
    clock = np.zeros(starts.size)
    active = np.arange(starts.size)
    rec_idx, rec_t, rec_s = [], [], []
    while active.size:
        hold = rng.standard_exponential(active.size) / rates[cur[active]]
        new_clock = clock[active] + hold
        jumped = new_clock < horizons[active]
        idx = active[jumped]
        u = rng.random(idx.size)
        nxt = (cum[cur[idx]] <= u[:, None]).sum(axis=1)
        rec_idx.append(idx)
        rec_t.append(new_clock[jumped])
        rec_s.append(nxt)
        clock[idx] = new_clock[jumped]
        cur[idx] = nxt
        active = idx
    if rec_idx:
        pidx = np.concatenate(rec_idx)
        jt = np.concatenate(rec_t)
        js = np.concatenate(rec_s)
        order = np.lexsort((jt, pidx))
        pidx, jt, js = pidx[order], jt[order], js[order]
    else:  # pragma: no cover
        pidx = np.zeros(0, np.int64)
        jt = np.zeros(0)
        js = np.zeros(0, np.int64)
    return cur, pidx, jt, js
