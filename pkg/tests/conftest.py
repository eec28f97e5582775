import math

import numpy as np
import pytest
from scipy import integrate, linalg

from regensim.ctmc import CtmcModel

TWO_STATE_Q = np.array([[-1.0, 1.0], [2.0, -2.0]])


def quad_resolvent(Q):
    """Resolvent kernel by adaptive quadrature of expm(tQ) e^{-t}."""
    val, err = integrate.quad_vec(lambda t: linalg.expm(t * Q) * math.exp(-t), 0, np.inf,
                                  epsabs=1e-13, epsrel=1e-12)
    return val


def quad_variance(Q, f):
    """Asymptotic variance as twice the integrated stationary autocovariance."""
    pi = np.linalg.svd(Q.T)[2][-1]
    pi = pi / pi.sum()
    fbar = f - pi @ f
    val, _ = integrate.quad(lambda s: float((pi * fbar) @ linalg.expm(s * Q) @ fbar), 0, np.inf,
                            epsabs=1e-13, epsrel=1e-11, limit=500)
    return 2.0 * val


def random_generator(n, seed, density=1.0):
    """Irreducible generator with a guaranteed directed cycle plus random extra rates."""
    rng = np.random.default_rng(seed)
    Q = rng.uniform(0.2, 3.0, (n, n)) * (rng.random((n, n)) < density)
    for i in range(n):
        Q[i, (i + 1) % n] = max(Q[i, (i + 1) % n], 0.5)
    np.fill_diagonal(Q, 0.0)
    np.fill_diagonal(Q, -Q.sum(axis=1))
    return Q


def oracle_models():
    """Five test generators with n <= 6, including non-reversible ones."""
    cyc = np.array([[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0], [1.0, 0.0, -1.0]])
    return {
        "two-state": TWO_STATE_Q,
        "directed-cycle": cyc,
        "random4": random_generator(4, 1),
        "random5-sparse": random_generator(5, 2, density=0.4),
        "random6": random_generator(6, 3),
    }


@pytest.fixture
def two_state():
    return CtmcModel(TWO_STATE_Q)


@pytest.fixture
def three_state():
    return CtmcModel(np.array([[-2.0, 1.0, 1.0], [1.0, -3.0, 2.0], [0.5, 0.5, -1.0]]))


@pytest.fixture(params=sorted(oracle_models()))
def oracle_model(request):
    return CtmcModel(oracle_models()[request.param])


_ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance_report():
    """Record one pass/fail line per acceptance criterion; echoed in the terminal summary."""

    def report(number, title, passed, detail):
        line = f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}"
        print(line)
        _ACCEPTANCE_LINES.append(line)
        return passed

    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
