from fractions import Fraction

import mpmath
import numpy as np
import pytest

from dpformation import load_preset


@pytest.fixture
def preset():
    return load_preset("ifac3robot")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def exact_rank(M) -> int:
    """Rank by fraction-exact Gaussian elimination."""
    rows = [[Fraction(int(v)) for v in row] for row in np.asarray(M)]
    rank, col, n_cols = 0, 0, len(rows[0]) if rows else 0
    while rank < len(rows) and col < n_cols:
        pivot = next((r for r in range(rank, len(rows)) if rows[r][col] != 0), None)
        if pivot is None:
            col += 1
            continue
        rows[rank], rows[pivot] = rows[pivot], rows[rank]
        for r in range(len(rows)):
            if r != rank and rows[r][col] != 0:
                f = rows[r][col] / rows[rank][col]
                rows[r] = [a - f * b for a, b in zip(rows[r], rows[rank])]
        rank += 1
        col += 1
    return rank


def mp_q_tail(x, dps=40):
    """Gaussian upper tail by adaptive quadrature of the density."""
    with mpmath.workdps(dps):
        x = mpmath.mpf(x)
        val = mpmath.quad(lambda u: mpmath.exp(-u * u / 2), [x, x + 10, mpmath.inf]) / mpmath.sqrt(2 * mpmath.pi)
        return val


def random_spd(rng, n, lo=0.2, hi=5.0):
    A = rng.standard_normal((n, n))
    Qm, _ = np.linalg.qr(A)
    return Qm @ np.diag(rng.uniform(lo, hi, n)) @ Qm.T


def pytest_terminal_summary(terminalreporter):
    from . import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(test_acceptance.RESULTS):
            terminalreporter.write_line(test_acceptance.RESULTS[n])
