import math
import sys

import numpy as np
import pytest
from hypothesis import settings

from adiabatic_lab.family import OperatorFamily
from adiabatic_lab.riesz import analytic_projection_family

settings.register_profile("lab", max_examples=25, deadline=None)
settings.load_profile("lab")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_matrix(rng, n, scale=1.0):
    return scale * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2 * n)


def skew_hermitian(rng, n):
    M = random_matrix(rng, n)
    return 0.5 * (M - M.conj().T)


def late_rotation(r0, omega=0.0):
    """diag(0, -1, -2) + omega, rotated in the (e1, e2) plane only after ``t = r0``."""
    D = np.diag([0.0, -1.0, -2.0]) + omega * np.eye(3)
    E = np.diag([1.0, 0.0, 0.0])

    def phi(t):
        return (0.0, 0.0) if t <= r0 else (3 * (t - r0) ** 3, 9 * (t - r0) ** 2)

    def rot(t):
        (a, da) = phi(t)
        c, s = math.cos(a), math.sin(a)
        R = np.eye(3)
        R[:2, :2] = [[c, s], [-s, c]]
        dR = np.zeros((3, 3))
        dR[:2, :2] = [[-s, c], [-c, -s]]
        return R, da * dR

    def proj(t):
        R, dR = rot(t)
        return R.T @ E @ R, dR.T @ E @ R + R.T @ E @ dR

    fam = OperatorFamily(3, lambda t: rot(t)[0].T @ D @ rot(t)[0])
    return fam, analytic_projection_family(proj, 257)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
