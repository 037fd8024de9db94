"""Numba kernels against their numpy twins."""

import numpy as np
import pytest

from adiabatic_lab import _kernels
from adiabatic_lab._jit import ENV_FLAG, jit_enabled


@pytest.fixture(params=["jit", "numpy"])
def mode(request, monkeypatch):
    if request.param == "numpy":
        monkeypatch.setenv(ENV_FLAG, "1")
    else:
        monkeypatch.delenv(ENV_FLAG, raising=False)
    return request.param


def test_flag_switches(monkeypatch):
    monkeypatch.setenv(ENV_FLAG, "yes")
    assert not jit_enabled()
    monkeypatch.setenv(ENV_FLAG, "0")
    assert jit_enabled()


def both(fn, *args, monkeypatch):
    monkeypatch.delenv(ENV_FLAG, raising=False)
    a = fn(*args)
    monkeypatch.setenv(ENV_FLAG, "1")
    b = fn(*args)
    return a, b


def test_dopri_agree(rng, monkeypatch):
    Y = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    G = rng.standard_normal((7, 5, 5)) + 0j
    (y1, e1), (y2, e2) = both(_kernels.dopri_step, Y, G, 0.05, 1e-9, 1e-9, monkeypatch=monkeypatch)
    assert np.abs(y1 - y2).max() < 1e-13
    assert abs(e1 - e2) <= 1e-9 * max(e1, 1.0)


def test_dopri_exact_for_constant_linear(mode):
    # a constant generator: one step reproduces exp(hG) to 5th order
    G = np.array([[0.0, 1.0], [-1.0, 0.0]], dtype=complex)
    h = 0.1
    Y5, err = _kernels.dopri_step(np.eye(2), np.stack([G] * 7), h, 1e-12, 1e-12)
    ref = np.array([[np.cos(h), np.sin(h)], [-np.sin(h), np.cos(h)]])
    assert np.abs(Y5 - ref).max() < 1e-8
    assert err > 0


def test_distances_agree(rng, monkeypatch):
    x = rng.standard_normal(40) + 1j * rng.standard_normal(40)
    y = rng.standard_normal(30) + 1j * rng.standard_normal(30)
    a, b = both(_kernels.cross_min_distance, x, y, monkeypatch=monkeypatch)
    assert abs(a - b) < 1e-14
    a, b = both(_kernels.directed_sup_distance, x, y, monkeypatch=monkeypatch)
    assert abs(a - b) < 1e-14
    assert _kernels.cross_min_distance(x, []) == float("inf")


def test_distance_values(mode):
    assert _kernels.cross_min_distance([0, 3], [1 + 1j, 10]) == pytest.approx(np.sqrt(2))
    assert _kernels.directed_sup_distance([0, 1], [0.5]) == pytest.approx(0.5)


def test_upwind_agree(monkeypatch):
    mu = np.polynomial.legendre.leggauss(6)[0]
    a, b = both(_kernels.upwind_streaming, mu, 10, 0.1, monkeypatch=monkeypatch)
    assert np.array_equal(a, b)


def test_upwind_structure(mode):
    A = _kernels.upwind_streaming(np.array([-0.5, 0.5]), 3, 0.5)
    # mu < 0 couples to the right neighbour, mu > 0 to the left
    np.testing.assert_allclose(A[:3, :3], [[-1, 1, 0], [0, -1, 1], [0, 0, -1]])
    np.testing.assert_allclose(A[3:, 3:], [[-1, 0, 0], [1, -1, 0], [0, 1, -1]])
    assert np.all(A[:3, 3:] == 0)
