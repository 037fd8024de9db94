"""Hot loops, each in a numba version and a numpy version.

Public functions dispatch on :func:`adiabatic_lab._jit.jit_enabled`.
Both versions are kept bit-for-bit comparable up to floating-point
reassociation; ``tests/test_kernels.py`` checks agreement.
"""

from __future__ import annotations

import numpy as np

from ._jit import jit_enabled, njit

# Dormand-Prince 5(4) tableau.
DP_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
DP_A = np.array(
    [
        [0, 0, 0, 0, 0, 0],
        [1 / 5, 0, 0, 0, 0, 0],
        [3 / 40, 9 / 40, 0, 0, 0, 0],
        [44 / 45, -56 / 15, 32 / 9, 0, 0, 0],
        [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729, 0, 0],
        [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656, 0],
        [35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
    ]
)
DP_B = np.array([35 / 384, 0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0])
DP_E = np.array(
    [71 / 57600, 0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40]
)


# --------------------------------------------------------------------------
# Dormand-Prince step for Y' = G(tau) Y with the seven stage matrices given.


@njit
def _dopri_step_nb(Y, G, h, atol, rtol, a, b, e):
    n, m = Y.shape
    K = np.empty((7, n, m), dtype=np.complex128)
    for i in range(7):
        Z = Y.copy()
        for j in range(i):
            if a[i, j] != 0.0:
                Z += (h * a[i, j]) * K[j]
        K[i] = G[i] @ Z
    Y5 = Y.copy()
    E = np.zeros_like(Y)
    for i in range(7):
        if b[i] != 0.0:
            Y5 += (h * b[i]) * K[i]
        if e[i] != 0.0:
            E += (h * e[i]) * K[i]
    err = 0.0
    for p in range(n):
        for q in range(m):
            scale = atol + rtol * max(abs(Y[p, q]), abs(Y5[p, q]))
            r = abs(E[p, q]) / scale
            if r > err:
                err = r
    return Y5, err


def _dopri_step_np(Y, G, h, atol, rtol, a, b, e):
    K = []
    for i in range(7):
        Z = Y + h * sum((a[i, j] * K[j] for j in range(i) if a[i, j] != 0.0), np.zeros_like(Y))
        K.append(G[i] @ Z)
    Ks = np.stack(K)
    Y5 = Y + h * np.tensordot(b, Ks, axes=1)
    E = h * np.tensordot(e, Ks, axes=1)
    scale = atol + rtol * np.maximum(np.abs(Y), np.abs(Y5))
    return Y5, float(np.max(np.abs(E) / scale))


def dopri_step(Y, G, h, atol, rtol):
    """One embedded 5(4) step.

    ``G`` has shape ``(7, n, n)`` and holds the scaled generator at the
    stage times ``tau + c_i h``.  Returns the fifth-order update and the
    scaled max-norm of the embedded error estimate.
    """
    Y = np.ascontiguousarray(Y, dtype=np.complex128)
    G = np.ascontiguousarray(G, dtype=np.complex128)
    fn = _dopri_step_nb if jit_enabled() else _dopri_step_np
    return fn(Y, G, float(h), float(atol), float(rtol), DP_A, DP_B, DP_E)


# --------------------------------------------------------------------------
# Point-set distances.


@njit
def _cross_min_nb(x, y):
    # squared distances on split real/imag parts; one sqrt at the end
    xr, xi, yr, yi = x.real.copy(), x.imag.copy(), y.real.copy(), y.imag.copy()
    best = np.inf
    for i in range(xr.shape[0]):
        for j in range(yr.shape[0]):
            dr = xr[i] - yr[j]
            di = xi[i] - yi[j]
            d = dr * dr + di * di
            if d < best:
                best = d
    return np.sqrt(best)


@njit
def _directed_sup_nb(x, y):
    xr, xi, yr, yi = x.real.copy(), x.imag.copy(), y.real.copy(), y.imag.copy()
    worst = 0.0
    for i in range(xr.shape[0]):
        best = np.inf
        for j in range(yr.shape[0]):
            dr = xr[i] - yr[j]
            di = xi[i] - yi[j]
            d = dr * dr + di * di
            if d < best:
                best = d
        if best > worst:
            worst = best
    return np.sqrt(worst)


def _cross_min_np(x, y):
    return float(np.min(np.abs(x[:, None] - y[None, :])))


def _directed_sup_np(x, y):
    return float(np.max(np.min(np.abs(x[:, None] - y[None, :]), axis=1)))


def cross_min_distance(x, y) -> float:
    """``min |x_i - y_j|``; ``inf`` if either set is empty."""
    x = np.ascontiguousarray(x, dtype=np.complex128).ravel()
    y = np.ascontiguousarray(y, dtype=np.complex128).ravel()
    if x.size == 0 or y.size == 0:
        return float("inf")
    return float((_cross_min_nb if jit_enabled() else _cross_min_np)(x, y))


def directed_sup_distance(x, y) -> float:
    """``max_i min_j |x_i - y_j|`` for nonempty sets."""
    x = np.ascontiguousarray(x, dtype=np.complex128).ravel()
    y = np.ascontiguousarray(y, dtype=np.complex128).ravel()
    return float((_directed_sup_nb if jit_enabled() else _directed_sup_np)(x, y))


# --------------------------------------------------------------------------
# First-order upwind streaming operator -mu d/dx with vacuum inflow.


@njit
def _upwind_nb(mu, nx, dx):
    nm = mu.shape[0]
    n = nx * nm
    A = np.zeros((n, n))
    for j in range(nm):
        m = mu[j]
        for i in range(nx):
            r = j * nx + i
            A[r, r] = -abs(m) / dx
            if m > 0.0 and i > 0:
                A[r, r - 1] = m / dx
            elif m < 0.0 and i < nx - 1:
                A[r, r + 1] = -m / dx
    return A


def _upwind_np(mu, nx, dx):
    nm = mu.shape[0]
    blocks = []
    for m in mu:
        D = np.diag(np.full(nx, -abs(m) / dx))
        if m > 0:
            D += np.diag(np.full(nx - 1, m / dx), -1)
        else:
            D += np.diag(np.full(nx - 1, -m / dx), 1)
        blocks.append(D)
    A = np.zeros((nx * nm, nx * nm))
    for j, D in enumerate(blocks):
        A[j * nx:(j + 1) * nx, j * nx:(j + 1) * nx] = D
    return A


def upwind_streaming(mu, nx: int, dx: float) -> np.ndarray:
    """Block-diagonal upwind matrix, ordinate-major ordering ``j*nx + i``."""
    mu = np.ascontiguousarray(mu, dtype=np.float64)
    return (_upwind_nb if jit_enabled() else _upwind_np)(mu, int(nx), float(dx))
