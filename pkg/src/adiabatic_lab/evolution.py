"""Propagators for ``y' = T A(t) y`` on ``0 <= s <= t <= 1``.

The reference integrator is an adaptive Dormand-Prince 5(4) scheme on
the matrix ODE ``U' = T A(tau) U`` whose step is additionally capped by
``h * T * ||A(tau)|| <= 0.5``.  Frozen-coefficient products, truncated
Dyson series, the exact commuting-family formula and Duhamel
perturbation series are provided for cross-checks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.integrate import quad_vec

from ._kernels import DP_C, dopri_step
from .errors import CommutationViolation, IntegrationFailure, InvalidInputError
from .family import OperatorFamily

DEFAULT_TOL = 1e-10
STEP_CAP = 0.5
MAX_STEPS = 5_000_000
DYSON_NODES = 16
DYSON_MAX_ORDER = 30


def _check_interval(s: float, t: float) -> tuple[float, float]:
    s, t = float(s), float(t)
    if not (0.0 <= s <= t <= 1.0):
        raise InvalidInputError("need 0 <= s <= t <= 1", s=s, t=t)
    return s, t


def _norm_estimate(A: np.ndarray) -> float:
    # Frobenius norm: a cheap upper bound of the spectral norm, so the cap is
    # never looser than step * T * ||A||_2 <= 0.5
    return math.sqrt(float(np.vdot(A, A).real))


def integrate(
    evaluator: Callable[[float], np.ndarray],
    T: float,
    s: float,
    times: Sequence[float],
    y0: np.ndarray,
    *,
    atol: float = DEFAULT_TOL,
    rtol: float = DEFAULT_TOL,
    max_steps: int = MAX_STEPS,
    per_unit_step: bool = False,
) -> list[np.ndarray]:
    """Integrate ``Y' = T A(tau) Y`` from ``s`` and return ``Y`` at ``times``.

    ``times`` must be nondecreasing and not below ``s``; the integrator
    lands exactly on each of them.  The error test uses
    ``atol * max|Y| + rtol * |Y_ij|`` per entry.  With ``per_unit_step``
    both tolerances are multiplied by the step length, so the global error
    stays near ``tol`` however large ``T`` is (at a much higher cost);
    by default the control is per step and global errors grow roughly
    like ``T * tol``.
    """
    times = [float(x) for x in times]
    if any(b < a for a, b in zip(times, times[1:])) or (times and times[0] < s):
        raise InvalidInputError("checkpoint times must be sorted and >= s")
    Y = np.array(y0, dtype=np.complex128)
    tau = float(s)
    A_tau = np.asarray(evaluator(tau), dtype=np.complex128)
    h: Optional[float] = None
    steps = 0
    out = []
    G = np.empty((7,) + A_tau.shape, dtype=np.complex128)
    for target in times:
        while tau < target:
            nrm = _norm_estimate(A_tau)
            cap = STEP_CAP / (T * nrm) if T * nrm > 0 else math.inf
            if h is None:
                h = min(cap, 0.05 / (T * nrm)) if T * nrm > 0 else (target - tau)
            remaining = target - tau
            hh = min(h, cap, remaining)
            truncated = hh == remaining
            G[0] = T * A_tau
            for i in range(1, 6):
                G[i] = T * np.asarray(evaluator(min(tau + DP_C[i] * hh, 1.0)), dtype=np.complex128)
            G[6] = G[5]
            # absolute tolerance is taken relative to the current solution size so
            # that strongly decaying evolutions keep their relative accuracy
            ymax = float(np.max(np.abs(Y))) if Y.size else 1.0
            w = hh if per_unit_step else 1.0
            Y5, err = dopri_step(Y, G, hh, w * atol * max(ymax, 1e-300), w * rtol)
            steps += 1
            if not np.isfinite(err):
                raise IntegrationFailure("non-finite error estimate", tau=tau)
            factor = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
            if err <= 1.0:
                tau = target if truncated else tau + hh
                Y = Y5
                A_tau = G[6] / T if T != 0 else np.asarray(evaluator(tau), dtype=np.complex128)
                h = max(h, hh * factor) if truncated else hh * factor
            else:
                h = hh * min(factor, 0.9)
                if h < 1e-14 * max(1.0, abs(tau)):
                    raise IntegrationFailure("step size underflow", tau=tau, error=err)
            if steps > max_steps:
                raise IntegrationFailure("step budget exhausted", tau=tau, steps=steps)
        out.append(Y.copy())
    return out


@dataclass(frozen=True)
class Propagator:
    """Evolution ``U_T(t, s)`` of ``T * family``; callable as ``prop(t, s)``."""

    family: OperatorFamily
    T: float
    method: str = "rk45"
    tol: float = DEFAULT_TOL
    evaluator: Optional[Callable[[float, float], np.ndarray]] = field(default=None, repr=False)

    def __call__(self, t: float, s: float = 0.0) -> np.ndarray:
        s, t = _check_interval(s, t)
        if self.evaluator is not None:
            return self.evaluator(t, s)
        return propagate(self.family, self.T, s, t, self.tol)

    def checkpoints(self, times: Sequence[float], s: float = 0.0, y0=None) -> np.ndarray:
        """``U_T(t_i, s) @ y0`` for sorted ``times``."""
        if self.evaluator is not None:
            base = np.eye(self.family.dim) if y0 is None else np.asarray(y0)
            return np.stack([self.evaluator(t, s) @ base for t in times])
        return propagate_checkpoints(self.family, self.T, times, s=s, tol=self.tol, y0=y0)


def propagate(fam: OperatorFamily, T: float, s: float = 0.0, t: float = 1.0, tol: float = DEFAULT_TOL, *, y0=None, per_unit_step: bool = False) -> np.ndarray:
    """``U_T(t, s)`` (or ``U_T(t, s) @ y0``) by adaptive RK 5(4)."""
    s, t = _check_interval(s, t)
    if T < 0:
        raise InvalidInputError("T must be nonnegative")
    start = np.eye(fam.dim, dtype=np.complex128) if y0 is None else np.asarray(y0, dtype=np.complex128)
    return integrate(fam, T, s, [t], start, atol=tol, rtol=tol, per_unit_step=per_unit_step)[0]


def propagate_checkpoints(fam: OperatorFamily, T: float, times: Sequence[float], *, s: float = 0.0, tol: float = DEFAULT_TOL, y0=None) -> np.ndarray:
    """Stack of ``U_T(t_i, s) @ y0`` for sorted ``times`` in one sweep."""
    start = np.eye(fam.dim, dtype=np.complex128) if y0 is None else np.asarray(y0, dtype=np.complex128)
    for x in times:
        _check_interval(s, x)
    return np.stack(integrate(fam, T, s, times, start, atol=tol, rtol=tol))


def kato_product(fam: OperatorFamily, T: float, k: int, s: float = 0.0, t: float = 1.0) -> np.ndarray:
    """Ordered product of frozen exponentials over the ``1/k`` partition.

    On each piece ``[a, b]`` of ``[s, t]`` cut at the points ``j/k`` the
    generator is frozen at ``A(floor(k a)/k)``.
    """
    s, t = _check_interval(s, t)
    if int(k) < 1:
        raise InvalidInputError("k must be a positive integer")
    k = int(k)
    cuts = [s] + [j / k for j in range(math.floor(s * k) + 1, math.ceil(t * k)) if s < j / k < t] + [t]
    U = np.eye(fam.dim, dtype=np.complex128)
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b <= a:
            continue
        j = min(math.floor(a * k + 1e-12), k - 1)
        U = sla.expm(T * (b - a) * fam(j / k)) @ U
    return U


def gauss_legendre_panels(s: float, t: float, nodes: int = DYSON_NODES, panels: int = 1):
    """Nodes, weights and cumulative-integration operator on ``[s, t]``.

    Returns ``(x, w, S)`` where ``(S @ f)[i]`` approximates the integral
    of ``f`` from ``s`` to ``x[i]`` given samples ``f = f(x)``.
    """
    xi, wi = np.polynomial.legendre.leggauss(nodes)
    V = np.polynomial.legendre.legvander(xi, nodes - 1)
    L = np.empty((nodes, nodes))
    for k in range(nodes):
        coef = np.zeros(nodes)
        coef[k] = 1.0
        L[:, k] = np.polynomial.legendre.legval(xi, np.polynomial.legendre.legint(coef, lbnd=-1))
    S_ref = L @ np.linalg.inv(V)
    edges = np.linspace(s, t, panels + 1)
    xs, ws = [], []
    n = nodes * panels
    S = np.zeros((n, n))
    for p in range(panels):
        a, b = edges[p], edges[p + 1]
        half = 0.5 * (b - a)
        xs.append(a + half * (xi + 1))
        ws.append(half * wi)
        rows = slice(p * nodes, (p + 1) * nodes)
        S[rows, rows] = half * S_ref
        for q in range(p):
            S[rows, q * nodes:(q + 1) * nodes] = 0.5 * (edges[q + 1] - edges[q]) * wi[None, :]
    return np.concatenate(xs), np.concatenate(ws), S


@dataclass(frozen=True)
class DysonResult:
    U: np.ndarray
    order: int
    remainder_bound: float
    term_norms: tuple[float, ...]
    c: float


def dyson_truncated(fam: OperatorFamily, T: float, s: float, t: float, order: int) -> DysonResult:
    """Partial sum of the Dyson series up to ``order``.

    The iterated integrals are computed level by level on one set of 16
    Gauss-Legendre nodes: each level is the cumulative integral of
    ``T A(x) D_{j-1}(x)`` obtained from the polynomial interpolant on
    those nodes.  The reported remainder bound is
    ``(T c (t-s))**(n+1) / (n+1)! * exp(T c (t-s))`` with ``c`` the
    largest sampled ``||A||``.
    """
    s, t = _check_interval(s, t)
    if int(order) != order or order < 0:
        raise InvalidInputError("order must be a nonnegative integer")
    if order > DYSON_MAX_ORDER:
        raise InvalidInputError(f"order capped at {DYSON_MAX_ORDER}", order=order)
    d = fam.dim
    I = np.eye(d, dtype=np.complex128)
    x, w, S = gauss_legendre_panels(s, t)
    A = np.stack([fam(xx) for xx in x])
    c = max([float(np.linalg.norm(a, 2)) for a in A] + [float(np.linalg.norm(fam(s), 2)), float(np.linalg.norm(fam(t), 2))])
    U = I.copy()
    norms = [1.0]
    D = np.broadcast_to(I, (len(x), d, d)).copy()
    for _ in range(int(order)):
        F = T * np.einsum("kij,kjl->kil", A, D)
        term = np.einsum("k,kij->ij", w, F)
        U = U + term
        norms.append(float(np.linalg.norm(term, 2)))
        D = np.einsum("ik,kab->iab", S, F)
    L = T * c * (t - s)
    rem = L ** (order + 1) / math.factorial(order + 1) * math.exp(L)
    return DysonResult(U=U, order=int(order), remainder_bound=rem, term_norms=tuple(norms), c=c)


def commutation_defect(fam: OperatorFamily, s: float = 0.0, t: float = 1.0, points: int = 33):
    """Worst ``||A(a)A(b) - A(b)A(a)||`` over a uniform grid, with its pair."""
    grid = np.linspace(s, t, points)
    mats = [fam(x) for x in grid]
    worst, pair = 0.0, (float(grid[0]), float(grid[0]))
    for i in range(points):
        for j in range(i + 1, points):
            v = float(np.linalg.norm(mats[i] @ mats[j] - mats[j] @ mats[i], 2))
            if v > worst:
                worst, pair = v, (float(grid[i]), float(grid[j]))
    scale = max(float(np.linalg.norm(M, 2)) for M in mats)
    return worst, pair, scale


def commuting_propagate(fam: OperatorFamily, T: float, s: float = 0.0, t: float = 1.0, *, rel_tol: float = 1e-10) -> np.ndarray:
    """``exp(T * int_s^t A)`` for pairwise commuting families.

    The commutation hypothesis is screened on a 33-point grid; a
    violation raises :class:`CommutationViolation` naming the worst pair.
    """
    s, t = _check_interval(s, t)
    worst, pair, scale = commutation_defect(fam, s, t)
    if worst > rel_tol * max(scale, 1e-300) ** 2:
        raise CommutationViolation("family does not commute on the sample grid", worst=worst, pair=list(pair), scale=scale)
    if t == s:
        return np.eye(fam.dim, dtype=np.complex128)
    integral, _ = quad_vec(lambda x: fam(x), s, t, epsabs=1e-14, epsrel=1e-13, limit=400)
    return sla.expm(T * integral)


def perturbation_series(base: Propagator, B: OperatorFamily, order: int, *, panels: int = 8, nodes: int = 16) -> Propagator:
    """Duhamel series for the generator ``T A + B`` truncated at ``order``.

    ``V_0 = U`` and ``V_{j+1}(t, s) = int_s^t U(t, r) B(r) V_j(r, s) dr``.
    The integrals use composite Gauss-Legendre panels; ``U(t, r)`` is
    written as ``U(t, s) U(r, s)^{-1}``, which is adequate for moderate
    ``T`` (the intended regime of this cross-check).
    """
    if B.dim != base.family.dim:
        raise InvalidInputError("dimension mismatch", base=base.family.dim, perturbation=B.dim)
    if int(order) < 0:
        raise InvalidInputError("order must be nonnegative")

    def terms(t: float, s: float) -> list[np.ndarray]:
        if t == s:
            I = np.eye(B.dim, dtype=np.complex128)
            return [I] + [np.zeros_like(I)] * int(order)
        x, w, S = gauss_legendre_panels(s, t, nodes, panels)
        pts = list(x) + [t]
        Us = base.checkpoints(pts, s=s)
        Ux, Ut = Us[:-1], Us[-1]
        W = np.linalg.inv(Ux)
        Bx = np.stack([B(xx) for xx in x])
        out = [Ut]
        Vx = Ux
        for _ in range(int(order)):
            F = np.einsum("kab,kbc,kcd->kad", W, Bx, Vx)
            out.append(Ut @ np.einsum("k,kab->ab", w, F))
            Vx = np.einsum("kab,kbc->kac", Ux, np.einsum("ik,kab->iab", S, F))
        return out

    def evaluate(t: float, s: float) -> np.ndarray:
        return sum(terms(t, s))

    prop = Propagator(base.family, base.T, method=f"duhamel[{order}]", tol=base.tol, evaluator=evaluate)
    object.__setattr__(prop, "terms", terms)
    return prop
