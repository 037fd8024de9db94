"""Higher-order (superadiabatic) projections.

Starting from ``E_0 = P`` the chain is

    E_k = (1/2 pi i) \\oint (A - z)^{-1} X_k (A - z)^{-1} dz + S_k - 2 P S_k P,
    X_k = P E'_{k-1} (1 - P) - (1 - P) E'_{k-1} P,
    S_k = sum_{l=1}^{k-1} E_{k-l} E_l,

sampled on a uniform grid with fourth-order differences for ``E'``.
``T_eps = sum_{k < m} eps^k E_k`` and ``P_eps`` is its Riesz projection
on the circle ``|z - 1| = 1/2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.interpolate import CubicSpline

from .adiabatic import DefectRow, DefectTable
from .errors import GridTooCoarseError, InvalidInputError, NeumannConditionError, NumericalError
from .evolution import DEFAULT_TOL, integrate
from .family import OperatorFamily
from .riesz import Contour, ProjectionFamily, _resolvents, contour_for_split
from .spectra import SpectralWindow, split_spectrum

CHAIN_GRID = 257
UNIT_CIRCLE = Contour.circle(1.0, 0.5, 128)
DERIVATIVE_CHECK = 1e-2


def grid_derivative(F: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Fourth-order differences along axis 0 of samples on a uniform grid."""
    n = len(grid)
    if n < 5:
        raise GridTooCoarseError("need at least 5 grid points for fourth-order differences")
    h = float(grid[1] - grid[0])
    if not np.allclose(np.diff(grid), h, rtol=1e-9, atol=1e-14):
        raise InvalidInputError("grid_derivative needs a uniform grid")
    D = np.empty_like(F)
    D[2:-2] = (F[:-4] - 8 * F[1:-3] + 8 * F[3:-1] - F[4:]) / (12 * h)
    fwd = (-25, 48, -36, 16, -3)
    D[0] = sum(c * F[k] for k, c in enumerate(fwd)) / (12 * h)
    D[1] = (-3 * F[0] - 10 * F[1] + 18 * F[2] - 6 * F[3] + F[4]) / (12 * h)
    D[-1] = -sum(c * F[-1 - k] for k, c in enumerate(fwd)) / (12 * h)
    D[-2] = (3 * F[-1] + 10 * F[-2] - 18 * F[-3] + 6 * F[-4] - F[-5]) / (12 * h)
    return D


def _derivative_self_check(F: np.ndarray, grid: np.ndarray, D: np.ndarray) -> float:
    # compare with the same stencil on every second point
    coarse = grid_derivative(F[::2], grid[::2])
    diff = np.abs(coarse - D[::2]).max()
    return float(diff / max(1.0, np.abs(D).max()))


@dataclass
class SuperadiabaticChain:
    grid: np.ndarray
    E: np.ndarray  # (m + 1, n, d, d)
    family: OperatorFamily
    contours: tuple
    g: float
    analytic: bool = False
    derivative_checks: list = field(default_factory=list)

    @property
    def m(self) -> int:
        return self.E.shape[0] - 1

    @property
    def P(self) -> np.ndarray:
        return self.E[0]

    def sup_norms(self) -> np.ndarray:
        return np.array([max(np.linalg.norm(M, 2) for M in Ek) for Ek in self.E])

    def algebra_residuals(self) -> np.ndarray:
        """``sup_t ||sum_{l=0}^{k} E_{k-l} E_l - E_k||`` for each ``k``."""
        out = []
        for k in range(self.m + 1):
            S = sum(np.einsum("nij,njl->nil", self.E[k - l], self.E[l]) for l in range(k + 1))
            out.append(float(np.abs(S - self.E[k]).max()))
        return np.array(out)

    def derivative_residuals(self) -> np.ndarray:
        """``sup_t ||E_k' - [A, E_{k+1}]||`` for ``k < m`` (grid differences)."""
        A = np.stack([self.family(t) for t in self.grid])
        out = []
        for k in range(self.m):
            dE = grid_derivative(self.E[k], self.grid)
            C = np.einsum("nij,njl->nil", A, self.E[k + 1]) - np.einsum("nij,njl->nil", self.E[k + 1], A)
            out.append(float(np.abs(dE - C).max()))
        return np.array(out)

    def m_eps(self, eps: float) -> int:
        """Number of terms in ``T_eps``: ``m``, or ``floor(1/(g eps))`` capped at ``m``."""
        if not self.analytic or self.g <= 0:
            return self.m
        return max(1, min(int(math.floor(1.0 / (self.g * eps))), self.m))

    def truncated(self, m: int) -> "SuperadiabaticChain":
        if not 0 <= m <= self.m:
            raise InvalidInputError("cannot truncate a chain above its order")
        return SuperadiabaticChain(self.grid, self.E[: m + 1], self.family, self.contours, self.g, self.analytic, self.derivative_checks[: max(m - 1, 0)])


def build_E_chain(
    fam: OperatorFamily,
    projfam: ProjectionFamily,
    m: int,
    grid: Sequence[float] | int = CHAIN_GRID,
    *,
    window: Optional[SpectralWindow] = None,
    nodes: int = 128,
    analytic: bool = False,
    check_tol: float = DERIVATIVE_CHECK,
) -> SuperadiabaticChain:
    """Sample ``E_0, ..., E_m`` on a uniform grid.

    Contours come from ``window`` (a circle around the selected cluster
    at each grid point).  ``E_0' = P'`` is taken from ``projfam``; higher
    derivatives use grid differences whose consistency with the same
    stencil on the halved grid is checked against ``check_tol``.  The
    terms entering ``T_eps`` are ``E_0, ..., E_{m-1}``; ``E_m`` is kept
    for the derivative identity and its self-check is only recorded.
    """
    if int(m) < 0:
        raise InvalidInputError("order m must be nonnegative")
    grid = np.linspace(0.0, 1.0, grid) if isinstance(grid, int) else np.asarray(grid, dtype=float)
    n, d = len(grid), fam.dim
    I = np.eye(d, dtype=complex)
    pairs = [projfam.at(t) for t in grid]
    P = np.stack([p for p, _ in pairs])
    dP = np.stack([q for _, q in pairs])

    resolvents = []
    contours = []
    prev = None
    for t in grid:
        A = fam(t)
        if window is not None:
            sp = split_spectrum(A, window, t, prev)
            prev = sp.inside
            C = contour_for_split(sp.inside, sp.outside, nodes)
        else:
            raise InvalidInputError("build_E_chain needs a spectral window for its contours")
        contours.append(C)
        resolvents.append(_resolvents(A, C))

    E = [P]
    checks = []
    for k in range(1, int(m) + 1):
        if k == 1:
            dPrev = dP
        else:
            dPrev = grid_derivative(E[k - 1], grid)
            rel = _derivative_self_check(E[k - 1], grid, dPrev)
            checks.append(rel)
            # E_m only enters the derivative identity, not T_eps: record, do not fail
            if rel > check_tol and k < int(m):
                raise GridTooCoarseError("derivative self-check failed", k=k - 1, relative_discrepancy=rel)
        Ek = np.empty((n, d, d), dtype=complex)
        for j in range(n):
            Pj = P[j]
            Q = I - Pj
            X = Pj @ dPrev[j] @ Q - Q @ dPrev[j] @ Pj
            R, w = resolvents[j]
            term = np.einsum("k,kij,jl,klm->im", w, R, X, R, optimize=True)
            S = np.zeros((d, d), dtype=complex)
            for l in range(1, k):
                S += E[k - l][j] @ E[l][j]
            Ek[j] = term + S - 2 * Pj @ S @ Pj
        E.append(Ek)
    E = np.stack(E)
    g = 0.0
    norms = [max(np.linalg.norm(M, 2) for M in Ek) for Ek in E]
    for k in range(1, len(E)):
        g = max(g, (norms[k] / math.factorial(k)) ** (1.0 / k))
    return SuperadiabaticChain(grid, E, fam, tuple(contours), float(g), bool(analytic), checks)


# ------------------------------------------------------------ projections


def _circle_resolvents_of_P(P: np.ndarray, z: np.ndarray) -> np.ndarray:
    # (z - P)^{-1} = P/(z - 1) + (1 - P)/z for a projection P
    I = np.eye(P.shape[0])
    return P[None] / (z - 1)[:, None, None] + (I - P)[None] / z[:, None, None]


def neumann_margin(chain: SuperadiabaticChain, eps: float, m_eps: Optional[int] = None) -> float:
    """``sup_{t,z} ||(T_eps - P)(z - P)^{-1}||`` on the circle ``|z - 1| = 1/2``.

    A value ``<= 1/2`` is the sufficient condition under which the
    Neumann series bounds ``||(z - T_eps)^{-1}||`` by ``M0``.
    """
    m_eps = chain.m_eps(eps) if m_eps is None else m_eps
    if m_eps <= 1:
        return 0.0
    z, _ = UNIT_CIRCLE.quadrature()
    worst = 0.0
    for j in range(len(chain.grid)):
        D = sum(eps ** k * chain.E[k][j] for k in range(1, m_eps))
        prod = np.einsum("ij,kjl->kil", D, _circle_resolvents_of_P(chain.E[0][j], z))
        worst = max(worst, float(np.linalg.norm(prod, 2, axis=(1, 2)).max()))
    return worst


def resolvent_constant(chain: SuperadiabaticChain) -> float:
    """``M0 = 2 sup_{t,z} ||(z - P(t))^{-1}||`` over the circle ``|z - 1| = 1/2``."""
    z, _ = UNIT_CIRCLE.quadrature()
    return 2.0 * max(float(np.linalg.norm(_circle_resolvents_of_P(P, z), 2, axis=(1, 2)).max()) for P in chain.E[0])


def resolvent_ratio(chain: SuperadiabaticChain, eps: float, m_eps: Optional[int] = None) -> float:
    """``sup_{t,z} ||(z - T_eps)^{-1}|| / M0``; at most 1 when ``P_eps`` is usable."""
    m_eps = chain.m_eps(eps) if m_eps is None else m_eps
    z, _ = UNIT_CIRCLE.quadrature()
    d = chain.E.shape[-1]
    I = np.eye(d, dtype=complex)
    worst = 0.0
    for j in range(len(chain.grid)):
        T = sum(eps ** k * chain.E[k][j] for k in range(m_eps))
        try:
            R = np.linalg.solve(z[:, None, None] * I - T[None], np.broadcast_to(I, (len(z), d, d)))
        except np.linalg.LinAlgError:
            return math.inf
        worst = max(worst, float(np.linalg.norm(R, 2, axis=(1, 2)).max()))
    return worst / resolvent_constant(chain)


def eps0_prime(chain: SuperadiabaticChain, eps_max: float = 1.0, iters: int = 40, *, criterion: str = "neumann") -> float:
    """Largest ``eps <= eps_max`` (by bisection) meeting ``criterion``.

    ``neumann``: :func:`neumann_margin` ``<= 1/2``; ``resolvent``:
    :func:`resolvent_ratio` ``<= 1``.
    """
    def ok(e: float) -> bool:
        if criterion == "neumann":
            return neumann_margin(chain, e) <= 0.5
        return resolvent_ratio(chain, e) <= 1.0

    if ok(eps_max):
        return eps_max
    lo, hi = 0.0, eps_max
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if ok(mid):
            lo = mid
        else:
            hi = mid
    return lo


@dataclass
class SuperProjectionFamily:
    eps: float
    m_eps: int
    grid: np.ndarray
    T_eps: np.ndarray
    P: np.ndarray
    dP: np.ndarray
    margin: float
    resolvent_ratio: float

    def idempotency_defect(self) -> float:
        return float(max(np.linalg.norm(M @ M - M, 2) for M in self.P))


def _unit_circle_projection(T: np.ndarray) -> np.ndarray:
    R, w = _resolvents(T, UNIT_CIRCLE)
    return np.einsum("k,kij->ij", w, R)


def superadiabatic_projection(chain: SuperadiabaticChain, eps: float, *, check: str = "spectral") -> SuperProjectionFamily:
    """``P_eps`` on the chain grid; ``P_eps'`` by grid differences.

    ``check`` selects the admissibility test for ``eps``:

    ``neumann``    the sufficient Neumann-series condition (margin <= 1/2);
    ``resolvent``  ``||(z - T_eps)^{-1}|| <= M0`` on the circle;
    ``spectral``   (default) eigenvalues of ``T_eps`` keep clear of the
                   circle and ``rank P_eps = rank P`` at every grid point;
    ``none``       no test.
    """
    eps = float(eps)
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    if check not in ("spectral", "resolvent", "neumann", "none"):
        raise InvalidInputError(f"unknown check {check!r}")
    m_eps = chain.m_eps(eps)
    margin = neumann_margin(chain, eps, m_eps)
    ratio = resolvent_ratio(chain, eps, m_eps)
    if check == "neumann" and margin > 0.5:
        raise NeumannConditionError("eps too large for the Neumann condition", eps=eps, margin=margin, eps0_prime=eps0_prime(chain, eps))
    if check == "resolvent" and not ratio <= 1.0:
        raise NeumannConditionError(
            "resolvent of T_eps exceeds M0 on the circle", eps=eps, ratio=ratio,
            eps0_prime=eps0_prime(chain, eps, criterion="resolvent"),
        )
    Ts = sum(eps ** k * chain.E[k] for k in range(m_eps))
    if m_eps <= 1:
        Pe = chain.E[0].copy()
    else:
        Pe = np.stack([_unit_circle_projection(T) for T in Ts])
    if check == "spectral":
        ranks = np.rint(np.einsum("kii->k", Pe).real)
        if np.any(ranks != np.rint(np.trace(chain.E[0][0]).real)):
            raise NeumannConditionError("T_eps spectrum no longer splits like P", eps=eps, ratio=ratio)
    dPe = grid_derivative(Pe, chain.grid)
    return SuperProjectionFamily(eps, m_eps, chain.grid, Ts, Pe, dPe, margin, ratio)


def superadiabatic_comparison_generator(chain: SuperadiabaticChain, eps: float) -> tuple[OperatorFamily, callable]:
    """Generator ``A/eps + (1 - 2 P_eps)(P_eps' - [A, P_eps]/eps)`` and ``t -> P_eps(t)``.

    ``T_eps`` is interpolated by cubic splines, ``P_eps`` and its
    derivative are then computed on the fly from the contour integral so
    that the two are consistent.
    """
    m_eps = chain.m_eps(eps)
    Ts = sum(eps ** k * chain.E[k] for k in range(m_eps))
    spline = CubicSpline(chain.grid, Ts, axis=0)
    dspline = spline.derivative()
    fam = chain.family
    d = fam.dim
    I = np.eye(d, dtype=complex)

    def proj(t: float):
        R, w = _resolvents(np.asarray(spline(t)), UNIT_CIRCLE)
        P = np.einsum("k,kij->ij", w, R)
        dP = np.einsum("k,kij,jl,klm->im", w, R, np.asarray(dspline(t)), R, optimize=True)
        return P, dP

    def value(t: float) -> np.ndarray:
        A = fam(t)
        P, dP = proj(t)
        Y = dP - (A @ P - P @ A) / eps
        return A / eps + (I - 2 * P) @ Y

    return OperatorFamily(d, value, label=f"superadiabatic[eps={eps:g}]"), proj


SUPER_METRICS = ("tangent", "super-proj", "super-reverse", "super-evolution")


def superadiabatic_defects(
    fam: OperatorFamily,
    chain: SuperadiabaticChain,
    eps_grid: Sequence[float],
    metrics: Sequence[str] = SUPER_METRICS,
    *,
    tol: float = DEFAULT_TOL,
    stride: int = 1,
) -> list[DefectTable]:
    """Defects of ``P_eps`` against ``U_{1/eps}`` tabulated over ``eps``.

    ``tangent``: ``sup ||P_eps' - [A, P_eps]/eps||``;
    ``super-proj``: ``sup ||(1 - P_eps) U_{1/eps} P_eps(0)||``;
    ``super-reverse``: ``sup ||P_eps U_{1/eps} (1 - P_eps(0))||``;
    ``super-evolution``: ``sup ||V_{1/eps} - U_{1/eps}||`` with ``V`` the
    evolution of :func:`superadiabatic_comparison_generator`.
    Suprema are taken over the chain grid (every ``stride``-th point).
    """
    for mname in metrics:
        if mname not in SUPER_METRICS:
            raise InvalidInputError(f"unknown metric {mname!r}", known=list(SUPER_METRICS))
    grid = chain.grid
    idx = np.arange(0, len(grid), stride)
    if idx[-1] != len(grid) - 1:
        idx = np.append(idx, len(grid) - 1)
    times = grid[idx]
    A = [fam(t) for t in times]
    d = fam.dim
    I = np.eye(d)
    rows = {mname: [] for mname in metrics}
    for eps in eps_grid:
        eps = float(eps)
        try:
            sp = superadiabatic_projection(chain, eps)
            P = sp.P[idx]
            dP = sp.dP[idx]
            vals: dict[str, np.ndarray] = {}
            if "tangent" in metrics:
                vals["tangent"] = np.array([np.linalg.norm(dP[i] - (A[i] @ P[i] - P[i] @ A[i]) / eps, 2) for i in range(len(times))])
            if any(mname.startswith("super-") for mname in metrics):
                U = integrate(fam, 1.0 / eps, 0.0, times, np.eye(d, dtype=complex), atol=tol, rtol=tol)
                if "super-proj" in metrics:
                    vals["super-proj"] = np.array([np.linalg.norm((I - P[i]) @ U[i] @ P[0], 2) for i in range(len(times))])
                if "super-reverse" in metrics:
                    vals["super-reverse"] = np.array([np.linalg.norm(P[i] @ U[i] @ (I - P[0]), 2) for i in range(len(times))])
                if "super-evolution" in metrics:
                    gen, _ = superadiabatic_comparison_generator(chain, eps)
                    V = integrate(gen, 1.0, 0.0, times, np.eye(d, dtype=complex), atol=tol, rtol=tol)
                    vals["super-evolution"] = np.array([np.linalg.norm(V[i] - U[i], 2) for i in range(len(times))])
            for mname in metrics:
                i = int(np.argmax(vals[mname]))
                rows[mname].append(DefectRow(eps, float(vals[mname][i]), float(times[i])))
        except NumericalError as exc:
            for mname in metrics:
                rows[mname].append(DefectRow(eps, math.nan, math.nan, "failed", exc.to_dict()))
    return [DefectTable(mname, rows[mname], times, param_name="eps") for mname in metrics]
