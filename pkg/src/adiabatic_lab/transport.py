"""Discrete-ordinates slab transport as an adiabatic test family.

Unknowns are cell averages ``phi(x_i, mu_j)`` on ``[-a, a]`` with
Gauss-Legendre ordinates, ordered ``j * n_x + i`` and scaled by
``sqrt(w_j)`` so that the Euclidean norm is the discrete ``L^2`` norm.
In these coordinates

* ``A0`` is first-order upwind streaming ``-mu d/dx`` with vacuum inflow,
* ``B = kron(b b^T, I)`` with ``b = sqrt(w / 2)`` is the orthogonal
  projection onto angularly constant fluxes,

and the family is ``A(t) = A0 + c(t) B - s(t) I``.

The reflection ``(x, mu) -> (-x, -mu)`` commutes with ``A0`` and ``B``.
The tracked eigenvector is even, so ``P`` and ``[P', P]`` act inside the
even subspace and the adiabatic and true evolutions coincide on the odd
one.  The sweep therefore integrates the even block only.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from numpy.polynomial import chebyshev as cheb

from ._kernels import upwind_streaming
from .adiabatic import DefectRow, DefectTable, RateFit, defect_sweep, rate_fit
from .errors import ConfigError, InvalidInputError, NonUniformGapError, NumericalError
from .expr import ScalarExpr
from .family import OperatorFamily
from .linop import eig
from .riesz import ProjectionFamily

DEFAULT_T_GRID = (16.0, 32.0, 64.0, 128.0, 256.0, 512.0)
MAGNUS_STEP = 0.2  # T * h, in units of the fast time
CHEB_NODES = 16
GAP_THRESHOLD = 1e-6


@dataclass(frozen=True)
class SlabDiscretization:
    a: float
    n_x: int
    n_mu: int
    mu: np.ndarray
    w: np.ndarray
    A0: np.ndarray
    B: np.ndarray
    perm: np.ndarray = field(repr=False)
    even_basis: np.ndarray = field(repr=False)

    @property
    def dim(self) -> int:
        return self.n_x * self.n_mu

    @property
    def dx(self) -> float:
        return 2 * self.a / self.n_x

    def even_block(self, M: np.ndarray) -> np.ndarray:
        Q = self.even_basis
        return Q.T @ M @ Q

    def unscale(self, v: np.ndarray) -> np.ndarray:
        """Back to plain nodal values ``phi(x_i, mu_j)``."""
        return v / np.repeat(np.sqrt(self.w), self.n_x)


def discretize_slab(a: float, n_x: int, n_mu: int) -> SlabDiscretization:
    """Assemble ``A0`` and ``B`` for the slab ``[-a, a]``."""
    if not a > 0:
        raise InvalidInputError("half-width a must be positive")
    if int(n_x) != n_x or n_x < 8:
        raise InvalidInputError("n_x must be an integer >= 8")
    if int(n_mu) != n_mu or n_mu < 4 or n_mu % 2:
        raise InvalidInputError("n_mu must be an even integer >= 4")
    n_x, n_mu = int(n_x), int(n_mu)
    mu, w = np.polynomial.legendre.leggauss(n_mu)
    A0 = upwind_streaming(mu, n_x, 2 * a / n_x)
    b = np.sqrt(w / 2)
    B = np.kron(np.outer(b, b), np.eye(n_x))
    perm = np.array([(n_mu - 1 - j) * n_x + (n_x - 1 - i) for j in range(n_mu) for i in range(n_x)])
    n = n_x * n_mu
    cols = []
    for k in range(n):
        if perm[k] > k:
            v = np.zeros(n)
            v[k] = v[perm[k]] = 1 / math.sqrt(2)
            cols.append(v)
        elif perm[k] == k:
            v = np.zeros(n)
            v[k] = 1.0
            cols.append(v)
    return SlabDiscretization(float(a), n_x, n_mu, mu, w, A0, B, perm, np.array(cols).T)


@dataclass(frozen=True)
class LeadingEigen:
    beta: float
    gap: float
    vector: np.ndarray
    second: complex


def leading_eigenpair(disc: SlabDiscretization, c: float) -> LeadingEigen:
    """Largest-real-part eigenvalue of ``A0 + c B`` and its distance to the rest."""
    if not c > 0:
        raise InvalidInputError("c must be positive")
    dec = eig(disc.A0 + c * disc.B)
    beta = dec.values[0]
    rest = dec.values[1:]
    gap = float(np.min(np.abs(rest - beta))) if len(rest) else math.inf
    v = dec.vectors[:, 0]
    v = v / v[np.argmax(np.abs(v))]
    v = np.real_if_close(v, tol=1e6)
    v = v / np.linalg.norm(v)
    return LeadingEigen(float(beta.real), gap, v, complex(rest[0]) if len(rest) else complex("nan"))


def leading_eigenvalue(disc: SlabDiscretization, c: float) -> float:
    """``beta_1(c)``."""
    return leading_eigenpair(disc, c).beta


def positive_count(disc: SlabDiscretization, c: float) -> int:
    """Number of eigenvalues of ``A0 + c B`` with positive real part."""
    return int(np.sum(np.linalg.eigvals(disc.A0 + c * disc.B).real > 0))


@dataclass(frozen=True)
class CrossSectionSchedule:
    c: Callable[[float], float]
    s: Callable[[float], float]
    dc: Callable[[float], float]
    ds: Callable[[float], float]
    label: str = ""

    @classmethod
    def from_expr(cls, c: str | float, s: str | float) -> "CrossSectionSchedule":
        ce, se = ScalarExpr(c), ScalarExpr(s)
        if not (ce.is_real and se.is_real):
            raise ConfigError("cross sections must be real expressions")
        return cls(ce, se, ce.derivative, se.derivative, f"c={ce.source}, s={se.source}")

    def check(self, samples: int = 257) -> tuple[float, float]:
        """Validate ``0 < c <= s`` on a grid; return ``(min c, max c)``."""
        ts = np.linspace(0.0, 1.0, samples)
        cs = np.array([self.c(t) for t in ts])
        ss = np.array([self.s(t) for t in ts])
        if np.any(cs <= 0) or np.any(ss <= 0):
            raise ConfigError("cross sections must be positive")
        if np.any(cs > ss + 1e-14):
            i = int(np.argmax(cs - ss))
            raise ConfigError("schedule violates c(t) <= s(t)", t=float(ts[i]), c=float(cs[i]), s=float(ss[i]))
        return float(cs.min()), float(cs.max())


def transport_family(disc: SlabDiscretization, schedule: CrossSectionSchedule) -> OperatorFamily:
    A0, B = disc.A0.astype(complex), disc.B.astype(complex)
    I = np.eye(disc.dim)
    return OperatorFamily(
        disc.dim,
        lambda t: A0 + schedule.c(t) * B - schedule.s(t) * I,
        lambda t: schedule.dc(t) * B - schedule.ds(t) * I,
        None,
        f"transport[{schedule.label}]",
    )


# ----------------------------------------------------- tracked projection


class LeadingProjection:
    """Rank-one spectral projection ``P = v w^T / (w^T v)`` as a function of ``c``.

    Right and left leading eigenvectors of the even block are computed
    at Chebyshev nodes in ``c`` and interpolated, so ``P`` and ``dP/dc``
    are available anywhere in ``[c_lo, c_hi]``.
    """

    def __init__(self, disc: SlabDiscretization, c_lo: float, c_hi: float, nodes: int = CHEB_NODES) -> None:
        self.disc = disc
        A0e, Be = disc.even_block(disc.A0), disc.even_block(disc.B)
        self.A0e, self.Be = A0e, Be
        if c_hi - c_lo < 1e-14:
            self.constant = True
            self.c_lo = self.c_hi = c_lo
            v, w = self._pair(c_lo)
            self._P = np.outer(v, w) / (w @ v)
            return
        self.constant = False
        self.c_lo, self.c_hi = c_lo, c_hi
        xs = np.cos(np.pi * (np.arange(nodes) + 0.5) / nodes)
        V, W = [], []
        for x in xs:
            v, w = self._pair(self._c_of(x))
            V.append(v)
            W.append(w)
        self.cv = cheb.chebfit(xs, np.array(V), nodes - 1)
        self.cw = cheb.chebfit(xs, np.array(W), nodes - 1)
        self.dcv = cheb.chebder(self.cv)
        self.dcw = cheb.chebder(self.cw)

    def _c_of(self, x: float) -> float:
        return 0.5 * (self.c_lo + self.c_hi) + 0.5 * (self.c_hi - self.c_lo) * x

    def _pair(self, c: float) -> tuple[np.ndarray, np.ndarray]:
        M = self.A0e + c * self.Be
        vals, VL, VR = sla.eig(M, left=True, right=True)
        k = int(np.argmax(vals.real))
        v = VR[:, k].real
        v = v * np.sign(v.sum()) / np.linalg.norm(v)
        w = VL[:, k].real
        w = w / (w @ v)
        return v, w

    def __call__(self, c: float, dc: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        """Even-block ``P`` and ``dP/dt`` given ``c`` and ``dc/dt``."""
        if self.constant:
            return self._P, np.zeros_like(self._P)
        half = 0.5 * (self.c_hi - self.c_lo)
        x = (c - 0.5 * (self.c_lo + self.c_hi)) / half
        v, w = cheb.chebval(x, self.cv), cheb.chebval(x, self.cw)
        dv = cheb.chebval(x, self.dcv) * dc / half
        dw = cheb.chebval(x, self.dcw) * dc / half
        s = w @ v
        P = np.outer(v, w) / s
        ds = dw @ v + w @ dv
        dP = (np.outer(dv, w) + np.outer(v, dw)) / s - P * ds / s
        return P, dP

    def full(self, c: float, dc: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
        Q = self.disc.even_basis
        P, dP = self(c, dc)
        return Q @ P @ Q.T, Q @ dP @ Q.T


def check_gap(disc: SlabDiscretization, c_lo: float, c_hi: float, samples: int = 17, threshold: float = GAP_THRESHOLD) -> float:
    """Smallest distance of ``beta_1(c)`` to the rest of the spectrum for ``c`` in range."""
    cs = np.linspace(c_lo, c_hi, samples) if c_hi > c_lo else [c_lo]
    worst = math.inf
    for c in cs:
        le = leading_eigenpair(disc, c)
        if le.gap < threshold:
            raise NonUniformGapError("leading eigenvalue is not isolated", crossings=[], min_gap=le.gap)
        worst = min(worst, le.gap)
    return worst


# ------------------------------------------------------------------ sweep


@dataclass
class TransportSweep:
    table: DefectTable
    fit: Optional[RateFit]
    timings: list
    min_gap: float
    method: str


def _magnus_row(disc: SlabDiscretization, sched: CrossSectionSchedule, lp: LeadingProjection, T: float, omega: float, kmax: float, step: float):
    A0e, Be = lp.A0e, lp.Be
    m = A0e.shape[0]
    I = np.eye(m)
    C = A0e @ Be - Be @ A0e
    n_steps = max(1, int(math.ceil(T / step)))
    h = 1.0 / n_steps
    g = math.sqrt(3) / 6
    U = np.eye(m)
    Ua = np.eye(m)
    best, best_t = 0.0, 0.0
    growth = max(0.0, T * omega + kmax)
    for k in range(n_steps):
        t = k * h
        t1, t2 = t + (0.5 - g) * h, t + (0.5 + g) * h
        c1, c2 = sched.c(t1), sched.c(t2)
        s1, s2 = sched.s(t1), sched.s(t2)
        A1 = T * (A0e + c1 * Be - s1 * I)
        A2 = T * (A0e + c2 * Be - s2 * I)
        Om = 0.5 * h * (A1 + A2) + (math.sqrt(3) / 12) * h * h * T * T * (c1 - c2) * C
        if lp.constant:
            Oma = Om
        else:
            P1, dP1 = lp(c1, sched.dc(t1))
            P2, dP2 = lp(c2, sched.dc(t2))
            K1 = dP1 @ P1 - P1 @ dP1
            K2 = dP2 @ P2 - P2 @ dP2
            corr = A2 @ K1 - K1 @ A2 + K2 @ A1 - A1 @ K2 + K2 @ K1 - K1 @ K2
            Oma = Om + 0.5 * h * (K1 + K2) + (math.sqrt(3) / 12) * h * h * corr
        U = sla.expm(Om) @ U
        Ua = U if Oma is Om else sla.expm(Oma) @ Ua
        tn = (k + 1) * h
        D = Ua - U
        if np.linalg.norm(D) >= best:
            v = float(np.linalg.norm(D, 2))
            if v > best:
                best, best_t = v, tn
        # later defects are bounded by ||U(t')|| + ||Ua(t')||, which cannot
        # grow faster than exp((T omega + max||K||)(t' - t))
        if best > 0 and np.linalg.norm(U) + math.exp(growth * (1 - tn)) * np.linalg.norm(Ua) < best:
            break
    return best, best_t


def transport_adiabatic_sweep(
    disc: SlabDiscretization,
    schedule: CrossSectionSchedule,
    Tgrid: Sequence[float] = DEFAULT_T_GRID,
    *,
    method: str = "magnus",
    step: float = MAGNUS_STEP,
    jobs: int = 1,
    fit: bool = True,
    tol: float = 1e-10,
) -> TransportSweep:
    """Evolution defect ``sup_t ||U_{a,T}(t) - U_T(t)||`` for the slab family.

    ``method='magnus'`` integrates the even block with a fourth-order
    Magnus scheme at fixed ``T h = step`` and samples the defect at the
    step points; ``method='rk'`` runs the generic adaptive sweep on the
    full matrix (only practical for small grids).
    """
    c_lo, c_hi = schedule.check()
    min_gap = check_gap(disc, c_lo, c_hi)
    lp = LeadingProjection(disc, c_lo, c_hi)
    Ts = [float(T) for T in Tgrid]
    timings = []

    if method == "rk":
        proj = lambda t: lp.full(schedule.c(t), schedule.dc(t))
        pf = ProjectionFamily(np.array([0.0, 1.0]), np.zeros((2, disc.dim, disc.dim)), np.zeros((2, disc.dim, disc.dim)),
                              np.zeros((2, disc.dim, disc.dim)), "analytic", (), proj)
        start = time.perf_counter()
        table = defect_sweep(transport_family(disc, schedule), pf, Ts, metrics=("evolution",), tol=tol, refine=False, jobs=jobs)[0]
        timings = [(time.perf_counter() - start) / max(len(Ts), 1)] * len(Ts)
    elif method == "magnus":
        ts = np.linspace(0.0, 1.0, 129)
        herm = float(np.linalg.eigvalsh(0.5 * (lp.A0e + lp.A0e.T)).max())
        omega = herm + max(schedule.c(t) - schedule.s(t) for t in ts)
        kmax = 0.0
        if not lp.constant:
            for t in ts:
                P, dP = lp(schedule.c(t), schedule.dc(t))
                kmax = max(kmax, float(np.linalg.norm(dP @ P - P @ dP, 2)))
            kmax *= 1.05

        def job(T):
            t0 = time.perf_counter()
            try:
                res = _magnus_row(disc, schedule, lp, T, omega, kmax, step)
                return DefectRow(T, res[0], res[1]), time.perf_counter() - t0
            except NumericalError as exc:
                return DefectRow(T, math.nan, math.nan, "failed", exc.to_dict()), time.perf_counter() - t0

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                out = list(pool.map(job, Ts))
        else:
            out = [job(T) for T in Ts]
        table = DefectTable("evolution", [r for r, _ in out], np.linspace(0.0, 1.0, 2))
        timings = [dt for _, dt in out]
    else:
        raise InvalidInputError(f"unknown method {method!r}", known=["magnus", "rk"])
    rf = None
    if fit and len(Ts) >= 4 and all(r.status == "ok" and r.value > 0 for r in table.rows):
        rf = rate_fit(table)
    return TransportSweep(table, rf, timings, min_gap, method)
