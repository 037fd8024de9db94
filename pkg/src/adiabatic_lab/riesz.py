"""Riesz projections by trapezoidal quadrature on circles.

For a cycle made of circles the projection
``(1/2 pi i) \\oint (z - A)^{-1} dz`` becomes ``sum_k w_k (z_k - A)^{-1}``
with ``w_k = orientation * r * exp(i theta_k) / N``.  Derivatives of the
projection and the solution ``B`` of the commutator equation are sums of
the same kind.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ContourError, InvalidInputError, NonUniformGapError
from .family import OperatorFamily, derivative, second_derivative
from .linop import as_operator, eigvals
from .spectra import SpectralWindow, gap_profile, split_spectrum

DEFAULT_NODES = 128
MIN_NODES = 16
RADIUS_CLIP = (1e-3, 10.0)
CONTOUR_CLEARANCE = 1e-3


@dataclass(frozen=True)
class Contour:
    """Union of circles ``(center, radius, orientation)``."""

    components: tuple
    nodes: int = DEFAULT_NODES

    def __post_init__(self) -> None:
        comps = tuple((complex(c), float(r), int(o)) for c, r, o in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise InvalidInputError("contour needs at least one circle")
        if int(self.nodes) < MIN_NODES:
            raise InvalidInputError(f"need at least {MIN_NODES} nodes per circle")
        for c, r, o in comps:
            if not r > 0 or o not in (1, -1):
                raise InvalidInputError("radius must be positive and orientation +-1")
        for i, (c1, r1, _) in enumerate(comps):
            for c2, r2, _ in comps[i + 1:]:
                d = abs(c1 - c2)
                if not (d > r1 + r2 or d < abs(r1 - r2)):
                    raise InvalidInputError("contour circles must be pairwise disjoint")

    @classmethod
    def circle(cls, center: complex, radius: float, nodes: int = DEFAULT_NODES) -> "Contour":
        return cls(((center, radius, 1),), nodes)

    def quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        theta = 2 * np.pi * np.arange(self.nodes) / self.nodes
        e = np.exp(1j * theta)
        zs, ws = [], []
        for c, r, o in self.components:
            zs.append(c + r * e)
            ws.append(o * r * e / self.nodes)
        return np.concatenate(zs), np.concatenate(ws)

    def winding(self, z: complex) -> int:
        return sum(o for c, r, o in self.components if abs(complex(z) - c) < r)

    def clearance(self, values: np.ndarray) -> float:
        """Smallest distance from ``values`` to the trace, relative to the radius."""
        worst = math.inf
        for c, r, _ in self.components:
            if len(values):
                worst = min(worst, float(np.min(np.abs(np.abs(values - c) - r))) / r)
        return worst

    def doubled(self) -> "Contour":
        return Contour(self.components, 2 * self.nodes)

    def describe(self) -> dict:
        return {
            "circles": [[c.real, c.imag, r, o] for c, r, o in self.components],
            "nodes": self.nodes,
        }


def _resolvents(A: np.ndarray, contour: Contour) -> tuple[np.ndarray, np.ndarray]:
    vals = eigvals(A)
    clear = contour.clearance(vals)
    if clear < CONTOUR_CLEARANCE:
        raise ContourError("eigenvalue too close to the contour", clearance=clear)
    z, w = contour.quadrature()
    d = A.shape[0]
    I = np.eye(d, dtype=complex)
    R = np.linalg.solve(z[:, None, None] * I - A[None], np.broadcast_to(I, (len(z), d, d)))
    return R, w


def riesz_projection(A, contour: Contour) -> np.ndarray:
    """``(1/2 pi i) \\oint (z - A)^{-1} dz`` over ``contour``."""
    A = as_operator(A)
    R, w = _resolvents(A, contour)
    return np.einsum("k,kij->ij", w, R)


def _sandwich(R: np.ndarray, w: np.ndarray, X: np.ndarray) -> np.ndarray:
    # sum_k w_k R_k X R_k (X may depend on k)
    if X.ndim == 2:
        return np.einsum("k,kij,jl,klm->im", w, R, X, R, optimize=True)
    return np.einsum("k,kij,kjl,klm->im", w, R, X, R, optimize=True)


def projection_derivative(fam: OperatorFamily, contour: Contour, t: float) -> np.ndarray:
    """``P'(t) = (1/2 pi i) \\oint R A'(t) R dz`` with ``R = (z - A(t))^{-1}``."""
    R, w = _resolvents(fam(t), contour)
    return _sandwich(R, w, derivative(fam, t))


def projection_jet(fam: OperatorFamily, contour: Contour, t: float, order: int = 2) -> list[np.ndarray]:
    """``[P, P', P'']`` (up to ``order``) at ``t`` from one set of resolvents."""
    R, w = _resolvents(fam(t), contour)
    out = [np.einsum("k,kij->ij", w, R)]
    if order >= 1:
        A1 = derivative(fam, t)
        RA = R @ A1
        out.append(np.einsum("k,kij,kjl->il", w, RA, R))
        if order >= 2:
            A2 = second_derivative(fam, t)
            out.append(np.einsum("k,kij->ij", w, 2 * RA @ RA @ R + R @ A2 @ R))
    return out


def commutator_operator(fam: OperatorFamily, dP: np.ndarray, contour: Contour, t: float) -> np.ndarray:
    """``B(t) = (1/2 pi i) \\oint (A - z)^{-1} P'(t) (A - z)^{-1} dz``.

    ``B`` solves ``B A - A B = P' P - P P'``.  ``dP`` is the projection
    derivative at ``t`` (for example from a :class:`ProjectionFamily`).
    """
    R, w = _resolvents(fam(t), contour)
    return _sandwich(R, w, np.asarray(dP, dtype=complex))


# ---------------------------------------------------------------- families


def _hermite5(u: float, h: float, p0, d0, s0, p1, d1, s1):
    u2, u3, u4, u5 = u * u, u ** 3, u ** 4, u ** 5
    H = (
        1 - 10 * u3 + 15 * u4 - 6 * u5,
        u - 6 * u3 + 8 * u4 - 3 * u5,
        0.5 * u2 - 1.5 * u3 + 1.5 * u4 - 0.5 * u5,
        0.5 * u3 - u4 + 0.5 * u5,
        -4 * u3 + 7 * u4 - 3 * u5,
        10 * u3 - 15 * u4 + 6 * u5,
    )
    dH = (
        -30 * u2 + 60 * u3 - 30 * u4,
        1 - 18 * u2 + 32 * u3 - 15 * u4,
        u - 4.5 * u2 + 6 * u3 - 2.5 * u4,
        1.5 * u2 - 4 * u3 + 2.5 * u4,
        -12 * u2 + 28 * u3 - 15 * u4,
        30 * u2 - 60 * u3 + 30 * u4,
    )
    coefs = (p0, h * d0, h * h * s0, h * h * s1, h * d1, p1)
    val = sum(c * x for c, x in zip(H, coefs))
    der = sum(c * x for c, x in zip(dH, coefs)) / h
    return val, der


@dataclass(frozen=True)
class ProjectionFamily:
    """Samples of ``P``, ``P'``, ``P''`` on a grid.

    :meth:`at` returns ``(P(t), P'(t))`` either from an exact evaluator
    or from the piecewise quintic Hermite interpolant of the samples,
    whose derivative is returned together with it so that the pair is
    consistent.
    """

    grid: np.ndarray
    P: np.ndarray
    dP: np.ndarray
    d2P: np.ndarray
    provenance: str
    contours: tuple = ()
    evaluator: Optional[Callable[[float], tuple[np.ndarray, np.ndarray]]] = field(default=None, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.P.shape[1]

    @property
    def rank(self) -> int:
        return int(round(float(np.trace(self.P[0]).real)))

    def at(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        t = float(t)
        if self.evaluator is not None:
            P, dP = self.evaluator(t)
            return np.asarray(P, dtype=complex), np.asarray(dP, dtype=complex)
        g = self.grid
        if not (g[0] - 1e-12 <= t <= g[-1] + 1e-12):
            raise InvalidInputError(f"t={t} outside the projection grid [{g[0]}, {g[-1]}]")
        i = int(np.clip(np.searchsorted(g, t, side="right") - 1, 0, len(g) - 2))
        h = g[i + 1] - g[i]
        u = (t - g[i]) / h
        return _hermite5(u, h, self.P[i], self.dP[i], self.d2P[i], self.P[i + 1], self.dP[i + 1], self.d2P[i + 1])

    def idempotency_defect(self) -> float:
        return float(max(np.linalg.norm(P @ P - P, 2) for P in self.P))

    def to_json(self) -> str:
        def flat(M):
            return {"re": np.real(M).ravel().tolist(), "im": np.imag(M).ravel().tolist()}

        return json.dumps({
            "provenance": self.provenance,
            "dim": self.dim,
            "t": [float(x) for x in self.grid],
            "P": [flat(M) for M in self.P],
            "dP": [flat(M) for M in self.dP],
        })


def _fd_second(grid: np.ndarray, dP: np.ndarray) -> np.ndarray:
    return np.gradient(dP, grid, axis=0, edge_order=2)


def _stencil_derivative(f: Callable[[float], np.ndarray], t: float, h: float = 1e-3) -> np.ndarray:
    # fourth-order five-point stencil, one-sided where [0, 1] would be left
    if 2 * h <= t <= 1 - 2 * h:
        return (f(t - 2 * h) - 8 * f(t - h) + 8 * f(t + h) - f(t + 2 * h)) / (12 * h)
    sgn = 1.0 if t < 2 * h else -1.0
    pts = [f(t + sgn * k * h) for k in range(5)]
    return sgn * (-25 * pts[0] + 48 * pts[1] - 36 * pts[2] + 16 * pts[3] - 3 * pts[4]) / (12 * h)


def analytic_projection_family(proj: Callable[[float], tuple[np.ndarray, np.ndarray]], grid: Sequence[float] | int = 257) -> ProjectionFamily:
    """Wrap a closed-form ``t -> (P, P')``; ``P''`` by a stencil on ``P'``."""
    grid = np.linspace(0.0, 1.0, grid) if isinstance(grid, int) else np.asarray(grid, dtype=float)
    pairs = [proj(t) for t in grid]
    P = np.stack([np.asarray(p, dtype=complex) for p, _ in pairs])
    dP = np.stack([np.asarray(d, dtype=complex) for _, d in pairs])
    d2P = np.stack([_stencil_derivative(lambda x: np.asarray(proj(x)[1], dtype=complex), t) for t in grid])
    return ProjectionFamily(grid, P, dP, d2P, "analytic", (), proj)


def constant_projection_family(P, grid: Sequence[float] | int = 2) -> ProjectionFamily:
    P = as_operator(P, name="P")
    Z = np.zeros_like(P)
    return analytic_projection_family(lambda t: (P, Z), grid)


def supplied_projection_family(grid: Sequence[float], P: np.ndarray, dP: np.ndarray, d2P: Optional[np.ndarray] = None) -> ProjectionFamily:
    grid = np.asarray(grid, dtype=float)
    P = np.asarray(P, dtype=complex)
    dP = np.asarray(dP, dtype=complex)
    d2P = _fd_second(grid, dP) if d2P is None else np.asarray(d2P, dtype=complex)
    return ProjectionFamily(grid, P, dP, d2P, "supplied")


def contour_for_split(inside: np.ndarray, outside: np.ndarray, nodes: int = DEFAULT_NODES, radius_cap: float = RADIUS_CLIP[1]) -> Contour:
    """Circle around ``inside`` centered at its barycenter.

    The radius is the midpoint between the cluster's own spread and the
    nearest outside eigenvalue, clipped to ``[1e-3, radius_cap]``.
    """
    if len(inside) == 0:
        raise ContourError("window selects no eigenvalue")
    center = complex(np.mean(inside))
    spread = float(np.max(np.abs(inside - center)))
    reach = float(np.min(np.abs(outside - center))) if len(outside) else math.inf
    if reach <= spread:
        raise ContourError("cluster cannot be separated by one circle", spread=spread, reach=reach)
    r = 0.5 * (spread + reach) if math.isfinite(reach) else spread + 1.0
    r = min(max(r, RADIUS_CLIP[0]), radius_cap)
    if not (spread < r < reach):
        raise ContourError("radius clipping breaks the separation", spread=spread, reach=reach, radius=r)
    return Contour.circle(center, r, nodes)


def _raise_collapse(fam, window, grid, threshold, t):
    prof = gap_profile(fam, window, grid, threshold=threshold)
    raise NonUniformGapError("spectral gap collapses on the grid", crossings=prof.crossings or [float(t)], min_gap=float(prof.min_gap))


def track_projections(
    fam: OperatorFamily,
    window: SpectralWindow,
    grid: Sequence[float] | int = 257,
    *,
    nodes: int = DEFAULT_NODES,
    radius_cap: float = RADIUS_CLIP[1],
    threshold: float = 1e-6,
) -> ProjectionFamily:
    """Riesz projections onto the window's cluster along ``grid``.

    A circle is placed around the cluster at every grid point (see
    :func:`contour_for_split`).  ``P'`` and ``P''`` come from the contour
    formulas (with finite differences of ``A`` when the family has no
    analytic derivatives).  A gap below ``threshold`` anywhere raises
    :class:`NonUniformGapError` with the crossing estimates.
    """
    grid = np.linspace(0.0, 1.0, grid) if isinstance(grid, int) else np.asarray(grid, dtype=float)
    Ps, dPs, d2Ps, contours = [], [], [], []
    prev = None
    for t in grid:
        sp = split_spectrum(fam(t), window, t, prev)
        if sp.gap < threshold:
            _raise_collapse(fam, window, grid, threshold, t)
        prev = sp.inside
        try:
            C = contour_for_split(sp.inside, sp.outside, nodes, radius_cap)
        except ContourError:
            # a gap just above threshold can still defeat the circle; report
            # it as a collapse when the refined profile finds one
            if not gap_profile(fam, window, grid, threshold=threshold).uniform:
                _raise_collapse(fam, window, grid, threshold, t)
            raise
        P, dP, d2P = projection_jet(fam, C, t, 2)
        Ps.append(P)
        dPs.append(dP)
        d2Ps.append(d2P)
        contours.append(C)
    P = np.stack(Ps)
    ranks = np.rint(np.einsum("kii->k", P).real).astype(int)
    if np.any(ranks != ranks[0]):
        bad = int(np.argmax(ranks != ranks[0]))
        raise ContourError("projection rank changes along the grid", t=float(grid[bad]), ranks=sorted(set(ranks.tolist())))
    return ProjectionFamily(grid, P, np.stack(dPs), np.stack(d2Ps), "riesz", tuple(contours))


def track_piecewise(
    fam: OperatorFamily,
    window: SpectralWindow,
    crossings: Sequence[float],
    *,
    margin: float = 0.02,
    points: int = 129,
    nodes: int = DEFAULT_NODES,
) -> list[ProjectionFamily]:
    """Track on the closed subintervals that keep ``margin`` away from ``crossings``."""
    cuts = sorted(float(c) for c in crossings)
    edges = [0.0] + cuts + [1.0]
    pieces = []
    for a, b in zip(edges[:-1], edges[1:]):
        lo = a + (margin if a in cuts else 0.0)
        hi = b - (margin if b in cuts else 0.0)
        if hi - lo <= 0:
            continue
        pieces.append(track_projections(fam, window, np.linspace(lo, hi, points), nodes=nodes))
    return pieces
