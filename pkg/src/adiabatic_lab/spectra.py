"""Spectral windows, gap profiles, Hausdorff distance and stability probes."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.linalg as sla
from scipy.optimize import minimize_scalar

from ._kernels import cross_min_distance, directed_sup_distance
from .errors import InvalidInputError
from .family import OperatorFamily
from .linop import eig, numerical_abscissa

UNIFORM_THRESHOLD = 1e-6
CROSSING_TOL = 1e-10


@dataclass(frozen=True)
class SpectralWindow:
    """Rule deciding which eigenvalues of ``A(t)`` belong to the tracked part.

    ``kind`` is one of ``disk`` (center, radius), ``halfplane`` (points
    with ``Re(z * exp(-i angle)) > offset``), ``targets`` (within
    ``radius`` of any listed value) or ``guide`` (the ``count``
    eigenvalues nearest a curve ``guide(t)``).
    """

    kind: str
    center: complex = 0.0
    radius: float = 0.0
    angle: float = 0.0
    offset: float = 0.0
    targets: tuple = ()
    guide_curve: Optional[Callable[[float], complex]] = field(default=None, compare=False)
    count: int = 0

    @classmethod
    def disk(cls, center: complex, radius: float) -> "SpectralWindow":
        if not radius > 0:
            raise InvalidInputError("disk radius must be positive")
        return cls("disk", center=complex(center), radius=float(radius))

    @classmethod
    def halfplane(cls, offset: float, angle: float = 0.0) -> "SpectralWindow":
        return cls("halfplane", offset=float(offset), angle=float(angle))

    @classmethod
    def target_list(cls, targets: Sequence[complex], radius: float) -> "SpectralWindow":
        if not targets or not radius > 0:
            raise InvalidInputError("targets must be nonempty and radius positive")
        return cls("targets", targets=tuple(complex(z) for z in targets), radius=float(radius))

    @classmethod
    def guide(cls, curve: Callable[[float], complex], count: int = 1) -> "SpectralWindow":
        if int(count) < 1:
            raise InvalidInputError("guide count must be positive")
        return cls("guide", guide_curve=curve, count=int(count))

    def contains(self, z: complex, t: float = 0.0) -> bool:
        """Pointwise selector (for ``guide`` windows use :meth:`split`)."""
        z = complex(z)
        if self.kind == "disk":
            return abs(z - self.center) < self.radius
        if self.kind == "halfplane":
            return (z * complex(math.cos(self.angle), -math.sin(self.angle))).real > self.offset
        if self.kind == "targets":
            return any(abs(z - c) < self.radius for c in self.targets)
        if self.kind == "guide":
            raise InvalidInputError("guide windows select by rank; use split()")
        raise InvalidInputError(f"unknown window kind {self.kind!r}")

    def split(self, values: np.ndarray, t: float, previous: Optional[np.ndarray] = None) -> np.ndarray:
        """Boolean mask of the selected eigenvalues among ``values``."""
        values = np.asarray(values, dtype=complex)
        if self.kind != "guide":
            return np.array([self.contains(z, t) for z in values], dtype=bool)
        g = complex(self.guide_curve(t))
        dist = np.round(np.abs(values - g), 12)
        if previous is not None and len(previous):
            cont = np.array([np.min(np.abs(np.asarray(previous) - z)) for z in values])
        else:
            cont = np.zeros(len(values))
        order = np.lexsort((cont, dist))
        mask = np.zeros(len(values), dtype=bool)
        mask[order[: min(self.count, len(values))]] = True
        return mask

    def describe(self) -> dict:
        if self.kind == "disk":
            return {"kind": "disk", "center": [self.center.real, self.center.imag], "radius": self.radius}
        if self.kind == "halfplane":
            return {"kind": "halfplane", "offset": self.offset, "angle": self.angle}
        if self.kind == "targets":
            return {"kind": "targets", "targets": [[z.real, z.imag] for z in self.targets], "radius": self.radius}
        return {"kind": "guide", "count": self.count}


@dataclass(frozen=True)
class SpectrumSplit:
    t: float
    inside: np.ndarray
    outside: np.ndarray
    gap: float


def split_spectrum(A: np.ndarray, window: SpectralWindow, t: float, previous=None) -> SpectrumSplit:
    values = eig(A).values
    mask = window.split(values, t, previous)
    inside, outside = values[mask], values[~mask]
    return SpectrumSplit(float(t), inside, outside, cross_min_distance(inside, outside))


@dataclass(frozen=True)
class GapProfile:
    grid: np.ndarray
    inside: list
    outside: list
    gaps: np.ndarray
    min_gap: float
    threshold: float
    crossings: list
    accumulating: bool

    @property
    def uniform(self) -> bool:
        return self.min_gap >= self.threshold

    @property
    def counts(self) -> tuple[np.ndarray, np.ndarray]:
        return np.array([len(x) for x in self.inside]), np.array([len(x) for x in self.outside])

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "gap", "n_in", "n_out"])
        for t, g, a, b in zip(self.grid, self.gaps, self.inside, self.outside):
            w.writerow([repr(float(t)), "inf" if math.isinf(g) else repr(float(g)), len(a), len(b)])
        return buf.getvalue()


def _gap_at(fam: OperatorFamily, window: SpectralWindow, t: float, previous=None) -> float:
    return split_spectrum(fam(t), window, t, previous).gap


def gap_profile(
    fam: OperatorFamily,
    window: SpectralWindow,
    grid: Sequence[float] | int = 257,
    *,
    threshold: float = UNIFORM_THRESHOLD,
) -> GapProfile:
    """Per-``t`` split of the spectrum and the distance between the parts.

    Crossing times are local minima of the sampled gap refined by a
    bounded scalar minimization to ``1e-10`` in ``t``; a refined minimum
    below ``threshold`` counts as a crossing.  When two consecutive
    local minima are at most two grid steps apart the crossings are
    flagged as accumulating (unresolved at this grid spacing).
    """
    grid = np.linspace(0.0, 1.0, grid) if isinstance(grid, int) else np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly increasing with at least two points")
    inside, outside, gaps = [], [], []
    prev = None
    for t in grid:
        sp = split_spectrum(fam(t), window, t, prev)
        inside.append(sp.inside)
        outside.append(sp.outside)
        gaps.append(sp.gap)
        prev = sp.inside
    gaps = np.array(gaps)
    finite = np.where(np.isinf(gaps), np.nan, gaps)

    minima = []
    n = len(grid)
    for i in range(n):
        if not np.isfinite(finite[i]):
            continue
        left = finite[i - 1] if i > 0 else np.inf
        right = finite[i + 1] if i < n - 1 else np.inf
        left = np.inf if np.isnan(left) else left
        right = np.inf if np.isnan(right) else right
        if finite[i] <= left and finite[i] <= right and (finite[i] < left or finite[i] < right):
            minima.append(i)

    crossings, refined_min = [], float(np.nanmin(finite)) if np.any(np.isfinite(finite)) else math.inf
    for i in minima:
        lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, n - 1)]
        if finite[i] == 0.0:
            tc, gc = float(grid[i]), 0.0
        else:
            res = minimize_scalar(
                lambda x: _gap_at(fam, window, x), bounds=(lo, hi), method="bounded",
                options={"xatol": CROSSING_TOL, "maxiter": 200},
            )
            tc, gc = float(res.x), float(res.fun)
            if gc > finite[i]:
                tc, gc = float(grid[i]), float(finite[i])
        refined_min = min(refined_min, gc)
        if gc < threshold:
            crossings.append(tc)
    crossings = sorted(set(round(c, 10) for c in crossings))
    step = float(np.max(np.diff(grid)))
    close = [b - a for a, b in zip(minima, minima[1:]) if grid[b] - grid[a] <= 2 * step + 1e-15]
    accumulating = len(close) > 0 and len(crossings) > 1
    return GapProfile(grid, inside, outside, gaps, float(refined_min), float(threshold), crossings, accumulating)


def hausdorff(E: Sequence[complex], F: Sequence[complex]) -> float:
    """Hausdorff distance between two nonempty finite subsets of C."""
    E = np.asarray(E, dtype=complex).ravel()
    F = np.asarray(F, dtype=complex).ravel()
    if E.size == 0 or F.size == 0:
        raise InvalidInputError("hausdorff distance needs nonempty sets")
    return max(directed_sup_distance(E, F), directed_sup_distance(F, E))


@dataclass(frozen=True)
class StabilityReport:
    omega_prime: float
    M_hat: float
    omega_hat: float
    samples: int
    seed: int
    worst_norm: float

    def to_dict(self) -> dict:
        return {
            "omega_prime": self.omega_prime, "M_hat": self.M_hat, "omega_hat": self.omega_hat,
            "samples": self.samples, "seed": self.seed, "worst_norm": self.worst_norm,
        }


def stability_probe(
    fam: OperatorFamily,
    samples: int = 64,
    seed: int = 0,
    *,
    max_length: int = 16,
    grid: int = 257,
) -> StabilityReport:
    """Random time-ordered products of frozen semigroups.

    ``omega_prime`` is the largest numerical abscissa over the grid and
    the sampled times.  ``M_hat`` is the largest ratio
    ``||prod|| / exp(omega_prime * sum s_i)`` and ``omega_hat`` the
    largest observed growth rate ``log||prod|| / sum s_i``.
    """
    if int(samples) < 1:
        raise InvalidInputError("samples must be positive")
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(int(samples)):
        n = int(rng.integers(1, max_length + 1))
        ts = np.sort(rng.uniform(0.0, 1.0, n))
        ss = rng.uniform(0.0, 1.0, n)
        ss = np.where(ss == 0.0, 1.0, ss)  # s_i in (0, 1]
        draws.append((ts, ss))
    pts = set(np.linspace(0.0, 1.0, grid).tolist())
    for ts, _ in draws:
        pts.update(ts.tolist())
    omega = max(numerical_abscissa(fam(t)) for t in sorted(pts))
    M_hat, omega_hat, worst = 0.0, -math.inf, 0.0
    for ts, ss in draws:
        U = np.eye(fam.dim, dtype=complex)
        for t, s in zip(ts, ss):
            U = sla.expm(fam(t) * s) @ U
        nrm = float(np.linalg.norm(U, 2))
        total = float(ss.sum())
        worst = max(worst, nrm)
        M_hat = max(M_hat, nrm / math.exp(omega * total))
        omega_hat = max(omega_hat, math.log(nrm) / total if nrm > 0 else -math.inf)
    return StabilityReport(float(omega), float(M_hat), float(omega_hat), int(samples), int(seed), float(worst))
