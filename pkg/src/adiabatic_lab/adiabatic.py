"""Adiabatic comparison dynamics, defect metrics and rate fits.

The defect metrics, each a supremum over ``t`` in ``[0, 1]``:

``proj``       ``||(1 - P(t)) U_T(t) P(0)||``
``reverse``    ``||P(t) U_T(t) (1 - P(0))||``
``evolution``  ``||U_{a,T}(t) - U_T(t)||``
``nogap``      ``||V_T(t) P(0) - U_T(t) P(0)||``

``U_{a,T}`` is generated by ``T A + [P', P]`` and ``V_T`` by
``T lam I + [P', P]``.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InsufficientDataError, InvalidInputError, InvalidRayError, NearSpectrumError, NumericalError
from .evolution import DEFAULT_TOL, integrate
from .family import OperatorFamily, ScalarFamily
from .linop import resolvent_solve
from .riesz import ProjectionFamily

METRICS = ("proj", "reverse", "evolution", "nogap")
DEFAULT_T_GRID = tuple(2.0 ** k for k in range(4, 11))
TIME_GRID = 65
REFINE_ITERS = 20


# ------------------------------------------------------------------ tables


@dataclass
class DefectRow:
    param: float
    value: float
    t_argmax: float = math.nan
    status: str = "ok"
    error: Optional[dict] = None


@dataclass
class DefectTable:
    metric: str
    rows: list
    timegrid: np.ndarray
    param_name: str = "T"
    extra: dict = field(default_factory=dict)

    @property
    def params(self) -> np.ndarray:
        return np.array([r.param for r in self.rows], dtype=float)

    @property
    def values(self) -> np.ndarray:
        return np.array([r.value for r in self.rows], dtype=float)

    def to_csv(self, header: bool = True) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        if header:
            w.writerow(["metric", self.param_name, "value", "t_argmax", "status"])
        for r in self.rows:
            w.writerow([self.metric, repr(float(r.param)), repr(float(r.value)), repr(float(r.t_argmax)), r.status])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "metric": self.metric,
            "param": self.param_name,
            "rows": [
                {"param": r.param, "value": r.value, "t_argmax": r.t_argmax, "status": r.status, "error": r.error}
                for r in self.rows
            ],
        }


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    residual_rms: float
    param_range: tuple
    n: int
    excluded: tuple = ()

    def to_dict(self) -> dict:
        return {
            "slope": self.slope, "intercept": self.intercept, "residual_rms": self.residual_rms,
            "range": list(self.param_range), "n": self.n, "excluded": list(self.excluded),
        }


def rate_fit(table: DefectTable | Sequence[tuple[float, float]]) -> RateFit:
    """Least-squares line through ``(log param, log value)``.

    Nonpositive or non-finite values are dropped with a warning; fewer
    than four usable rows raise :class:`InsufficientDataError`.
    """
    if isinstance(table, DefectTable):
        pairs = [(r.param, r.value) for r in table.rows]
    else:
        pairs = [(float(a), float(b)) for a, b in table]
    good = [(p, v) for p, v in pairs if p > 0 and np.isfinite(v) and v > 0]
    bad = tuple(p for p, v in pairs if not (p > 0 and np.isfinite(v) and v > 0))
    if bad:
        warnings.warn(f"rate_fit: excluded {len(bad)} nonpositive or failed rows", RuntimeWarning, stacklevel=2)
    if len(good) < 4:
        raise InsufficientDataError("rate fit needs at least 4 positive rows", usable=len(good))
    x = np.log([p for p, _ in good])
    y = np.log([v for _, v in good])
    slope, intercept = np.polyfit(x, y, 1)
    rms = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return RateFit(float(slope), float(intercept), rms, (min(p for p, _ in good), max(p for p, _ in good)), len(good), bad)


# ------------------------------------------------------------- generators


def _commutator_term(projfam: ProjectionFamily, t: float) -> np.ndarray:
    P, dP = projfam.at(t)
    return dP @ P - P @ dP


def adiabatic_generator(fam: OperatorFamily, projfam: ProjectionFamily, T: float) -> OperatorFamily:
    """``t -> T A(t) + [P'(t), P(t)]`` (propagate it with scale 1)."""
    if projfam.dim != fam.dim:
        raise InvalidInputError("projection family and operator family differ in dimension")
    if projfam.evaluator is None and (projfam.grid[0] > 1e-12 or projfam.grid[-1] < 1 - 1e-12):
        raise InvalidInputError("projection grid must cover [0, 1]")
    T = float(T)
    return OperatorFamily(fam.dim, lambda t: T * fam(t) + _commutator_term(projfam, t), label=f"adiabatic[{fam.label}, T={T:g}]")


def nogap_comparison_generator(lam: ScalarFamily, projfam: ProjectionFamily, T: float) -> OperatorFamily:
    """``t -> T lam(t) I + [P'(t), P(t)]``."""
    d = projfam.dim
    I = np.eye(d, dtype=complex)
    T = float(T)
    return OperatorFamily(d, lambda t: T * lam(t) * I + _commutator_term(projfam, t), label=f"comparison[T={T:g}]")


def intertwining_defect(gen: OperatorFamily, projfam: ProjectionFamily, pairs: Sequence[tuple[float, float]], tol: float = DEFAULT_TOL) -> float:
    """``max ||P(t) W(t, s) - W(t, s) P(s)||`` for the evolution ``W`` of ``gen``."""
    worst = 0.0
    by_s: dict[float, list[float]] = {}
    for s, t in pairs:
        by_s.setdefault(float(s), []).append(float(t))
    for s, ts in sorted(by_s.items()):
        ts = sorted(ts)
        Ws = integrate(gen, 1.0, s, ts, np.eye(gen.dim, dtype=complex), atol=tol, rtol=tol)
        Ps = projfam.at(s)[0]
        for t, W in zip(ts, Ws):
            Pt = projfam.at(t)[0]
            worst = max(worst, float(np.linalg.norm(Pt @ W - W @ Ps, 2)))
    return worst


# ----------------------------------------------------------------- sweeps


def _time_grid(timegrid) -> np.ndarray:
    g = np.linspace(0.0, 1.0, timegrid) if isinstance(timegrid, int) else np.asarray(timegrid, dtype=float)
    if g[0] != 0.0 or np.any(np.diff(g) <= 0):
        raise InvalidInputError("time grid must start at 0 and increase")
    return g


def _evolutions_for(metric: str) -> tuple[str, ...]:
    return {"proj": ("U",), "reverse": ("U",), "evolution": ("U", "Ua"), "nogap": ("U", "V")}[metric]


def _metric_value(metric: str, mats: dict, P: np.ndarray, P0: np.ndarray) -> float:
    d = P.shape[0]
    I = np.eye(d)
    U = mats["U"]
    if metric == "proj":
        M = (I - P) @ U @ P0
    elif metric == "reverse":
        M = P @ U @ (I - P0)
    elif metric == "evolution":
        M = mats["Ua"] - U
    else:
        M = (mats["V"] - U) @ P0
    return float(np.linalg.norm(M, 2))


def _sweep_row(fam, projfam, T, grid, metrics, lam, tol, refine) -> dict:
    gens = {"U": (fam, T)}
    need = sorted({e for m in metrics for e in _evolutions_for(m)})
    if "Ua" in need:
        gens["Ua"] = (adiabatic_generator(fam, projfam, T), 1.0)
    if "V" in need:
        if lam is None:
            raise InvalidInputError("nogap metric needs an eigenvalue curve")
        gens["V"] = (nogap_comparison_generator(lam, projfam, T), 1.0)
    d = fam.dim
    I = np.eye(d, dtype=complex)
    traj = {k: integrate(g, scale, 0.0, grid, I, atol=tol, rtol=tol) for k, (g, scale) in gens.items() if k in need}
    P0 = projfam.at(0.0)[0]
    Ps = [projfam.at(t)[0] for t in grid]
    out = {}
    for m in metrics:
        vals = np.array([_metric_value(m, {k: traj[k][i] for k in traj}, Ps[i], P0) for i in range(len(grid))])
        i = int(np.argmax(vals))
        best_t, best = float(grid[i]), float(vals[i])
        if refine and len(grid) > 2:
            lo_i = max(i - 1, 0)
            lo, hi = float(grid[lo_i]), float(grid[min(i + 1, len(grid) - 1)])
            start = {k: traj[k][lo_i] for k in traj}

            def f(t: float) -> float:
                mats = {}
                for k, (g, scale) in gens.items():
                    if k in traj:
                        mats[k] = integrate(g, scale, lo, [t], start[k], atol=tol, rtol=tol)[0]
                return -_metric_value(m, mats, projfam.at(t)[0], P0)

            res = minimize_scalar(f, bounds=(lo, hi), method="bounded", options={"maxiter": REFINE_ITERS, "xatol": 1e-7})
            if -res.fun > best:
                best_t, best = float(res.x), float(-res.fun)
        out[m] = (best, best_t)
    return out


def defect_sweep(
    fam: OperatorFamily,
    projfam: ProjectionFamily,
    Tgrid: Sequence[float] = DEFAULT_T_GRID,
    timegrid: Sequence[float] | int = TIME_GRID,
    metrics: Sequence[str] = ("proj",),
    *,
    lam: Optional[ScalarFamily] = None,
    tol: float = DEFAULT_TOL,
    refine: bool = True,
    jobs: int = 1,
) -> list[DefectTable]:
    """Tabulate the requested defect metrics for every ``T``.

    The supremum over ``t`` is the maximum over ``timegrid`` followed by
    a bounded scalar search between the neighbours of the grid argmax.
    A failed row is recorded with ``status='failed'`` and ``nan``.
    """
    for m in metrics:
        if m not in METRICS:
            raise InvalidInputError(f"unknown metric {m!r}", known=list(METRICS))
    Ts = [float(T) for T in Tgrid]
    if any(b <= a for a, b in zip(Ts, Ts[1:])) or any(T <= 0 for T in Ts):
        raise InvalidInputError("T grid must be positive and strictly increasing")
    grid = _time_grid(timegrid)

    def job(T):
        try:
            return _sweep_row(fam, projfam, T, grid, metrics, lam, tol, refine), None
        except NumericalError as exc:
            return None, exc.to_dict()

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(job, Ts))
    else:
        results = [job(T) for T in Ts]
    tables = []
    for m in metrics:
        rows = []
        for T, (res, err) in zip(Ts, results):
            if res is None:
                rows.append(DefectRow(T, math.nan, math.nan, "failed", err))
            else:
                rows.append(DefectRow(T, res[m][0], res[m][1]))
        tables.append(DefectTable(m, rows, grid))
    return tables


def pointwise_defect(fam: OperatorFamily, projfam: ProjectionFamily, T: float, t: float, vector=None, *, tol: float = DEFAULT_TOL) -> float:
    """``||(1 - P(t)) U_T(t) P(0) v||`` (``v`` defaults to the whole of ``P(0)``)."""
    P0 = projfam.at(0.0)[0]
    start = P0 if vector is None else P0 @ np.asarray(vector, dtype=complex).reshape(fam.dim, -1)
    Y = integrate(fam, T, 0.0, [t], start, atol=tol, rtol=tol)[0]
    P = projfam.at(t)[0]
    return float(np.linalg.norm((np.eye(fam.dim) - P) @ Y, 2))


# -------------------------------------------------------------- no-gap ray


@dataclass(frozen=True)
class SpectralRay:
    theta0: float
    eps_grid: tuple
    lam: ScalarFamily

    def __post_init__(self) -> None:
        eps = tuple(float(e) for e in self.eps_grid)
        if not eps or any(e <= 0 for e in eps) or any(b >= a for a, b in zip(eps, eps[1:])):
            raise InvalidInputError("eps grid must be positive and strictly decreasing")
        object.__setattr__(self, "eps_grid", eps)


@dataclass(frozen=True)
class RayProfile:
    weighted: bool
    eps: np.ndarray
    values: np.ndarray
    t_argmax: np.ndarray
    mean_values: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "sup_value", "t_argmax", "mean_value"])
        for row in zip(self.eps, self.values, self.t_argmax, self.mean_values):
            w.writerow([repr(float(x)) for x in row])
        return buf.getvalue()


def resolvent_ray_profile(
    fam: OperatorFamily,
    ray: SpectralRay,
    projfam: Optional[ProjectionFamily] = None,
    *,
    weighted: bool = False,
    grid: Sequence[float] | int = 257,
) -> RayProfile:
    """``eps ||(lam(t) + eps e^{i theta0} - A(t))^{-1} W(t)||`` over ``t`` and ``eps``.

    ``W`` is the identity, or ``(1 - P) P' P`` when ``weighted``.  Both
    the grid supremum and the grid mean are reported.
    """
    grid = np.linspace(0.0, 1.0, grid) if isinstance(grid, int) else np.asarray(grid, dtype=float)
    if weighted and projfam is None:
        raise InvalidInputError("weighted profile needs a projection family")
    d = fam.dim
    I = np.eye(d, dtype=complex)
    direction = complex(math.cos(ray.theta0), math.sin(ray.theta0))
    weights = []
    for t in grid:
        if weighted:
            P, dP = projfam.at(t)
            weights.append((I - P) @ dP @ P)
        else:
            weights.append(I)
    sups, args, means = [], [], []
    for eps in ray.eps_grid:
        vals = []
        for t, W in zip(grid, weights):
            z = complex(ray.lam(t)) + eps * direction
            try:
                X = resolvent_solve(fam(t), z, W)
            except NearSpectrumError as exc:
                raise InvalidRayError("ray point lies on the spectrum", t=float(t), eps=eps, z=z) from exc
            vals.append(eps * float(np.linalg.norm(X, 2)))
        vals = np.array(vals)
        i = int(np.argmax(vals))
        sups.append(vals[i])
        args.append(grid[i])
        means.append(float(np.mean(vals)))
    return RayProfile(weighted, np.array(ray.eps_grid), np.array(sups), np.array(args), np.array(means))


def sector_constants(eps0: float, beta0: float) -> tuple[float, float]:
    """``(eps0', M0)`` for a sector of half-opening ``beta0`` free of spectrum.

    For normal ``A(t)`` the resolvent along the bisecting ray obeys
    ``||(lam + eps e^{i theta0} - A)^{-1}|| <= M0 / eps`` for
    ``eps <= eps0'``, with ``M0 = 1/sin(beta0)`` and
    ``eps0' = eps0 / (1 + sin(beta0))``.
    """
    if not (0 < beta0 < math.pi) or not eps0 > 0:
        raise InvalidInputError("need 0 < beta0 < pi and eps0 > 0")
    s = math.sin(beta0)
    return eps0 / (1 + s), 1.0 / s


# ------------------------------------------------------- extended criterion


def extended_criterion(
    fam: OperatorFamily,
    lam: ScalarFamily,
    projfam: ProjectionFamily,
    Tgrid: Sequence[float] = DEFAULT_T_GRID,
    timegrid: Sequence[float] | int = TIME_GRID,
    *,
    tol: float = DEFAULT_TOL,
    jobs: int = 1,
) -> DefectTable:
    """``sup_t ||(1 - P(t)) int_0^t U_T(t,s) T (lam(s) - A(s)) V_T(s) P(0) ds||``.

    The Duhamel integral ``J`` solves ``J' = T A J + T (lam - A) W`` with
    ``W = V_T P(0)``, so it is integrated together with ``W`` and two
    companions as one block system:

    ``X = U_T P(0)`` and ``K = int U_T(t,s) P'(s) W(s) ds``.

    Since ``(1 - P) (J + X + K) = 0`` in exact arithmetic, the table's
    ``extra`` entry records the bound ``proj + ||(1 - P) K||`` per row
    together with the residual of that identity.
    """
    grid = _time_grid(timegrid)
    d = fam.dim
    P0 = projfam.at(0.0)[0]
    I = np.eye(d)
    Z = np.zeros((d, d), dtype=complex)

    def run(T: float):
        def block(t: float) -> np.ndarray:
            A = fam(t)
            P, dP = projfam.at(t)
            l = complex(lam(t))
            G = np.zeros((4 * d, 4 * d), dtype=complex)
            # order: J, X, K, W
            G[:d, :d] = T * A
            G[:d, 3 * d:] = T * (l * I - A)
            G[d:2 * d, d:2 * d] = T * A
            G[2 * d:3 * d, 2 * d:3 * d] = T * A
            G[2 * d:3 * d, 3 * d:] = dP
            G[3 * d:, 3 * d:] = T * l * I + dP @ P - P @ dP
            return G

        gen = OperatorFamily(4 * d, block)
        start = np.vstack([Z, P0, Z, P0]).astype(complex)
        states = integrate(gen, 1.0, 0.0, grid, start, atol=tol, rtol=tol)
        best, arg, bound, resid = 0.0, 0.0, 0.0, 0.0
        for t, S in zip(grid, states):
            Q = I - projfam.at(t)[0]
            J, X, K = S[:d], S[d:2 * d], S[2 * d:3 * d]
            v = float(np.linalg.norm(Q @ J, 2))
            b = float(np.linalg.norm(Q @ X, 2) + np.linalg.norm(Q @ K, 2))
            r = float(np.linalg.norm(Q @ (J + X + K), 2))
            if v > best:
                best, arg = v, float(t)
            bound, resid = max(bound, b), max(resid, r)
        return best, arg, bound, resid

    def job(T):
        try:
            return run(float(T)), None
        except NumericalError as exc:
            return None, exc.to_dict()

    Ts = [float(T) for T in Tgrid]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(job, Ts))
    else:
        results = [job(T) for T in Ts]
    rows, bounds, resids = [], [], []
    for T, (res, err) in zip(Ts, results):
        if res is None:
            rows.append(DefectRow(T, math.nan, math.nan, "failed", err))
            bounds.append(math.nan)
            resids.append(math.nan)
        else:
            rows.append(DefectRow(T, res[0], res[1]))
            bounds.append(res[2])
            resids.append(res[3])
    return DefectTable("extended", rows, grid, extra={"bound": bounds, "identity_residual": resids})
