"""Time-dependent operator families on ``[0, 1]``.

A family bundles an evaluator ``t -> A(t)`` with optional analytic first
and second derivatives.  When a derivative is missing it is replaced by
fourth-order finite differences (one-sided near the endpoints so that
the evaluator is never called outside ``[0, 1]``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import InvalidInputError
from .expr import ScalarExpr
from .linop import as_operator, numerical_abscissa

Evaluator = Callable[[float], np.ndarray]

_T_SLACK = 1e-12
_EPS = np.finfo(float).eps


def _check_t(t: float) -> float:
    t = float(t)
    if not (-_T_SLACK <= t <= 1.0 + _T_SLACK):
        raise InvalidInputError(f"t={t} outside [0, 1]")
    return min(max(t, 0.0), 1.0)


@dataclass(frozen=True)
class OperatorFamily:
    """``t -> A(t)`` on a ``dim``-dimensional complex space."""

    dim: int
    evaluator: Evaluator
    first: Optional[Evaluator] = None
    second: Optional[Evaluator] = None
    label: str = ""

    def __post_init__(self) -> None:
        if int(self.dim) < 1:
            raise InvalidInputError("dim must be positive")

    @property
    def derivative_mode(self) -> str:
        return "analytic" if self.first is not None else "finite-difference"

    def __call__(self, t: float) -> np.ndarray:
        A = np.asarray(self.evaluator(_check_t(t)), dtype=np.complex128)
        if A.shape != (self.dim, self.dim):
            raise InvalidInputError(f"evaluator returned shape {A.shape}, expected {(self.dim, self.dim)}")
        return A

    def d1(self, t: float) -> np.ndarray:
        return derivative(self, t)

    def d2(self, t: float) -> np.ndarray:
        return second_derivative(self, t)

    def with_label(self, label: str) -> "OperatorFamily":
        return OperatorFamily(self.dim, self.evaluator, self.first, self.second, label)


def _fd_step(fam: OperatorFamily, t: float, power: float) -> float:
    scale = max(1.0, float(np.linalg.norm(fam(t), 2)))
    return min(_EPS ** power * scale, 1.0 / 8.0)


def _stencil_points(t: float, h: float, npts: int) -> tuple[np.ndarray, str]:
    half = npts // 2
    if t - half * h >= 0.0 and t + half * h <= 1.0:
        return t + h * np.arange(-half, half + 1), "central"
    if t - half * h < 0.0:
        return t + h * np.arange(0, npts), "forward"
    return t - h * np.arange(0, npts), "backward"


def derivative(fam: OperatorFamily, t: float) -> np.ndarray:
    """``A'(t)``: analytic if supplied, else 4th-order differences.

    Step ``h = eps**(1/5) * max(1, ||A(t)||)``.
    """
    t = _check_t(t)
    if fam.first is not None:
        return np.asarray(fam.first(t), dtype=np.complex128)
    h = _fd_step(fam, t, 1 / 5)
    pts, kind = _stencil_points(t, h, 5)
    F = [fam(p) for p in pts]
    if kind == "central":
        return (F[0] - 8 * F[1] + 8 * F[3] - F[4]) / (12 * h)
    sign = 1.0 if kind == "forward" else -1.0
    return sign * (-25 * F[0] + 48 * F[1] - 36 * F[2] + 16 * F[3] - 3 * F[4]) / (12 * h)


def second_derivative(fam: OperatorFamily, t: float) -> np.ndarray:
    """``A''(t)``: analytic if supplied, else 4th-order differences."""
    t = _check_t(t)
    if fam.second is not None:
        return np.asarray(fam.second(t), dtype=np.complex128)
    if fam.first is not None:
        # differentiate the analytic first derivative
        return derivative(OperatorFamily(fam.dim, fam.first), t)
    h = _fd_step(fam, t, 1 / 6)
    half = 2
    if t - half * h >= 0.0 and t + half * h <= 1.0:
        F = [fam(t + k * h) for k in range(-2, 3)]
        return (-F[0] + 16 * F[1] - 30 * F[2] + 16 * F[3] - F[4]) / (12 * h * h)
    sign = 1.0 if t - half * h < 0.0 else -1.0
    F = [fam(t + sign * k * h) for k in range(6)]
    c = (45, -154, 214, -156, 61, -10)
    return sum(ck * Fk for ck, Fk in zip(c, F)) / (12 * h * h)


@dataclass(frozen=True)
class RotationFamily:
    """Unitary ``R(t)`` with optional analytic derivatives."""

    dim: int
    evaluator: Evaluator
    first: Optional[Evaluator] = None
    second: Optional[Evaluator] = None
    label: str = ""

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.evaluator(_check_t(t)), dtype=np.complex128)

    def unitarity_defect(self, samples: Sequence[float] = tuple(np.linspace(0, 1, 9))) -> float:
        I = np.eye(self.dim)
        return max(float(np.linalg.norm(self(s).conj().T @ self(s) - I, 2)) for s in samples)


def constant_family(A, label: str = "constant") -> OperatorFamily:
    M = as_operator(A)
    Z = np.zeros_like(M)
    return OperatorFamily(M.shape[0], lambda t: M, lambda t: Z, lambda t: Z, label)


def linear_family(A0, A1, label: str = "linear") -> OperatorFamily:
    """``A(t) = A0 + t * A1``."""
    M0, M1 = as_operator(A0), as_operator(A1)
    Z = np.zeros_like(M0)
    return OperatorFamily(M0.shape[0], lambda t: M0 + t * M1, lambda t: M1, lambda t: Z, label)


def plane_rotation(dim: int, i: int, j: int, angle: Callable[[float], float], rate: float) -> RotationFamily:
    """Rotation acting on the ``(e_i, e_j)`` plane by ``angle(t) = rate * t``.

    Entries follow ``R[i,i]=R[j,j]=cos``, ``R[i,j]=sin``, ``R[j,i]=-sin``.
    """

    def block(t: float, order: int) -> np.ndarray:
        th = angle(t)
        if order == 0:
            R = np.eye(dim, dtype=np.complex128)
            R[i, i] = R[j, j] = math.cos(th)
            R[i, j], R[j, i] = math.sin(th), -math.sin(th)
            return R
        # d/dt of (cos, sin) is rate*(-sin, cos); second order picks up -rate**2
        R = np.zeros((dim, dim), dtype=np.complex128)
        c, s = math.cos(th), math.sin(th)
        if order == 1:
            R[i, i] = R[j, j] = -rate * s
            R[i, j], R[j, i] = rate * c, -rate * c
        else:
            R[i, i] = R[j, j] = -rate * rate * c
            R[i, j], R[j, i] = -rate * rate * s, rate * rate * s
        return R

    return RotationFamily(
        dim,
        lambda t: block(t, 0),
        lambda t: block(t, 1),
        lambda t: block(t, 2),
        label=f"rotation({i},{j})",
    )


def conjugate_family(base: OperatorFamily, rotation: RotationFamily, *, unitarity_tol: float = 1e-12) -> OperatorFamily:
    """``t -> R(t)* A_0(t) R(t)`` with product-rule derivatives when available."""
    if base.dim != rotation.dim:
        raise InvalidInputError("dimension mismatch", base=base.dim, rotation=rotation.dim)
    defect = rotation.unitarity_defect()
    if defect > unitarity_tol:
        raise InvalidInputError("rotation is not unitary", defect=defect)

    def value(t: float) -> np.ndarray:
        R = rotation(t)
        return R.conj().T @ base(t) @ R

    first = second = None
    if base.first is not None and rotation.first is not None:

        def first(t: float) -> np.ndarray:
            R, dR = rotation(t), rotation.first(t)
            A0, dA0 = base(t), base.first(t)
            Rh = R.conj().T
            return dR.conj().T @ A0 @ R + Rh @ dA0 @ R + Rh @ A0 @ dR

        if base.second is not None and rotation.second is not None:

            def second(t: float) -> np.ndarray:
                R, dR, d2R = rotation(t), rotation.first(t), rotation.second(t)
                A0, dA0, d2A0 = base(t), base.first(t), base.second(t)
                Rh, dRh, d2Rh = R.conj().T, dR.conj().T, d2R.conj().T
                return (
                    d2Rh @ A0 @ R + Rh @ d2A0 @ R + Rh @ A0 @ d2R
                    + 2 * (dRh @ dA0 @ R + dRh @ A0 @ dR + Rh @ dA0 @ dR)
                )

    label = f"{rotation.label}*[{base.label}]" if base.label else rotation.label
    return OperatorFamily(base.dim, value, first, second, label)


def upper_shift(d: int) -> np.ndarray:
    """``d x d`` matrix with ones on the first superdiagonal."""
    return np.eye(d, k=1)


def lambda_d(d: int | float) -> float:
    """Largest ``lam`` with ``lam*I + N_d`` dissipative.

    Computed as ``-lambda_max((N_d + N_d^*)/2)``.  ``d = inf`` returns -1.
    """
    if isinstance(d, float) and math.isinf(d) and d > 0:
        return -1.0
    if int(d) != d or int(d) < 1:
        raise InvalidInputError("d must be a positive integer or inf")
    d = int(d)
    if d == 1:
        return 0.0
    N = upper_shift(d)
    return -float(np.linalg.eigvalsh(0.5 * (N + N.T))[-1])


def shift_block(lam: float, d: int) -> np.ndarray:
    """``A_d(lam) = lam*I + N_d``."""
    return lam * np.eye(d) + upper_shift(d)


def numerical_range_bound(fam: OperatorFamily, grid: Sequence[float] | None = None) -> float:
    """``max_t lambda_max((A(t) + A(t)^*)/2)`` over the sampled grid."""
    if grid is None:
        grid = np.linspace(0.0, 1.0, 65)
    return max(numerical_abscissa(fam(t)) for t in grid)


def add_families(*fams: OperatorFamily, label: str = "") -> OperatorFamily:
    dim = fams[0].dim
    if any(f.dim != dim for f in fams):
        raise InvalidInputError("dimension mismatch in sum")
    first = None
    if all(f.first is not None for f in fams):
        first = lambda t: sum(f.first(t) for f in fams)  # noqa: E731
    return OperatorFamily(dim, lambda t: sum(f(t) for f in fams), first, None, label)


def scaled_family(fam: OperatorFamily, factor: complex, label: str = "") -> OperatorFamily:
    first = (lambda t: factor * fam.first(t)) if fam.first is not None else None
    second = (lambda t: factor * fam.second(t)) if fam.second is not None else None
    return OperatorFamily(fam.dim, lambda t: factor * fam(t), first, second, label or fam.label)


def expression_family(entries: Sequence[Sequence[str | float]], label: str = "inline") -> OperatorFamily:
    """Family from a square table of scalar expressions in ``t``."""
    rows = [[ScalarExpr(e) for e in row] for row in entries]
    d = len(rows)
    if d == 0 or any(len(r) != d for r in rows):
        raise InvalidInputError("entries must form a nonempty square table")

    def value(t: float) -> np.ndarray:
        return np.array([[e(t) for e in row] for row in rows], dtype=np.complex128)

    def first(t: float) -> np.ndarray:
        return np.array([[e.derivative(t) for e in row] for row in rows], dtype=np.complex128)

    return OperatorFamily(d, value, first, None, label)


@dataclass(frozen=True)
class ScalarFamily:
    """Scalar curve ``t -> lam(t)`` (eigenvalue guide for no-gap results)."""

    evaluator: Callable[[float], complex]
    first: Optional[Callable[[float], complex]] = None
    label: str = field(default="")

    def __call__(self, t: float) -> complex:
        return complex(self.evaluator(_check_t(t)))
