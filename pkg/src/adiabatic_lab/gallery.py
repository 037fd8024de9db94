"""Registry of worked example families.

Each entry builds an :class:`Example`: the family ``A(t)``, the intended
projection family ``P(t)`` in closed form (``R(t)^* P_0 R(t)``), a
spectral window for contour-based tracking and, for the examples without
a spectral gap, the eigenvalue curve ``lam(t)`` and ray angle.

Infinite matrices are truncated to ``d_trunc`` rows and columns.  A
truncated shift block has the single eigenvalue on its diagonal instead
of a disk, so windows are chosen to enclose that eigenvalue only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import InvalidInputError
from .family import (
    OperatorFamily,
    RotationFamily,
    ScalarFamily,
    conjugate_family,
    lambda_d,
    plane_rotation,
    upper_shift,
)
from .spectra import SpectralWindow

LAMBDA_2 = lambda_d(2)
TAGS = ("rate-1", "qualitative", "failure", "open", "higher-order")


@dataclass(frozen=True)
class Example:
    id: str
    title: str
    chapter: str
    tag: str
    family: OperatorFamily
    projection: Optional[Callable[[float], tuple[np.ndarray, np.ndarray]]] = None
    window: Optional[SpectralWindow] = None
    eigencurve: Optional[ScalarFamily] = None
    theta0: float = 0.0
    closed_form: Optional[Callable[[float, float], np.ndarray]] = None
    notes: str = ""
    params: dict = field(default_factory=dict)

    @property
    def dim(self) -> int:
        return self.family.dim


def _const(M: np.ndarray, label: str) -> OperatorFamily:
    M = np.asarray(M, dtype=np.complex128)
    Z = np.zeros_like(M)
    return OperatorFamily(M.shape[0], lambda t: M, lambda t: Z, lambda t: Z, label)


def _rotated_projection(P0: np.ndarray, R: RotationFamily):
    P0 = np.asarray(P0, dtype=np.complex128)

    def proj(t: float):
        Rt, dR = R(t), R.first(t)
        Rh = Rt.conj().T
        P = Rh @ P0 @ Rt
        dP = dR.conj().T @ P0 @ Rt + Rh @ P0 @ dR
        return P, dP

    return proj


def _coordinate_projection(dim: int, idx) -> np.ndarray:
    P = np.zeros((dim, dim), dtype=np.complex128)
    for i in idx:
        P[i, i] = 1.0
    return P


# ---------------------------------------------------------------- uniform gap


def ex_5_1() -> Example:
    lam = LAMBDA_2
    A0 = np.array([[0, 0, 0], [0, lam, 1], [0, 0, lam]], dtype=complex)
    R = plane_rotation(3, 0, 1, lambda t: t, 1.0)
    fam = conjugate_family(_const(A0, "A0"), R)
    return Example(
        "bsp-5.1", "finite-dimensional gap example, Jordan block complement", "uniform gap", "rate-1",
        fam.with_label("bsp-5.1"), _rotated_projection(_coordinate_projection(3, [0]), R),
        SpectralWindow.disk(0.0, 0.25),
        notes="P(t) projects onto R(t)^* e_1; eigenvalue 0 is separated from the Jordan block at lambda_2.",
    )


def ex_5_3() -> Example:
    A0 = np.diag([1j, -1j, -1.0])
    R = plane_rotation(3, 1, 2, lambda t: t, 1.0)
    fam = conjugate_family(_const(A0, "A0"), R)
    return Example(
        "bsp-5.3", "unitary pair plus decaying mode (shift block cut to size one)", "uniform gap", "rate-1",
        fam.with_label("bsp-5.3"), _rotated_projection(_coordinate_projection(3, [2]), R),
        SpectralWindow.disk(-1.0, 0.5),
        notes="Dimension-3 truncation of the example with eigenvalues +-i and a shifted upper-shift block.",
    )


def ex_5_4(d_trunc: int = 40) -> Example:
    if d_trunc < 3:
        raise InvalidInputError("d_trunc must be at least 3")
    m = d_trunc - 1
    blk = -np.eye(m, dtype=complex)
    for k in range(1, m):
        blk[k, k - 1] = 1.0 / math.factorial(k + 1)
    A0 = np.zeros((d_trunc, d_trunc), dtype=complex)
    A0[1:, 1:] = blk
    R = plane_rotation(d_trunc, 0, 1, lambda t: t, 1.0)
    fam = conjugate_family(_const(A0, "A0"), R)
    return Example(
        "bsp-5.4", "spectral value that is not an eigenvalue (truncated)", "uniform gap", "rate-1",
        fam.with_label("bsp-5.4"), _rotated_projection(_coordinate_projection(d_trunc, range(1, d_trunc)), R),
        SpectralWindow.disk(-1.0, 0.5), params={"d_trunc": d_trunc},
        notes="Weighted nilpotent subdiagonal 1/k!; truncation makes -1 an eigenvalue of multiplicity d_trunc-1.",
    )


def ex_5_5(d_trunc: int = 40) -> Example:
    if d_trunc < 3:
        raise InvalidInputError("d_trunc must be at least 3")
    A0 = np.zeros((d_trunc, d_trunc), dtype=complex)
    A0[0, 0], A0[1, 1] = 1j, -1j
    A0[2:, 2:] = -np.eye(d_trunc - 2) + upper_shift(d_trunc - 2)
    R = plane_rotation(d_trunc, 1, 2, lambda t: t, 1.0)
    fam = conjugate_family(_const(A0, "A0"), R)
    return Example(
        "bsp-5.5", "unitary pair plus shifted upper shift (truncated)", "uniform gap", "rate-1",
        fam.with_label("bsp-5.5"), _rotated_projection(_coordinate_projection(d_trunc, range(2, d_trunc)), R),
        SpectralWindow.disk(-1.0, 1.2), params={"d_trunc": d_trunc},
        notes="Untruncated spectrum of the shift block is the closed unit disk at -1.",
    )


# ------------------------------------------------------------ non-uniform gap


def crossing_curve(t: float) -> float:
    """``lambda_2 - sin(3 pi (t - 1/6))**2 / 2``: touches lambda_2 at 1/6, 1/2, 5/6."""
    return LAMBDA_2 - 0.5 * math.sin(3 * math.pi * (t - 1 / 6)) ** 2


def _crossing_curve_d(t: float) -> float:
    return -1.5 * math.pi * math.sin(6 * math.pi * (t - 1 / 6))


def _crossing_curve_d2(t: float) -> float:
    return -9.0 * math.pi ** 2 * math.cos(6 * math.pi * (t - 1 / 6))


def ex_5_6() -> Example:
    lam2 = LAMBDA_2

    def base(t: float) -> np.ndarray:
        l = crossing_curve(t)
        return np.array([[lam2, 0, 0], [0, l, 1], [0, 0, l]], dtype=complex)

    def base_d(t: float) -> np.ndarray:
        return np.diag([0, _crossing_curve_d(t), _crossing_curve_d(t)]).astype(complex)

    def base_d2(t: float) -> np.ndarray:
        return np.diag([0, _crossing_curve_d2(t), _crossing_curve_d2(t)]).astype(complex)

    R = plane_rotation(3, 0, 1, lambda t: t, 1.0)
    fam = conjugate_family(OperatorFamily(3, base, base_d, base_d2, "A0(t)"), R)
    guide = ScalarFamily(crossing_curve, _crossing_curve_d, "lambda(t)")
    return Example(
        "bsp-5.6", "finitely many crossings (three touching points)", "non-uniform gap", "qualitative",
        fam.with_label("bsp-5.6"), _rotated_projection(_coordinate_projection(3, [1, 2]), R),
        SpectralWindow.guide(crossing_curve, count=2), eigencurve=guide,
        params={"crossings": [1 / 6, 1 / 2, 5 / 6]},
        notes="Jordan block at lambda(t) <= lambda_2 touches the eigenvalue lambda_2 three times.",
    )


def ex_5_7(lam: float = 1.0) -> Example:
    lam = float(lam)

    def base(t: float) -> np.ndarray:
        return np.diag([lam, 0.0]).astype(complex)

    Z = np.zeros((2, 2), dtype=complex)
    R = plane_rotation(2, 0, 1, lambda t: 2 * math.pi * t, 2 * math.pi)
    fam = conjugate_family(OperatorFamily(2, base, lambda t: Z, lambda t: Z, "A0"), R)
    return Example(
        "bsp-5.7", "growth instead of stability: adiabatic statement fails", "uniform gap", "failure",
        fam.with_label("bsp-5.7"), _rotated_projection(_coordinate_projection(2, [0]), R),
        SpectralWindow.disk(lam, 0.5 * abs(lam)) if lam else None,
        eigencurve=ScalarFamily(lambda t: lam, lambda t: 0.0, "lambda"), params={"lam": lam},
        notes="A(t) = lam * v(t) v(t)^*, v = (cos 2 pi t, sin 2 pi t); lower bound 1 + T*lam/8 at t = 1/4.",
    )


def _ex_5_10_closed(T: float, t: float) -> np.ndarray:
    lam = LAMBDA_2
    U = np.eye(3, dtype=complex)
    U[0, 1] = T * math.sin(t)
    U[0, 2] = T * (1 - math.cos(t))
    return math.exp(lam * T * t) * U


def ex_5_10() -> Example:
    lam = LAMBDA_2
    A0 = np.array([[lam, 1, 0], [0, lam, 0], [0, 0, lam]], dtype=complex)
    R = plane_rotation(3, 1, 2, lambda t: t, 1.0)
    fam = conjugate_family(_const(A0, "A0"), R)
    return Example(
        "bsp-5.10", "projection not commuting with A(t)", "uniform gap", "rate-1",
        fam.with_label("bsp-5.10"), _rotated_projection(_coordinate_projection(3, [0, 2]), R),
        None, closed_form=_ex_5_10_closed,
        notes="A(t) is upper triangular and pairwise commuting, so U_T has a closed form.",
    )


# --------------------------------------------------------------------- no gap


def ex_6_1(d_trunc: int = 40) -> Example:
    if d_trunc < 3:
        raise InvalidInputError("d_trunc must be at least 3")
    A0 = np.zeros((d_trunc, d_trunc), dtype=complex)
    A0[1:, 1:] = -np.eye(d_trunc - 1) + np.eye(d_trunc - 1, k=-1)
    R = plane_rotation(d_trunc, 0, 1, lambda t: t, 1.0)
    fam = conjugate_family(_const(A0, "A0"), R)
    return Example(
        "bsp-6.1", "eigenvalue 0 on the boundary of a disk of spectrum (truncated)", "no gap", "qualitative",
        fam.with_label("bsp-6.1"), _rotated_projection(_coordinate_projection(d_trunc, [0]), R),
        SpectralWindow.disk(0.0, 0.5), eigencurve=ScalarFamily(lambda t: 0.0, lambda t: 0.0, "0"),
        theta0=0.0, params={"d_trunc": d_trunc},
        notes="The block -1 + right shift has the closed unit disk at -1 as spectrum before truncation.",
    )


def oscillating_curve(t: float) -> float:
    """``t**2 (sin(1/t) - 1)`` with value 0 at 0."""
    return 0.0 if t == 0 else t * t * (math.sin(1 / t) - 1)


def _oscillating_curve_d(t: float) -> float:
    return 0.0 if t == 0 else 2 * t * (math.sin(1 / t) - 1) - math.cos(1 / t)


def ex_6_2() -> Example:
    def base(t: float) -> np.ndarray:
        return np.diag([oscillating_curve(t), 0.0]).astype(complex)

    def base_d(t: float) -> np.ndarray:
        return np.diag([_oscillating_curve_d(t), 0.0]).astype(complex)

    R = plane_rotation(2, 0, 1, lambda t: t, 1.0)
    fam = conjugate_family(OperatorFamily(2, base, base_d, None, "A0(t)"), R)
    return Example(
        "bsp-6.2", "infinitely many crossings accumulating at t = 0", "no gap", "qualitative",
        fam.with_label("bsp-6.2"), _rotated_projection(_coordinate_projection(2, [0]), R),
        SpectralWindow.guide(oscillating_curve, count=1),
        eigencurve=ScalarFamily(oscillating_curve, _oscillating_curve_d, "t^2(sin(1/t)-1)"), theta0=math.pi / 2,
        notes="Normal family; lam(t) meets the other eigenvalue 0 at t = 1/(pi/2 + 2 pi k).",
    )


def _ex_6_5_closed(T: float, t: float) -> np.ndarray:
    I = ((t - 0.5) ** 3 + 0.125) / 3.0  # integral of (tau - 1/2)^2 over [0, t]
    return np.diag([np.exp(-1j * T * I), np.exp(1j * T * I)])


def ex_6_5() -> Example:
    def value(t: float) -> np.ndarray:
        q = (t - 0.5) ** 2
        return np.diag([-1j * q, 1j * q])

    def first(t: float) -> np.ndarray:
        q = 2 * (t - 0.5)
        return np.diag([-1j * q, 1j * q])

    def second(t: float) -> np.ndarray:
        return np.diag([-2j, 2j])

    fam = OperatorFamily(2, value, first, second, "bsp-6.5")

    def proj(t: float):
        P = np.diag([1.0, 0.0]).astype(complex) if t < 0.5 else np.diag([0.0, 1.0]).astype(complex)
        return P, np.zeros((2, 2), dtype=complex)

    def lam(t: float) -> complex:
        return -1j * (t - 0.5) ** 2 if t < 0.5 else 1j * (t - 0.5) ** 2

    return Example(
        "bsp-6.5", "skew-Hermitian diagonal family with a projection jump at t = 1/2", "no gap", "failure",
        fam, proj, None, eigencurve=ScalarFamily(lam, None, "lambda(t)"), theta0=0.0,
        closed_form=_ex_6_5_closed,
        notes="U_T(t) = diag(exp(iT int lam_1), exp(iT int lam_2)); the eigenprojection has no continuous extension.",
    )


def ex_6_6() -> Example:
    lam2 = LAMBDA_2

    def curve(t: float) -> float:
        return lam2 + oscillating_curve(t)

    def base(t: float) -> np.ndarray:
        l = curve(t)
        return np.array([[l, 1, 0], [0, l, 0], [0, 0, lam2]], dtype=complex)

    def base_d(t: float) -> np.ndarray:
        d = _oscillating_curve_d(t)
        return np.diag([d, d, 0.0]).astype(complex)

    R = plane_rotation(3, 1, 2, lambda t: t, 1.0)
    fam = conjugate_family(OperatorFamily(3, base, base_d, None, "A0(t)"), R)
    return Example(
        "bsp-6.6", "nilpotent part on the projected space, infinitely many crossings", "no gap", "open",
        fam.with_label("bsp-6.6"), _rotated_projection(_coordinate_projection(3, [0, 1]), R),
        SpectralWindow.guide(curve, count=2),
        eigencurve=ScalarFamily(curve, lambda t: _oscillating_curve_d(t), "lambda_2 + t^2(sin(1/t)-1)"),
        theta0=math.pi / 2,
        notes="Whether the adiabatic statement holds here is unknown; only data are produced.",
    )


# -------------------------------------------------------------- higher order


def two_regular_curve(t: float) -> float:
    return LAMBDA_2 - (t - 0.5) ** 2 if t < 0.5 else LAMBDA_2


def _two_regular_curve_d(t: float) -> float:
    return -2 * (t - 0.5) if t < 0.5 else 0.0


def ex_7_1() -> Example:
    def base(t: float) -> np.ndarray:
        m = two_regular_curve(t)
        return np.array([[0, 0, 0], [0, m, 1], [0, 0, m]], dtype=complex)

    def base_d(t: float) -> np.ndarray:
        d = _two_regular_curve_d(t)
        return np.diag([0, d, d]).astype(complex)

    R = plane_rotation(3, 0, 1, lambda t: t, 1.0)
    fam = conjugate_family(OperatorFamily(3, base, base_d, None, "A0(t)"), R)
    return Example(
        "bsp-7.1", "once-differentiable complement eigenvalue (order m = 2)", "higher order", "higher-order",
        fam.with_label("bsp-7.1"), _rotated_projection(_coordinate_projection(3, [0]), R),
        SpectralWindow.disk(0.0, 0.25), params={"m": 2},
        notes="mu(t) is C^1 but not C^2 at t = 1/2, which limits the expansion order.",
    )


def ex_rellich() -> Example:
    def value(t: float) -> np.ndarray:
        if t == 0:
            return np.zeros((2, 2), dtype=complex)
        a = 2.0 / t
        return 1j * math.exp(-1.0 / (t * t)) * np.array([[math.cos(a), math.sin(a)], [math.sin(a), -math.cos(a)]])

    fam = OperatorFamily(2, value, None, None, "bsp-rellich")
    return Example(
        "bsp-rellich", "smooth skew-Hermitian family whose eigenprojections oscillate near t = 0", "non-uniform gap", "open",
        fam, None, SpectralWindow.halfplane(0.0, angle=math.pi / 2),
        notes="Tracking is expected to fail near t = 0; no continuous projection family exists there.",
    )


_BUILDERS: dict[str, Callable[..., Example]] = {
    "bsp-5.1": ex_5_1,
    "bsp-5.3": ex_5_3,
    "bsp-5.4": ex_5_4,
    "bsp-5.5": ex_5_5,
    "bsp-5.6": ex_5_6,
    "bsp-5.7": ex_5_7,
    "bsp-5.10": ex_5_10,
    "bsp-6.1": ex_6_1,
    "bsp-6.2": ex_6_2,
    "bsp-6.5": ex_6_5,
    "bsp-6.6": ex_6_6,
    "bsp-7.1": ex_7_1,
    "bsp-rellich": ex_rellich,
}


def get_example(example_id: str, **params) -> Example:
    if example_id == "transport-basic":
        raise InvalidInputError("transport-basic is built by the transport module, not as an Example")
    try:
        builder = _BUILDERS[example_id]
    except KeyError:
        raise InvalidInputError(f"unknown example id {example_id!r}", known=sorted(_BUILDERS)) from None
    return builder(**params)


def list_examples() -> list[dict]:
    """Registry rows sorted by id: id, dim, chapter, tag, title."""
    rows = []
    for key in _BUILDERS:
        ex = _BUILDERS[key]()
        rows.append({"id": ex.id, "dim": ex.dim, "chapter": ex.chapter, "tag": ex.tag, "title": ex.title})
    rows.append({
        "id": "transport-basic", "dim": 192, "chapter": "transport", "tag": "rate-1",
        "title": "discrete-ordinates slab, a=1, n_x=24, n_mu=8",
    })
    return sorted(rows, key=lambda r: r["id"])


def example_ids() -> list[str]:
    return [r["id"] for r in list_examples()]
