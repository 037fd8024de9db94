"""Dense complex linear algebra used throughout the package.

Operators are plain ``numpy`` arrays of dtype ``complex128``.  The
functions here add the validation, ordering and error reporting the
rest of the code relies on; the heavy lifting is LAPACK via numpy/scipy.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import EigenFailure, InvalidInputError, NearSpectrumError

#: Condition number above which ``z - A`` counts as singular.
NEAR_SPECTRUM_COND = 1e12


def as_operator(A, *, name: str = "A") -> np.ndarray:
    """Validate and convert to a finite square complex array."""
    M = np.asarray(A)
    if M.ndim == 0:
        M = M.reshape(1, 1)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] < 1:
        raise InvalidInputError(f"{name} must be a nonempty square matrix", shape=list(M.shape))
    M = M.astype(np.complex128, copy=False)
    if not np.all(np.isfinite(M)):
        raise InvalidInputError(f"{name} has non-finite entries")
    return M


def mat_exp(A) -> np.ndarray:
    """Matrix exponential (scaling and squaring, Pade degree up to 13)."""
    M = as_operator(A)
    return sla.expm(M)


def resolvent_solve(A, z: complex, rhs, *, max_cond: float = NEAR_SPECTRUM_COND) -> np.ndarray:
    """Solve ``(z - A) X = rhs`` by pivoted LU.

    Raises :class:`NearSpectrumError` when the estimated 1-norm condition
    number of ``z - A`` exceeds ``max_cond``.
    """
    M = as_operator(A)
    n = M.shape[0]
    B = np.asarray(rhs, dtype=np.complex128)
    if B.shape[0] != n:
        raise InvalidInputError("rhs has incompatible leading dimension", n=n, rhs_shape=list(B.shape))
    S = z * np.eye(n) - M
    anorm = np.linalg.norm(S, 1)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(S, check_finite=False)
    (gecon,) = sla.get_lapack_funcs(("gecon",), (lu,))
    rcond, info = gecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if info != 0 or not np.isfinite(cond) or cond > max_cond:
        raise NearSpectrumError(f"z={z} is numerically in the spectrum (cond={cond:.3g})", z=complex(z), condition=float(cond))
    return sla.lu_solve((lu, piv), B, check_finite=False)


@dataclass(frozen=True)
class EigenDecomposition:
    """Eigenvalues sorted by real part (descending), then imaginary part."""

    values: np.ndarray
    vectors: np.ndarray
    condition: float
    residuals: np.ndarray

    def __len__(self) -> int:
        return len(self.values)


def _sort_key_order(values: np.ndarray, scale: float) -> np.ndarray:
    # Quantize real parts so rounding noise does not break ties between
    # eigenvalues that are equal in exact arithmetic.
    q = 1e-12 * max(scale, 1.0)
    re = np.round(values.real / q) * q
    return np.lexsort((values.imag, -re))


def eig(A, *, tol: float = 1e-10) -> EigenDecomposition:
    """Eigen-decomposition with residual certificates.

    Every pair satisfies ``||A v - lam v|| <= tol * ||A||`` (vectors have
    unit norm), otherwise :class:`EigenFailure` is raised.
    """
    M = as_operator(A)
    try:
        w, V = np.linalg.eig(M)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - LAPACK rarely fails here
        raise EigenFailure(f"eigensolver did not converge: {exc}") from exc
    norm = float(np.linalg.norm(M, 2))
    order = _sort_key_order(w, norm)
    w = w[order]
    V = V[:, order]
    res = np.linalg.norm(M @ V - V * w, axis=0)
    bound = tol * max(norm, np.finfo(float).tiny)
    if np.any(res > bound):
        raise EigenFailure(
            "eigenpair residual above tolerance",
            achieved=float(res.max()),
            bound=float(bound),
        )
    with np.errstate(all="ignore"):
        cond = float(np.linalg.cond(V))
    if not np.isfinite(cond):
        cond = float("inf")
    return EigenDecomposition(values=w, vectors=V, condition=cond, residuals=res)


def eigvals(A) -> np.ndarray:
    """Eigenvalues only, in the same order as :func:`eig`."""
    M = as_operator(A)
    w = np.linalg.eigvals(M)
    return w[_sort_key_order(w, float(np.linalg.norm(M, 1)))]


def op_norm(A) -> float:
    """Spectral norm (largest singular value)."""
    M = np.asarray(A)
    if M.ndim != 2 or not np.all(np.isfinite(M)):
        raise InvalidInputError("op_norm expects a finite matrix")
    if M.size == 0:
        return 0.0
    return float(np.linalg.norm(M, 2))


def numerical_abscissa(A) -> float:
    """``max Re <x, A x>`` over unit ``x``: top eigenvalue of the Hermitian part."""
    M = as_operator(A)
    return float(np.linalg.eigvalsh(0.5 * (M + M.conj().T))[-1])


def commutator(A, B) -> np.ndarray:
    return A @ B - B @ A
