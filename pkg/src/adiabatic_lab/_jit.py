"""Runtime switch between numba kernels and their numpy twins.

Set ``ADIABATIC_LAB_DISABLE_JIT=1`` to force the pure numpy path.  The
flag is read on every dispatch, so tests and benchmarks may flip it
without reimporting anything.
"""

from __future__ import annotations

import os

ENV_FLAG = "ADIABATIC_LAB_DISABLE_JIT"
_TRUTHY = {"1", "true", "yes", "on"}

try:  # numba is a declared dependency, but keep the numpy path usable without it
    from numba import njit as _njit
except ImportError:  # pragma: no cover
    _njit = None


def jit_enabled() -> bool:
    if _njit is None:
        return False
    return os.environ.get(ENV_FLAG, "").strip().lower() not in _TRUTHY


def njit(func):
    """``numba.njit(cache=True)`` when numba is importable, else identity."""
    if _njit is None:  # pragma: no cover
        return func
    return _njit(cache=True)(func)
