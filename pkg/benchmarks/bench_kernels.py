"""Time the numba kernels against their numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is warmed up once (numba compiles on first call) and then
timed with ``time.perf_counter``.  The flag ADIABATIC_LAB_DISABLE_JIT is
flipped in-process, so one run covers both paths.
"""

import argparse
import os
import time

import numpy as np

from adiabatic_lab import _kernels
from adiabatic_lab._jit import ENV_FLAG


def _cases(rng):
    n = 24
    Y = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    G = rng.standard_normal((7, n, n)) + 1j * rng.standard_normal((7, n, n))
    x = rng.standard_normal(400) + 1j * rng.standard_normal(400)
    y = rng.standard_normal(300) + 1j * rng.standard_normal(300)
    mu = np.polynomial.legendre.leggauss(16)[0]
    return {
        "dopri_step (24x24)": lambda: _kernels.dopri_step(Y, G, 1e-2, 1e-10, 1e-10),
        "cross_min_distance (400x300)": lambda: _kernels.cross_min_distance(x, y),
        "directed_sup_distance (400x300)": lambda: _kernels.directed_sup_distance(x, y),
        "upwind_streaming (48x16)": lambda: _kernels.upwind_streaming(mu, 48, 1 / 48),
    }


def bench(fn, repeat):
    fn()
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    return (time.perf_counter() - t0) / repeat


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    cases = _cases(np.random.default_rng(0))
    saved = os.environ.get(ENV_FLAG)
    print(f"{'kernel':<34}{'numba [us]':>12}{'numpy [us]':>12}{'ratio':>8}")
    try:
        for name, fn in cases.items():
            os.environ.pop(ENV_FLAG, None)
            t_nb = bench(fn, args.repeat)
            os.environ[ENV_FLAG] = "1"
            t_np = bench(fn, args.repeat)
            print(f"{name:<34}{t_nb * 1e6:12.1f}{t_np * 1e6:12.1f}{t_np / t_nb:8.2f}")
    finally:
        if saved is None:
            os.environ.pop(ENV_FLAG, None)
        else:
            os.environ[ENV_FLAG] = saved


if __name__ == "__main__":
    main()
