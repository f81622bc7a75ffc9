#!/usr/bin/env python3
"""Benchmark the jitted propagation kernels against the pure-numpy fallback.

The same source functions back both paths (numba compiles them when available
and OPIDENT_NUMBA is not "0"), so this measures compilation benefit only.
Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from opident import _kernels


def timeit(fn, *args, repeat=30):
    fn(*args)  # warmup / JIT
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    rng = np.random.default_rng(0)
    rows = []

    # coupled RK4: 3x3 drift with the full canonical basis as directions
    n, k, n_steps = 3, 9, 1000
    f_mat = rng.standard_normal((n, n))
    g_mat = rng.standard_normal((n, n))
    sources = np.ascontiguousarray(np.eye(n * n).reshape(k, n, n))
    eps = rng.uniform(-1, 1, (n_steps, n))
    y0 = np.zeros(n)
    args = (f_mat, g_mat, sources, _kernels.SRC_STATE, eps, y0, 1e-3, n_steps)
    rows.append(("rk4_coupled 3x3 K=9", args, _kernels._rk4_coupled_py,
                 _kernels.rk4_coupled))

    # exponential propagator: 6x6 skew bilinear with 9 directions
    n, k, n_steps = 6, 9, 1000
    m = rng.standard_normal((n, n))
    p_mat = m - m.T
    m = rng.standard_normal((n, n))
    q_mat = m - m.T
    src = []
    for _ in range(k):
        m = rng.standard_normal((n, n))
        src.append(m - m.T)
    sources = np.ascontiguousarray(np.array(src))
    eps = rng.uniform(-1, 1, (100, 1))[np.repeat(np.arange(100), 10)]
    y0 = np.zeros(n)
    y0[0] = 1.0
    args = (p_mat, q_mat, sources, _kernels.SRC_STATE, eps, y0, 1e-3, n_steps)
    rows.append(("expm_prop 6x6 K=9", args, _kernels._expm_prop_coupled_py,
                 _kernels.expm_prop_coupled))

    print(f"numba active: {_kernels.USING_NUMBA}")
    print(f"{'kernel':24s} {'numpy':>10s} {'jitted':>10s} {'speedup':>9s}")
    for name, args, py_fn, fast_fn in rows:
        t_py = timeit(py_fn, *args)
        t_fast = timeit(fast_fn, *args)
        ys_a, dy_a, _ = py_fn(*args)
        ys_b, dy_b, _ = fast_fn(*args)
        assert np.allclose(ys_a, ys_b, atol=1e-12) and np.allclose(dy_a, dy_b, atol=1e-12)
        speed = t_py / t_fast if _kernels.USING_NUMBA else 1.0
        print(f"{name:24s} {t_py * 1e3:9.3f}ms {t_fast * 1e3:9.3f}ms {speed:8.1f}x")


if __name__ == "__main__":
    main()
