"""Timing comparison of the compiled grid kernels against the numpy fallback.

Run with:  python3 benchmarks/bench_kernels.py
"""

import time

import numpy as np

from duality_lab import HAVE_COMPILED
from duality_lab import _kernels
from duality_lab._kernels import fallback


def _time(fn, *args, repeat=3):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_grid_search_max():
    rng = np.random.default_rng(0)
    n, d = 4, 3
    w = rng.dirichlet(np.ones(n))
    A = rng.uniform(-0.2, 0.2, size=(n, d))
    lo = np.full(d, -1.5)
    step = np.full(d, 0.02)
    counts = np.full(d, 151, dtype=np.intp)  # ~3.4e6 grid points
    args = (w, 1.0, A, A, lo, step, counts, 0, 0.5)
    tc, (vc, _) = _time(_kernels.grid_search_max, *args)
    tf, (vf, _) = _time(fallback.grid_search_max, *args)
    assert abs(vc - vf) <= 1e-12
    return "grid_search_max (3.4e6 pts)", tc, tf


def bench_maximin_value():
    rng = np.random.default_rng(1)
    k = 3
    xvals = np.linspace(0.05, 2.0, 180)  # 5.8e6 combinations
    uvals = np.log(xvals)
    w = rng.dirichlet(np.ones(k))
    Y = rng.uniform(0.1, 2.0, size=(24, k))
    args = (w, xvals, uvals, Y)
    tc, vc = _time(_kernels.maximin_value, *args)
    tf, vf = _time(fallback.maximin_value, *args)
    assert abs(vc - vf) <= 1e-12
    return "maximin_value (5.8e6 combos)", tc, tf


def main():
    print(f"compiled extension available: {HAVE_COMPILED}")
    rows = [bench_grid_search_max(), bench_maximin_value()]
    print(f"{'kernel':<32}{'selected':>10}{'fallback':>10}{'speedup':>9}")
    for name, tc, tf in rows:
        print(f"{name:<32}{tc:>9.3f}s{tf:>9.3f}s{tf / tc:>8.1f}x")


if __name__ == "__main__":
    main()
