"""Pure-numpy implementations of the hot grid kernels.

Mirrors the compiled extension's API; selected at import when the extension
is unavailable.  Enumeration is chunked over the flat grid index so memory
stays bounded.
"""

from __future__ import annotations

import numpy as np

_CHUNK = 1 << 16


def _utility(values, util_code, util_param):
    if util_code == 0:
        return np.log(values)
    return values ** util_param / util_param


def grid_search_max(w, xi, A, C, lo, step, counts, util_code, util_param):
    """Maximize sum_i w_i U(xi * (1 + (A h)_i)) over a product grid of h.

    Rows of C are wealth-positivity constraints: 1 + (C h)_row > 0.  Grid
    axis j has ``counts[j]`` points ``lo[j] + i*step[j]``.  Returns
    (best value, best h); value is -inf if no feasible grid point exists.
    """
    w = np.asarray(w, dtype=float)
    A = np.asarray(A, dtype=float)
    C = np.asarray(C, dtype=float)
    lo = np.asarray(lo, dtype=float)
    step = np.asarray(step, dtype=float)
    counts = np.asarray(counts, dtype=np.intp)
    d = lo.size
    total = int(np.prod(counts))
    best_val = -np.inf
    best_h = np.full(d, np.nan)
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        idx = np.stack(np.unravel_index(flat, counts), axis=1)
        H = lo + idx * step
        slack = 1.0 + H @ C.T
        feasible = np.all(slack > 0.0, axis=1)
        if not feasible.any():
            continue
        Hf = H[feasible]
        wealth = xi * (1.0 + Hf @ A.T)
        vals = _utility(wealth, util_code, util_param) @ w
        k = int(np.argmax(vals))
        if vals[k] > best_val:
            best_val = float(vals[k])
            best_h = Hf[k]
    return best_val, best_h


def maximin_value(w, xvals, uvals, Y):
    """max over x in xvals^k of [sum_i w_i uvals[x_i] - max_f sum_i w_i x_i Y[f,i]].

    ``uvals`` are the utility values of ``xvals``; ``Y`` holds the rows of the
    finite dual set (already reduced to its componentwise-maximal frontier
    when the caller can afford it).
    """
    w = np.asarray(w, dtype=float)
    xvals = np.asarray(xvals, dtype=float)
    uvals = np.asarray(uvals, dtype=float)
    Y = np.asarray(Y, dtype=float)
    k = w.size
    nx = xvals.size
    counts = (nx,) * k
    total = nx ** k
    Ytw = (Y * w).T  # (k, f)
    best = -np.inf
    for start in range(0, total, _CHUNK):
        flat = np.arange(start, min(start + _CHUNK, total))
        idx = np.stack(np.unravel_index(flat, counts), axis=1)
        cvals = uvals[idx] @ w
        dots = (xvals[idx] @ Ytw).max(axis=1)
        best = max(best, float(np.max(cvals - dots)))
    return best
