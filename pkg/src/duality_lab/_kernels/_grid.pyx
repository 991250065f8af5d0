# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled grid-enumeration kernels (brute-force oracle and minimax inner loops)."""

from libc.math cimport log, pow, INFINITY

import numpy as np


def grid_search_max(w, double xi, A, C, lo, step, counts, int util_code,
                    double util_param):
    """See _fallback.grid_search_max; identical contract."""
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[:, ::1] Av = np.ascontiguousarray(A, dtype=np.float64)
    cdef double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef double[::1] lov = np.ascontiguousarray(lo, dtype=np.float64)
    cdef double[::1] stepv = np.ascontiguousarray(step, dtype=np.float64)
    cdef long[::1] cnt = np.ascontiguousarray(counts, dtype=np.int64)

    cdef int d = lov.shape[0]
    cdef int nw = wv.shape[0]
    cdef int m = Cv.shape[0]
    cdef long total = 1
    cdef int j
    for j in range(d):
        total *= cnt[j]

    cdef long[4] idx
    cdef double[4] h
    cdef double best_val = -INFINITY
    cdef double[4] best_h
    cdef long flat, rem
    cdef int i, r, feasible
    cdef double s, wealth, val

    for j in range(4):
        best_h[j] = 0.0

    for flat in range(total):
        rem = flat
        for j in range(d - 1, -1, -1):
            idx[j] = rem % cnt[j]
            rem //= cnt[j]
        for j in range(d):
            h[j] = lov[j] + idx[j] * stepv[j]
        feasible = 1
        for r in range(m):
            s = 1.0
            for j in range(d):
                s += Cv[r, j] * h[j]
            if s <= 0.0:
                feasible = 0
                break
        if not feasible:
            continue
        val = 0.0
        for i in range(nw):
            wealth = 1.0
            for j in range(d):
                wealth += Av[i, j] * h[j]
            wealth *= xi
            if wealth <= 0.0:
                feasible = 0
                break
            if util_code == 0:
                val += wv[i] * log(wealth)
            else:
                val += wv[i] * pow(wealth, util_param) / util_param
        if feasible and val > best_val:
            best_val = val
            for j in range(d):
                best_h[j] = h[j]

    out_h = np.array([best_h[j] for j in range(d)])
    if best_val == -INFINITY:
        out_h[:] = np.nan
    return best_val, out_h


def maximin_value(w, xvals, uvals, Y):
    """See _fallback.maximin_value; identical contract.

    Nested enumeration with per-level partial sums: each depth keeps the
    weighted utility prefix and the frontier dot-product prefixes, so a full
    recomputation per grid point is avoided.
    """
    cdef double[::1] wv = np.ascontiguousarray(w, dtype=np.float64)
    cdef double[::1] xv = np.ascontiguousarray(xvals, dtype=np.float64)
    cdef double[::1] uv = np.ascontiguousarray(uvals, dtype=np.float64)
    cdef double[:, ::1] Yv = np.ascontiguousarray(Y, dtype=np.float64)

    cdef int k = wv.shape[0]
    cdef int nx = xv.shape[0]
    cdef long f = Yv.shape[0]
    if k > 4:
        raise ValueError("maximin_value supports at most 4 scenarios")

    # partial[lvl, :] holds the frontier dots after fixing coordinates < lvl
    cdef double[:, ::1] partial = np.zeros((k + 1, f))
    cdef double[4] csum
    cdef long[4] pos
    cdef int lvl = 0
    cdef long i
    cdef int j
    cdef double x, wl, inner, val
    cdef double best = -INFINITY
    cdef double c0 = 0.0

    pos[0] = 0
    while True:
        if pos[lvl] == nx:
            if lvl == 0:
                break
            lvl -= 1
            pos[lvl] += 1
            continue
        x = xv[pos[lvl]]
        wl = wv[lvl]
        if lvl == k - 1:
            # leaf: finish the frontier max directly
            inner = -INFINITY
            for i in range(f):
                val = partial[lvl, i] + wl * x * Yv[i, lvl]
                if val > inner:
                    inner = val
            val = (c0 if lvl == 0 else csum[lvl - 1]) + wl * uv[pos[lvl]] - inner
            if val > best:
                best = val
            pos[lvl] += 1
        else:
            csum[lvl] = (c0 if lvl == 0 else csum[lvl - 1]) + wl * uv[pos[lvl]]
            for i in range(f):
                partial[lvl + 1, i] = partial[lvl, i] + wl * x * Yv[i, lvl]
            lvl += 1
            pos[lvl] = 0
    return best
