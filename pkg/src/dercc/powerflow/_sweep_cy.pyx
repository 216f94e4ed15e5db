# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled backward/forward sweep kernel.

Operation-for-operation identical to ``_sweep_py.sweep_kernel``; see that
module for the calling convention.
"""

from libc.math cimport sqrt, INFINITY


def sweep_kernel(int[::1] order, int[::1] parent, int[::1] line_of,
                 int[::1] lf, int[::1] lt,
                 double[::1] zr, double[::1] zi,
                 double[::1] yr, double[::1] yi,
                 double[::1] sr, double[::1] si,
                 double[::1] vr, double[::1] vi,
                 double[::1] jr, double[::1] ji,
                 double[::1] iar, double[::1] iai,
                 double tol, int max_iter):
    cdef int n = order.shape[0]
    cdef int n_lines = lf.shape[0]
    cdef int it = 0, k, b, l, p, f, t, pl
    cdef double d, dvr, dvi, cr, ci, pr, pi, dr, di, m
    cdef double mismatch = INFINITY

    while it < max_iter:
        it += 1

        for l in range(n_lines):
            jr[l] = 0.0
            ji[l] = 0.0
        for k in range(n - 1, 0, -1):
            b = order[k]
            l = line_of[b]
            d = vr[b] * vr[b] + vi[b] * vi[b]
            jr[l] += -(sr[b] * vr[b] + si[b] * vi[b]) / d
            ji[l] += (si[b] * vr[b] - sr[b] * vi[b]) / d
            pl = line_of[parent[b]]
            if pl >= 0:
                jr[pl] += jr[l]
                ji[pl] += ji[l]

        for k in range(1, n):
            b = order[k]
            p = parent[b]
            l = line_of[b]
            vr[b] = vr[p] - (zr[l] * jr[l] - zi[l] * ji[l])
            vi[b] = vi[p] - (zr[l] * ji[l] + zi[l] * jr[l])

        for b in range(n):
            iar[b] = 0.0
            iai[b] = 0.0
        for l in range(n_lines):
            f = lf[l]
            t = lt[l]
            dvr = vr[f] - vr[t]
            dvi = vi[f] - vi[t]
            cr = yr[l] * dvr - yi[l] * dvi
            ci = yr[l] * dvi + yi[l] * dvr
            iar[f] += cr
            iai[f] += ci
            iar[t] -= cr
            iai[t] -= ci
        mismatch = 0.0
        for k in range(1, n):
            b = order[k]
            pr = vr[b] * iar[b] + vi[b] * iai[b]
            pi = vi[b] * iar[b] - vr[b] * iai[b]
            dr = sr[b] - pr
            di = si[b] - pi
            m = sqrt(dr * dr + di * di)
            if m > mismatch:
                mismatch = m
        if mismatch <= tol:
            break
    return it, mismatch
