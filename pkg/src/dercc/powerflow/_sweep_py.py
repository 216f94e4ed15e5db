"""Pure-Python backward/forward sweep kernel (fallback implementation).

Mirrors ``_sweep_cy.pyx`` operation-for-operation; the compiled module is
preferred at import time when available.  All arrays are preallocated by the
caller so the two kernels share one calling convention:

    order     BFS bus order, root first (internal indices)
    parent    parent bus per bus (-1 at root)
    line_of   line connecting each bus to its parent (-1 at root)
    lf, lt    line endpoints
    zr, zi    series impedance per line (pu)
    yr, yi    series admittance per line (pu)
    sr, si    net complex injection per bus (pu, root entry ignored)
    vr, vi    voltage state, initialized by the caller (flat start)
    jr, ji    per-line branch current scratch
    iar, iai  per-bus current accumulation scratch

Convergence is declared when the worst per-bus complex-power mismatch,
measured against the series-admittance network equations, drops to ``tol``.
"""


def sweep_kernel(order, parent, line_of, lf, lt, zr, zi, yr, yi,
                 sr, si, vr, vi, jr, ji, iar, iai, tol, max_iter):
    n = order.shape[0]
    n_lines = lf.shape[0]
    mismatch = float("inf")
    it = 0
    while it < max_iter:
        it += 1

        # backward sweep: accumulate branch currents leaf-to-root
        for l in range(n_lines):
            jr[l] = 0.0
            ji[l] = 0.0
        for k in range(n - 1, 0, -1):
            b = order[k]
            l = line_of[b]
            d = vr[b] * vr[b] + vi[b] * vi[b]
            # branch current collects -conj(S_b / V_b)
            jr[l] += -(sr[b] * vr[b] + si[b] * vi[b]) / d
            ji[l] += (si[b] * vr[b] - sr[b] * vi[b]) / d
            pl = line_of[parent[b]]
            if pl >= 0:
                jr[pl] += jr[l]
                ji[pl] += ji[l]

        # forward sweep: update voltages root-to-leaf
        for k in range(1, n):
            b = order[k]
            p = parent[b]
            l = line_of[b]
            vr[b] = vr[p] - (zr[l] * jr[l] - zi[l] * ji[l])
            vi[b] = vi[p] - (zr[l] * ji[l] + zi[l] * jr[l])

        # true power mismatch from the network equations
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
            m = (dr * dr + di * di) ** 0.5
            if m > mismatch:
                mismatch = m
        if mismatch <= tol:
            break
    return it, mismatch
