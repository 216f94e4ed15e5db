"""Self-contained primal-dual interior-point solver for SOC programs.

The user-level :class:`~dercc.conic.program.ConicProgram` is converted to the
standard embedding form

    minimize    c'x
    subject to  A x = b
                G x + s = h,   s in K = R+^l x Q^{q_1} x ... x Q^{q_N}

with free ``x``; rotated cones are mapped to standard second-order cones
``Q^q = {(t, w) : t >= ||w||}`` by the orthogonal transform
``(u, v, w) -> ((u+v)/sqrt2, (u-v)/sqrt2, w)``.  The solver then runs a
Mehrotra predictor-corrector method on the homogeneous self-dual embedding
(the extra ``tau``/``kappa`` pair), with Nesterov-Todd scaling of the cone
blocks.  This is the algorithm family described in Andersen & Andersen's
homogeneous LP method and its SOCP extensions; infeasibility and
unboundedness are detected through the embedding's certificates rather than
by heuristics.

Each iteration factors one quasidefinite KKT matrix

    [ 0   A'   G' ]
    [ A   0    0  ]
    [ G   0  -W'W ]

(with small static regularization, repaired by iterative refinement) and
back-solves three right-hand sides.

No third-party optimization library is involved; scipy supplies only the
sparse LU factorization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .program import (
    ConicProgram,
    Solution,
    SolveStatus,
    ToleranceConfig,
    verify,
)

INF = math.inf

_STEP_BACKOFF = 0.99
_STATIC_REG = 1e-9
_REFINE_STEPS = 2


# ---------------------------------------------------------------------------
# Conversion to standard form
# ---------------------------------------------------------------------------

@dataclass
class _StdForm:
    n: int
    c: np.ndarray
    A: sp.csr_matrix
    b: np.ndarray
    G: sp.csr_matrix
    h: np.ndarray
    dim_orth: int
    soc_dims: list[int]
    infeasible_reason: str | None = None


def _to_std_form(program: ConicProgram) -> _StdForm:
    n = program.n_vars
    c = program.objective_vector()

    a_rows, a_cols, a_vals, b = [], [], [], []

    def add_eq(idxs, vals, rhs):
        r = len(b)
        for j, v in zip(idxs, vals):
            a_rows.append(r)
            a_cols.append(j)
            a_vals.append(v)
        b.append(rhs)

    g_rows, g_cols, g_vals, h = [], [], [], []

    def add_g(idxs, vals, rhs):
        r = len(h)
        for j, v in zip(idxs, vals):
            g_rows.append(r)
            g_cols.append(j)
            g_vals.append(v)
        h.append(rhs)

    reason = None

    for idxs, vals, rhs in program.linear_eq:
        if not idxs and abs(rhs) > 0.0:
            reason = f"equality row with empty support and rhs {rhs}"
        add_eq(idxs, vals, rhs)

    # orthant rows: inequalities then bounds; a_i'x <= u  ->  h - Gx >= 0
    for idxs, vals, lo, hi in program.linear_ineq:
        if lo > hi:
            reason = f"inequality row with lo {lo} > hi {hi}"
        if lo == hi and lo > -INF:
            add_eq(idxs, vals, lo)
            continue
        if hi < INF:
            add_g(idxs, vals, hi)
        if lo > -INF:
            add_g(idxs, [-v for v in vals], -lo)

    for j in range(n):
        lo, hi = program.var_lo[j], program.var_hi[j]
        if lo > hi:
            reason = f"variable {program.var_names[j]} has lo {lo} > hi {hi}"
        if lo == hi and lo > -INF:
            add_eq([j], [1.0], lo)
            continue
        if hi < INF:
            add_g([j], [1.0], hi)
        if lo > -INF:
            add_g([j], [-1.0], -lo)

    dim_orth = len(h)
    if dim_orth == 0:
        add_g([], [], 1.0)  # keep the cone machinery non-degenerate
        dim_orth = 1

    # rotated cones -> standard SOC slack blocks, s = T P x, h = 0
    soc_dims = []
    inv_sqrt2 = 1.0 / math.sqrt(2.0)
    for cone in program.soc_cones:
        coeffs0: dict[int, float] = {}
        coeffs1: dict[int, float] = {}
        coeffs0[cone.u] = coeffs0.get(cone.u, 0.0) - inv_sqrt2
        coeffs0[cone.v] = coeffs0.get(cone.v, 0.0) - inv_sqrt2
        coeffs1[cone.u] = coeffs1.get(cone.u, 0.0) - inv_sqrt2
        coeffs1[cone.v] = coeffs1.get(cone.v, 0.0) + inv_sqrt2
        add_g(list(coeffs0), list(coeffs0.values()), 0.0)
        add_g(list(coeffs1), list(coeffs1.values()), 0.0)
        for wj in cone.w:
            add_g([wj], [-1.0], 0.0)
        soc_dims.append(2 + len(cone.w))

    p, m = len(b), len(h)
    A = sp.csr_matrix((a_vals, (a_rows, a_cols)), shape=(p, n))
    G = sp.csr_matrix((g_vals, (g_rows, g_cols)), shape=(m, n))
    return _StdForm(
        n=n,
        c=c,
        A=A,
        b=np.asarray(b, dtype=float),
        G=G,
        h=np.asarray(h, dtype=float),
        dim_orth=dim_orth,
        soc_dims=soc_dims,
        infeasible_reason=reason,
    )


# ---------------------------------------------------------------------------
# Cone algebra over the stacked slack layout [orthant | soc_1 | soc_2 | ...]
# ---------------------------------------------------------------------------

class _Cone:
    def __init__(self, dim_orth: int, soc_dims: list[int]):
        self.l = dim_orth
        self.soc_dims = soc_dims
        self.dim = dim_orth + sum(soc_dims)
        self.degree = dim_orth + len(soc_dims)
        off = dim_orth
        self.soc_slices = []
        for q in soc_dims:
            self.soc_slices.append(slice(off, off + q))
            off += q

    def identity(self) -> np.ndarray:
        e = np.zeros(self.dim)
        e[: self.l] = 1.0
        for s in self.soc_slices:
            e[s.start] = 1.0
        return e

    def min_margin(self, v: np.ndarray) -> float:
        """Distance-like interiority measure; > 0 iff strictly inside K."""
        m = np.min(v[: self.l]) if self.l else INF
        for s in self.soc_slices:
            blk = v[s]
            m = min(m, blk[0] - np.linalg.norm(blk[1:]))
        return m

    def shift_into(self, v: np.ndarray) -> np.ndarray:
        alpha = -self.min_margin(v)
        if alpha < 0.0:
            return v
        return v + (1.0 + alpha) * self.identity()

    def prod(self, a: np.ndarray, bvec: np.ndarray) -> np.ndarray:
        """Jordan product a o b per block."""
        out = np.empty(self.dim)
        out[: self.l] = a[: self.l] * bvec[: self.l]
        for s in self.soc_slices:
            ab, bb = a[s], bvec[s]
            out[s.start] = ab @ bb
            out[s.start + 1 : s.stop] = ab[0] * bb[1:] + bb[0] * ab[1:]
        return out

    def solve_prod(self, lam: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Solve lam o u = d for u (lam strictly interior)."""
        out = np.empty(self.dim)
        out[: self.l] = d[: self.l] / lam[: self.l]
        for s in self.soc_slices:
            lb, db = lam[s], d[s]
            a0, b1 = lb[0], lb[1:]
            det = a0 * a0 - b1 @ b1
            u0 = (a0 * db[0] - b1 @ db[1:]) / det
            out[s.start] = u0
            out[s.start + 1 : s.stop] = (db[1:] - u0 * b1) / a0
        return out

    def max_step(self, u: np.ndarray, du: np.ndarray) -> float:
        """sup { alpha : u + alpha*du in K } for interior u."""
        alpha = INF
        if self.l:
            neg = du[: self.l] < 0
            if np.any(neg):
                alpha = float(np.min(-u[: self.l][neg] / du[: self.l][neg]))
        for s in self.soc_slices:
            ub, db = u[s], du[s]
            a = db[0] * db[0] - db[1:] @ db[1:]
            bq = ub[0] * db[0] - ub[1:] @ db[1:]
            cq = ub[0] * ub[0] - ub[1:] @ ub[1:]
            cq = max(cq, 0.0)
            if abs(a) < 1e-300:
                if bq < 0.0:
                    alpha = min(alpha, -cq / (2.0 * bq))
                continue
            disc = bq * bq - a * cq
            if disc < 0.0:
                continue  # never leaves the cone along this ray
            sq = math.sqrt(disc)
            roots = [(-bq - sq) / a, (-bq + sq) / a]
            pos = [r for r in roots if r > 0.0]
            if pos:
                alpha = min(alpha, min(pos))
        return alpha


class _Scaling:
    """Nesterov-Todd scaling point: W z = W^{-1} s = lambda."""

    def __init__(self, cone: _Cone, s: np.ndarray, z: np.ndarray):
        self.cone = cone
        l = cone.l
        self.d_orth = np.sqrt(s[:l] / z[:l]) if l else np.empty(0)
        self.soc_eta = []
        self.soc_wbar = []
        for sl in cone.soc_slices:
            sb, zb = s[sl], z[sl]
            rs = math.sqrt(max(sb[0] ** 2 - sb[1:] @ sb[1:], 1e-300))
            rz = math.sqrt(max(zb[0] ** 2 - zb[1:] @ zb[1:], 1e-300))
            sbar, zbar = sb / rs, zb / rz
            gamma = math.sqrt((1.0 + sbar @ zbar) / 2.0)
            wbar = np.empty_like(sb)
            wbar[0] = (sbar[0] + zbar[0]) / (2.0 * gamma)
            wbar[1:] = (sbar[1:] - zbar[1:]) / (2.0 * gamma)
            self.soc_eta.append(math.sqrt(rs / rz))
            self.soc_wbar.append(wbar)
        self.lam = self.apply(z)

    @staticmethod
    def _hyperbolic(wbar: np.ndarray, v: np.ndarray) -> np.ndarray:
        # M(wbar) v with M = [[w0, w1'], [w1, I + w1 w1'/(1+w0)]]
        out = np.empty_like(v)
        w0, w1 = wbar[0], wbar[1:]
        dot = w1 @ v[1:]
        out[0] = w0 * v[0] + dot
        out[1:] = v[0] * w1 + v[1:] + (dot / (1.0 + w0)) * w1
        return out

    def apply(self, v: np.ndarray) -> np.ndarray:
        """W v."""
        out = np.empty(self.cone.dim)
        l = self.cone.l
        out[:l] = self.d_orth * v[:l]
        for sl, eta, wbar in zip(self.cone.soc_slices, self.soc_eta, self.soc_wbar):
            out[sl] = eta * self._hyperbolic(wbar, v[sl])
        return out

    def apply_inv(self, v: np.ndarray) -> np.ndarray:
        """W^{-1} v (W is symmetric, so this is also W^{-T} v)."""
        out = np.empty(self.cone.dim)
        l = self.cone.l
        out[:l] = v[:l] / self.d_orth
        for sl, eta, wbar in zip(self.cone.soc_slices, self.soc_eta, self.soc_wbar):
            jw = wbar.copy()
            jw[1:] = -jw[1:]
            out[sl] = self._hyperbolic(jw, v[sl]) / eta
        return out

    def wsq_matrix(self) -> sp.csc_matrix:
        """W'W = W^2 as a sparse matrix (diagonal plus small dense blocks)."""
        rows, cols, vals = [], [], []
        l = self.cone.l
        rows.extend(range(l))
        cols.extend(range(l))
        vals.extend(self.d_orth * self.d_orth)
        for sl, eta, wbar in zip(self.cone.soc_slices, self.soc_eta, self.soc_wbar):
            q = sl.stop - sl.start
            blk = 2.0 * np.outer(wbar, wbar)
            blk[0, 0] -= 1.0
            blk[np.arange(1, q), np.arange(1, q)] += 1.0
            blk *= eta * eta
            for i in range(q):
                for j in range(q):
                    rows.append(sl.start + i)
                    cols.append(sl.start + j)
                    vals.append(blk[i, j])
        return sp.csc_matrix((vals, (rows, cols)), shape=(self.cone.dim, self.cone.dim))


# ---------------------------------------------------------------------------
# KKT machinery
# ---------------------------------------------------------------------------

class _Kkt:
    """Factored 3x3 saddle system with static regularization + refinement."""

    def __init__(self, std: _StdForm, wsq: sp.csc_matrix):
        n, p, m = std.n, std.A.shape[0], std.G.shape[0]
        self.n, self.p, self.m = n, p, m
        reg = _STATIC_REG
        self.exact = sp.bmat(
            [
                [None, std.A.T, std.G.T],
                [std.A, None, None],
                [std.G, None, -wsq],
            ],
            format="csc",
        )
        regmat = sp.diags(
            np.concatenate([np.full(n, reg), np.full(p, -reg), np.full(m, -reg)])
        )
        self.lu = spla.splu((self.exact + regmat).tocsc())

    def solve(self, rx: np.ndarray, ry: np.ndarray, rz: np.ndarray):
        rhs = np.concatenate([rx, ry, rz])
        u = self.lu.solve(rhs)
        for _ in range(_REFINE_STEPS):
            resid = rhs - self.exact @ u
            if np.max(np.abs(resid)) < 1e-14 * (1.0 + np.max(np.abs(rhs))):
                break
            u = u + self.lu.solve(resid)
        n, p = self.n, self.p
        return u[:n], u[n : n + p], u[n + p :]


def _norm(v: np.ndarray) -> float:
    return float(np.linalg.norm(v)) if v.size else 0.0


# ---------------------------------------------------------------------------
# Main entry point
# ---------------------------------------------------------------------------

def solve(program: ConicProgram, tol: ToleranceConfig | None = None) -> Solution:
    """Solve a conic program to the tolerances in ``tol``.

    Returns a :class:`Solution` whose ``status`` is ``OPTIMAL`` only when an
    independent :func:`verify` pass of the returned point meets the feasibility
    and cone tolerances; infeasibility and unboundedness are reported as
    statuses (with certificate quality measured against ``feas_tol``), never
    raised.  ``NUMERICAL_FAILURE`` carries the residuals of the last iterate.
    """
    if tol is None:
        tol = ToleranceConfig()
    std = _to_std_form(program)

    if std.infeasible_reason is not None:
        return Solution(
            status=SolveStatus.INFEASIBLE,
            x=np.zeros(std.n),
            objective_value=math.nan,
            primal_residual=INF,
            cone_residual=INF,
            iterations=0,
            message=f"presolve: {std.infeasible_reason}",
        )

    if std.n == 0:
        return Solution(
            status=SolveStatus.OPTIMAL,
            x=np.zeros(0),
            objective_value=0.0,
            primal_residual=0.0,
            cone_residual=0.0,
            iterations=0,
        )

    cone = _Cone(std.dim_orth, std.soc_dims)
    A, G, b, c, h = std.A, std.G, std.b, std.c, std.h
    e = cone.identity()
    nu = cone.degree + 1

    # least-squares initialization (identity scaling), shifted into K
    init = _Kkt(std, sp.identity(cone.dim, format="csc"))
    x, _, zt = init.solve(np.zeros(std.n), b, h)
    s = cone.shift_into(-zt)
    xd, y, zd = init.solve(-c, np.zeros(A.shape[0]), np.zeros(cone.dim))
    z = cone.shift_into(zd)
    tau, kappa = 1.0, 1.0

    norm_b = max(1.0, _norm(b))
    norm_h = max(1.0, _norm(h))
    norm_c = max(1.0, _norm(c))

    best = None
    status = SolveStatus.NUMERICAL_FAILURE
    message = "iteration limit reached"
    iters_done = 0

    for it in range(1, tol.max_iter + 1):
        iters_done = it
        rx = A.T @ y + G.T @ z + c * tau
        ry = A @ x - b * tau
        rz = G @ x + s - h * tau
        rt = float(c @ x + b @ y + h @ z + kappa)
        mu = (s @ z + tau * kappa) / nu

        # candidate solution metrics (scaled back by tau)
        pres = max(_norm(ry) / norm_b, _norm(rz) / norm_h) / tau
        dres = _norm(rx) / norm_c / tau
        pcost = float(c @ x) / tau
        dcost = -float(b @ y + h @ z) / tau
        absgap = float(s @ z) / (tau * tau)
        relgap = absgap / max(1.0, abs(pcost), abs(dcost))

        cand = (max(pres, dres), relgap)
        if best is None or cand < best[0]:
            best = (cand, x / tau, it)

        if pres <= tol.feas_tol and dres <= tol.feas_tol and (
            relgap <= tol.gap_tol or absgap <= tol.gap_tol * 1e-3
        ):
            xs = x / tau
            rep = verify(program, xs)
            if rep.primal_residual <= tol.feas_tol and rep.cone_residual <= tol.cone_tol:
                return Solution(
                    status=SolveStatus.OPTIMAL,
                    x=xs,
                    objective_value=float(std.c @ xs),
                    primal_residual=rep.primal_residual,
                    cone_residual=rep.cone_residual,
                    iterations=it,
                )
            # keep polishing: the embedding allows further reduction

        # infeasibility / unboundedness certificates
        by_hz = float(b @ y + h @ z)
        if by_hz < -1e-12:
            if _norm(A.T @ y + G.T @ z) / (-by_hz) <= tol.feas_tol:
                return Solution(
                    status=SolveStatus.INFEASIBLE,
                    x=np.zeros(std.n),
                    objective_value=math.nan,
                    primal_residual=INF,
                    cone_residual=INF,
                    iterations=it,
                    message="primal infeasibility certificate found",
                )
        ctx = float(c @ x)
        if ctx < -1e-12:
            if max(_norm(A @ x), _norm(G @ x + s)) / (-ctx) <= tol.feas_tol:
                return Solution(
                    status=SolveStatus.UNBOUNDED,
                    x=np.zeros(std.n),
                    objective_value=-INF,
                    primal_residual=INF,
                    cone_residual=INF,
                    iterations=it,
                    message="dual infeasibility certificate found (primal unbounded)",
                )

        W = _Scaling(cone, s, z)
        kkt = _Kkt(std, W.wsq_matrix())
        lam = W.lam
        lam_sq = cone.prod(lam, lam)

        # direction for the tau column, reused by both predictor and corrector
        x1, y1, z1 = kkt.solve(-c, b, h)
        cbh1 = float(c @ x1 + b @ y1 + h @ z1)

        def direction(sigma: float, ds_extra: np.ndarray | None,
                      dk_extra: float):
            dsc = sigma * mu * e - lam_sq
            if ds_extra is not None:
                dsc = dsc - ds_extra
            dkc = sigma * mu - tau * kappa - dk_extra
            fac = 1.0 - sigma
            bz = -fac * rz - W.apply(cone.solve_prod(lam, dsc))
            x2, y2, z2 = kkt.solve(-fac * rx, -fac * ry, bz)
            cbh2 = float(c @ x2 + b @ y2 + h @ z2)
            denom = kappa / tau - cbh1
            if abs(denom) < 1e-300:
                denom = math.copysign(1e-300, denom if denom != 0 else 1.0)
            dtau = (fac * rt + dkc / tau + cbh2) / denom
            dx = x2 + dtau * x1
            dy = y2 + dtau * y1
            dz = z2 + dtau * z1
            ds = W.apply(cone.solve_prod(lam, dsc)) - W.apply(W.apply(dz))
            dkap = (dkc - kappa * dtau) / tau
            return dx, dy, dz, ds, dtau, dkap

        def step_len(ds, dz, dtau, dkap):
            a = min(cone.max_step(s, ds), cone.max_step(z, dz))
            if dtau < 0:
                a = min(a, -tau / dtau)
            if dkap < 0:
                a = min(a, -kappa / dkap)
            return min(1.0, _STEP_BACKOFF * a)

        # predictor
        dxa, dya, dza, dsa, dta, dka = direction(0.0, None, 0.0)
        alpha_aff = step_len(dsa, dza, dta, dka)
        mu_aff = (
            (s + alpha_aff * dsa) @ (z + alpha_aff * dza)
            + (tau + alpha_aff * dta) * (kappa + alpha_aff * dka)
        ) / nu
        sigma = min(1.0, max(0.0, mu_aff / mu)) ** 3

        # corrector with Mehrotra second-order term
        corr = cone.prod(W.apply_inv(dsa), W.apply(dza))
        dx, dy, dz, ds, dtau, dkap = direction(sigma, corr, dta * dka)
        alpha = step_len(ds, dz, dtau, dkap)

        if alpha <= 1e-9:
            message = "step size collapsed"
            break

        x = x + alpha * dx
        y = y + alpha * dy
        z = z + alpha * dz
        s = s + alpha * ds
        tau = tau + alpha * dtau
        kappa = kappa + alpha * dkap

    xs = best[1] if best is not None else x / tau
    rep = verify(program, xs)
    return Solution(
        status=status,
        x=xs,
        objective_value=float(std.c @ xs),
        primal_residual=rep.primal_residual,
        cone_residual=rep.cone_residual,
        iterations=iters_done,
        message=message,
    )
