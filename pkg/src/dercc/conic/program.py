"""Solver-agnostic second-order-cone program container and verification.

A :class:`ConicProgram` holds a linear objective, linear equalities, two-sided
linear inequalities, variable bounds, and rotated second-order cones
``2*u*v >= ||w||^2, u >= 0, v >= 0``.  Rotated cones are first-class here
(the line-flow relaxation is naturally rotated); whether a solver reduces
them to standard cones internally is its own business.

:func:`verify` recomputes every residual from scratch given only the program
and a candidate point, independent of any solver bookkeeping.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ValidationError

INF = math.inf


class SolveStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass
class ToleranceConfig:
    """Quality contract for :func:`dercc.conic.solve`."""

    feas_tol: float = 1e-8
    gap_tol: float = 1e-6  # relative duality gap
    cone_tol: float = 1e-8
    max_iter: int = 100


@dataclass(frozen=True)
class RotatedCone:
    """Indices (u, v, w...) with membership 2*x[u]*x[v] >= ||x[w]||^2."""

    u: int
    v: int
    w: tuple[int, ...]


class ConicProgram:
    """Incrementally built conic program.

    Variables are created with :meth:`add_var`; constraints reference them by
    index.  ``var_names`` carry diagnostic labels only.
    """

    def __init__(self):
        self.n_vars = 0
        self.var_names: list[str] = []
        self.objective: dict[int, float] = {}
        self.var_lo: list[float] = []
        self.var_hi: list[float] = []
        # rows as (index array, coefficient array, rhs / (lo, hi))
        self.linear_eq: list[tuple[list[int], list[float], float]] = []
        self.linear_ineq: list[tuple[list[int], list[float], float, float]] = []
        self.soc_cones: list[RotatedCone] = []

    def add_var(self, name: str, lo: float = -INF, hi: float = INF,
                cost: float = 0.0) -> int:
        # contradictory bounds stay representable; solve() reports Infeasible
        idx = self.n_vars
        self.n_vars += 1
        self.var_names.append(name)
        self.var_lo.append(lo)
        self.var_hi.append(hi)
        if cost != 0.0:
            self.objective[idx] = self.objective.get(idx, 0.0) + cost
        return idx

    def add_cost(self, idx: int, cost: float) -> None:
        self._check(idx)
        self.objective[idx] = self.objective.get(idx, 0.0) + cost

    def add_eq(self, coeffs: dict[int, float], rhs: float) -> int:
        """Add sum(c_j x_j) == rhs; returns the equality row index."""
        idxs, vals = self._row(coeffs)
        self.linear_eq.append((idxs, vals, rhs))
        return len(self.linear_eq) - 1

    def add_ineq(self, coeffs: dict[int, float], lo: float = -INF,
                 hi: float = INF) -> int:
        """Add lo <= sum(c_j x_j) <= hi; returns the inequality row index."""
        idxs, vals = self._row(coeffs)
        self.linear_ineq.append((idxs, vals, lo, hi))
        return len(self.linear_ineq) - 1

    def add_rotated_cone(self, u: int, v: int, w: list[int]) -> int:
        for j in (u, v, *w):
            self._check(j)
        self.soc_cones.append(RotatedCone(u, v, tuple(w)))
        return len(self.soc_cones) - 1

    def fix_var(self, idx: int, value: float) -> None:
        self._check(idx)
        self.var_lo[idx] = value
        self.var_hi[idx] = value

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for j, cj in self.objective.items():
            c[j] = cj
        return c

    def eval_row(self, idxs, vals, x) -> float:
        return float(sum(v * x[j] for j, v in zip(idxs, vals)))

    def _row(self, coeffs):
        idxs, vals = [], []
        for j, cj in coeffs.items():
            self._check(j)
            if cj != 0.0:
                idxs.append(j)
                vals.append(float(cj))
        return idxs, vals

    def _check(self, idx: int) -> None:
        if not 0 <= idx < self.n_vars:
            raise ValidationError(f"variable index {idx} out of range")


@dataclass
class Solution:
    status: SolveStatus
    x: np.ndarray
    objective_value: float
    primal_residual: float
    cone_residual: float
    iterations: int
    message: str = ""


@dataclass
class ResidualReport:
    """Worst-case constraint violations of a candidate point."""

    primal_residual: float
    cone_residual: float
    worst_eq: tuple[int, float]      # (row, scaled violation)
    worst_ineq: tuple[int, float]
    worst_bound: tuple[int, float]   # (variable, violation)
    worst_cone: tuple[int, float]    # (cone, max(0, ||w||^2 - 2uv))
    eq_violations: np.ndarray = field(repr=False, default=None)
    cone_gaps: np.ndarray = field(repr=False, default=None)


def verify(program: ConicProgram, x) -> ResidualReport:
    """Recompute all residuals of ``x`` against ``program`` from scratch.

    Row violations are scaled by ``max(1, |rhs|)``.  The report depends only
    on ``(program, x)``; it never consults solver state.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (program.n_vars,):
        raise ValidationError(
            f"x has length {x.size}, program has {program.n_vars} variables"
        )

    eq_v = np.zeros(max(1, len(program.linear_eq)))
    worst_eq = (-1, 0.0)
    for i, (idxs, vals, rhs) in enumerate(program.linear_eq):
        v = abs(program.eval_row(idxs, vals, x) - rhs) / max(1.0, abs(rhs))
        eq_v[i] = v
        if v > worst_eq[1]:
            worst_eq = (i, v)

    worst_ineq = (-1, 0.0)
    for i, (idxs, vals, lo, hi) in enumerate(program.linear_ineq):
        a = program.eval_row(idxs, vals, x)
        v = 0.0
        if lo > -INF:
            v = max(v, (lo - a) / max(1.0, abs(lo)))
        if hi < INF:
            v = max(v, (a - hi) / max(1.0, abs(hi)))
        if v > worst_ineq[1]:
            worst_ineq = (i, v)

    worst_bound = (-1, 0.0)
    for j in range(program.n_vars):
        v = 0.0
        lo, hi = program.var_lo[j], program.var_hi[j]
        if lo > -INF:
            v = max(v, (lo - x[j]) / max(1.0, abs(lo)))
        if hi < INF:
            v = max(v, (x[j] - hi) / max(1.0, abs(hi)))
        if v > worst_bound[1]:
            worst_bound = (j, v)

    gaps = np.zeros(max(1, len(program.soc_cones)))
    worst_cone = (-1, 0.0)
    for i, cone in enumerate(program.soc_cones):
        wsq = sum(x[j] * x[j] for j in cone.w)
        gaps[i] = 2.0 * x[cone.u] * x[cone.v] - wsq
        v = max(0.0, -gaps[i])
        if v > worst_cone[1]:
            worst_cone = (i, v)

    primal = max(worst_eq[1], worst_ineq[1], worst_bound[1])
    return ResidualReport(
        primal_residual=primal,
        cone_residual=worst_cone[1],
        worst_eq=worst_eq,
        worst_ineq=worst_ineq,
        worst_bound=worst_bound,
        worst_cone=worst_cone,
        eq_violations=eq_v,
        cone_gaps=gaps,
    )


def dump_program(program: ConicProgram) -> str:
    """Plain-text dump, one constraint per line, for external cross-checks.

    Format:
        var <name> in [lo, hi] cost <c>
        eq: <c>*<name> + ... == rhs
        ineq: lo <= <c>*<name> + ... <= hi
        rcone: 2*<u>*<v> >= <w1>^2 + <w2>^2 + ...
    """
    c = program.objective
    out = []
    for j in range(program.n_vars):
        cost = c.get(j, 0.0)
        out.append(
            f"var {program.var_names[j]} in [{program.var_lo[j]:g}, "
            f"{program.var_hi[j]:g}] cost {cost:g}"
        )

    def terms(idxs, vals):
        return " + ".join(
            f"{v:g}*{program.var_names[j]}" for j, v in zip(idxs, vals)
        )

    for idxs, vals, rhs in program.linear_eq:
        out.append(f"eq: {terms(idxs, vals)} == {rhs:g}")
    for idxs, vals, lo, hi in program.linear_ineq:
        out.append(f"ineq: {lo:g} <= {terms(idxs, vals)} <= {hi:g}")
    for cone in program.soc_cones:
        w = " + ".join(f"{program.var_names[j]}^2" for j in cone.w)
        out.append(
            f"rcone: 2*{program.var_names[cone.u]}*{program.var_names[cone.v]}"
            f" >= {w}"
        )
    return "\n".join(out) + "\n"
