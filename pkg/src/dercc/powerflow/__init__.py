"""Radial AC power flow by backward/forward sweep, and the scenario-to-
compensation pipeline built on top of it.

The sweep serves as the scenario-evaluation engine: constant-power loads and
DER injections, series-impedance branches, slack bus fixed at 1.0 pu, zero
angle.  The hot kernel exists twice: a compiled Cython module and a pure
Python twin.  The compiled one is selected at import when present; set
``DERCC_PURE_PYTHON=1`` to force the fallback (``benchmarks/bench_sweep.py``
times the two against each other).
"""

from __future__ import annotations

import cmath
import math
import os
from dataclasses import dataclass, field

import numpy as np

from ..errors import DomainError, TopologyError
from ..grid import AssetKind, Network, PV_KINDS

if os.environ.get("DERCC_PURE_PYTHON"):
    from ._sweep_py import sweep_kernel

    KERNEL = "python"
else:
    try:
        from ._sweep_cy import sweep_kernel

        KERNEL = "compiled"
    except ImportError:
        from ._sweep_py import sweep_kernel

        KERNEL = "python"

DEFAULT_PF_TOL = 1e-8
DEFAULT_PF_MAX_ITER = 100


@dataclass(frozen=True)
class InjectionSet:
    """Per-bus DER/extra net injections in kW/kVAr, slack bus excluded.

    Nominal bus demand is applied by :func:`solve_pf` itself, so an empty
    injection set means "loads only".
    """

    p_kw: dict[int, float] = field(default_factory=dict)
    q_kvar: dict[int, float] = field(default_factory=dict)


@dataclass
class PfSolution:
    v_mag: dict[int, float]          # pu
    v_ang: dict[int, float]          # rad
    slack_p_kw: float
    slack_q_kvar: float
    flows_from: dict[tuple[int, int], complex]  # kVA at sending end, per line
    flows_to: dict[tuple[int, int], complex]    # kVA at receiving end
    loss_p_kw: float
    loss_q_kvar: float
    iterations: int
    converged: bool
    max_mismatch_pu: float


@dataclass(frozen=True)
class CompensationRecord:
    """Slack-injection deviation of one scenario from the schedule."""

    scenario_id: int
    delta_p_kw: float
    delta_q_kvar: float
    converged: bool = True


class SweepPlan:
    """Precomputed traversal arrays for one network (immutable, reusable)."""

    def __init__(self, net: Network):
        n = len(net.buses)
        self.net = net
        self.index = {b.id: i for i, b in enumerate(net.buses)}
        self.root = self.index[net.substation.id]

        adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        self.lf = np.empty(len(net.lines), dtype=np.int32)
        self.lt = np.empty(len(net.lines), dtype=np.int32)
        zr = np.empty(len(net.lines))
        zi = np.empty(len(net.lines))
        for l, ln in enumerate(net.lines):
            f, t = self.index[ln.from_bus], self.index[ln.to_bus]
            self.lf[l], self.lt[l] = f, t
            zr[l], zi[l] = ln.resistance, ln.reactance
            adj[f].append((t, l))
            adj[t].append((f, l))

        order = [self.root]
        parent = np.full(n, -1, dtype=np.int32)
        line_of = np.full(n, -1, dtype=np.int32)
        seen = [False] * n
        seen[self.root] = True
        head = 0
        while head < len(order):
            u = order[head]
            head += 1
            for v, l in adj[u]:
                if not seen[v]:
                    seen[v] = True
                    parent[v] = u
                    line_of[v] = l
                    order.append(v)
        if len(order) != n:
            raise TopologyError("network is not a tree rooted at the substation")

        self.order = np.asarray(order, dtype=np.int32)
        self.parent = parent
        self.line_of = line_of
        self.zr, self.zi = zr, zi
        y = 1.0 / (zr + 1j * zi)
        self.yr, self.yi = np.ascontiguousarray(y.real), np.ascontiguousarray(y.imag)
        base = net.base_kva
        self.load_pu = np.array(
            [complex(b.p_demand_kw, b.q_demand_kvar) / base for b in net.buses]
        )


def _plan(net: Network) -> SweepPlan:
    if "sweep_plan" not in net._cache:
        net._cache["sweep_plan"] = SweepPlan(net)
    return net._cache["sweep_plan"]


def solve_pf(
    net: Network,
    injections: InjectionSet | None = None,
    tol: float = DEFAULT_PF_TOL,
    max_iter: int = DEFAULT_PF_MAX_ITER,
) -> PfSolution:
    """Backward/forward sweep power flow on a radial network.

    Bus net power is ``injections - nominal demand``; the slack bus holds
    1.0 pu at zero angle and absorbs the total mismatch.  Non-convergence is
    reported through ``converged=False`` on the returned solution, never
    raised.
    """
    plan = _plan(net)
    n = len(net.buses)
    base = net.base_kva

    s = -plan.load_pu.copy()
    if injections is not None:
        for bus_id, p in injections.p_kw.items():
            s[plan.index[bus_id]] += p / base
        for bus_id, q in injections.q_kvar.items():
            s[plan.index[bus_id]] += 1j * q / base

    vr = np.ones(n)
    vi = np.zeros(n)
    jr = np.zeros(len(net.lines))
    ji = np.zeros(len(net.lines))
    iar = np.zeros(n)
    iai = np.zeros(n)
    sr = np.ascontiguousarray(s.real)
    si = np.ascontiguousarray(s.imag)

    iters, mismatch = sweep_kernel(
        plan.order, plan.parent, plan.line_of, plan.lf, plan.lt,
        plan.zr, plan.zi, plan.yr, plan.yi,
        sr, si, vr, vi, jr, ji, iar, iai, float(tol), int(max_iter),
    )

    v = vr + 1j * vi
    y = plan.yr + 1j * plan.yi
    vf, vt = v[plan.lf], v[plan.lt]
    s_from = vf * np.conj(y * (vf - vt)) * base
    s_to = vt * np.conj(y * (vt - vf)) * base
    loss = s_from + s_to

    # slack generation covers its own demand plus everything it exports
    i_out = 0j
    for l in range(len(net.lines)):
        if plan.lf[l] == plan.root:
            i_out += y[l] * (v[plan.root] - v[plan.lt[l]])
        elif plan.lt[l] == plan.root:
            i_out += y[l] * (v[plan.root] - v[plan.lf[l]])
    s_slack = v[plan.root] * np.conj(i_out) * base + complex(
        net.substation.p_demand_kw, net.substation.q_demand_kvar
    )
    if injections is not None:
        sub_id = net.substation.id
        s_slack -= complex(
            injections.p_kw.get(sub_id, 0.0), injections.q_kvar.get(sub_id, 0.0)
        )

    keys = [(ln.from_bus, ln.to_bus) for ln in net.lines]
    return PfSolution(
        v_mag={b.id: abs(v[i]) for i, b in enumerate(net.buses)},
        v_ang={b.id: cmath.phase(v[i]) for i, b in enumerate(net.buses)},
        slack_p_kw=float(s_slack.real),
        slack_q_kvar=float(s_slack.imag),
        flows_from=dict(zip(keys, s_from)),
        flows_to=dict(zip(keys, s_to)),
        loss_p_kw=float(np.sum(loss.real)),
        loss_q_kvar=float(np.sum(loss.imag)),
        iterations=int(iters),
        converged=bool(mismatch <= tol),
        max_mismatch_pu=float(mismatch),
    )


def scenario_injections(dispatch, scenario, net: Network) -> InjectionSet:
    """Realize one scenario against a scheduled dispatch.

    DR delivers ``dr_fraction`` of its scheduled curtailment (P and Q scale
    together); PV types 1/3 deliver ``pv_fraction`` of scheduled apparent
    power, preserving the scheduled power-factor angle; PV type 2 scales
    active power; storage and capacitors hold their scheduled setpoints.
    """
    p: dict[int, float] = {}
    q: dict[int, float] = {}

    def add(bus, dp, dq):
        p[bus] = p.get(bus, 0.0) + dp
        q[bus] = q.get(bus, 0.0) + dq

    for i, a in enumerate(net.assets):
        sp = dispatch.asset_p_kw.get(i, 0.0)
        sq = dispatch.asset_q_kvar.get(i, 0.0)
        if a.kind == AssetKind.DEMAND_RESPONSE:
            f = scenario.dr_fraction[i]
            add(a.bus, f * sp, f * sq)
        elif a.kind in PV_KINDS:
            f = scenario.pv_fraction[i]
            if a.kind == AssetKind.PV2:
                add(a.bus, f * sp, 0.0)
            else:
                add(a.bus, f * sp, f * sq)
        else:
            add(a.bus, sp, sq)
    return InjectionSet(p_kw=p, q_kvar=q)


def compensation(pf: PfSolution, dispatch, scenario_id: int = -1) -> CompensationRecord:
    """Deviation of realized slack injection from the scheduled grid purchase."""
    if not pf.converged:
        raise DomainError("power flow did not converge; no compensation defined")
    return CompensationRecord(
        scenario_id=scenario_id,
        delta_p_kw=pf.slack_p_kw - dispatch.grid_p_kw,
        delta_q_kvar=pf.slack_q_kvar - dispatch.grid_q_kvar,
        converged=True,
    )
