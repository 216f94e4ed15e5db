"""Stage-1 SOCP dispatch model and its participation-capped variant.

The network physics use the auxiliary-variable relaxation on squared
voltages: per bus ``U = V^2/sqrt(2)``, per line the voltage-product pair
``R = V_n V_i cos(t_n - t_i)`` (symmetric) and ``I = V_n V_i sin(t_n - t_i)``
(antisymmetric, oriented from->to).  With the series admittance
``G + jB = 1/(r + jx)`` the branch flows are linear,

    P_ni = sqrt2*G*U_n - G*R - B*I
    Q_ni = -sqrt2*B*U_n + B*R - G*I

and the product identity relaxes to the rotated cone
``2 U_n U_i >= R^2 + I^2``, which holds with equality exactly at AC states
(the test suite checks this against a nonlinear two-bus oracle).  Both
directions of every line share one (R, I) pair and one cone.

The modified program used by the chance-constraint loop keeps the same
physics but (a) fixes each must-take PV injection to a ``(ip - tau)/ip``
slice of its capacity and (b) caps total scheduled DER active/reactive
power system-wide.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .conic import ConicProgram, Solution, SolveStatus
from .errors import DomainError, ExtractionError, ModelError
from .grid import AssetKind, Network, Prices, line_admittance

SQRT2 = math.sqrt(2.0)
EXACTNESS_TOL = 1e-6


@dataclass
class VariableMap:
    """Indices of every decision variable in the built program."""

    u: dict[int, int] = field(default_factory=dict)            # bus id -> U
    grid_p: int = -1
    grid_q: int = -1
    r: dict[int, int] = field(default_factory=dict)            # line -> R
    i: dict[int, int] = field(default_factory=dict)            # line -> I
    p_flow: dict[tuple[int, int], int] = field(default_factory=dict)
    q_flow: dict[tuple[int, int], int] = field(default_factory=dict)
    asset: dict[int, dict[str, int]] = field(default_factory=dict)
    line_cone: dict[int, int] = field(default_factory=dict)
    line_u: dict[int, tuple[int, int]] = field(default_factory=dict)
    cap_p_row: int | None = None
    cap_q_row: int | None = None


@dataclass
class Dispatch:
    """Physical-unit view of one optimal schedule."""

    grid_p_kw: float
    grid_q_kvar: float
    voltages: dict[int, float]                       # bus id -> pu
    flows: dict[tuple[int, int], tuple[float, float]]  # (from, to) -> (kW, kVAr)
    asset_p_kw: dict[int, float]
    asset_q_kvar: dict[int, float]
    storage_soc_kwh: dict[int, float]
    objective_usd: float


@dataclass(frozen=True)
class ParticipationRatios:
    """Dispatched DER power as a fraction of total system load."""

    i_p: float
    i_q: float

    @property
    def exceeds_load(self) -> bool:
        return self.i_p > 1.0 or self.i_q > 1.0


@dataclass
class ExactnessReport:
    gaps: list[float]          # per line, 2*U_n*U_i - R^2 - I^2, floored at 0
    max_gap: float
    exact: bool
    tolerance: float = EXACTNESS_TOL


def _build(
    net: Network,
    prices: Prices,
    pv1_factor: float | None,
    der_caps_pu: tuple[float, float] | None,
) -> tuple[ConicProgram, VariableMap]:
    base = net.base_kva
    known = {b.id for b in net.buses}
    for a in net.assets:
        if a.bus not in known:
            raise ModelError(f"asset {a.kind.value} references missing bus {a.bus}")

    prog = ConicProgram()
    vm = VariableMap()
    sub = net.substation.id

    for b in net.buses:
        lo = b.v_min_pu**2 / SQRT2
        hi = b.v_max_pu**2 / SQRT2
        if b.id == sub:
            lo = hi = 1.0 / SQRT2  # slack anchored at 1 pu
        vm.u[b.id] = prog.add_var(f"U[{b.id}]", lo=lo, hi=hi)

    vm.grid_p = prog.add_var("Pg", cost=prices.wholesale * base)
    vm.grid_q = prog.add_var("Qg")

    # supply-side terms of the two nodal balances, keyed by bus
    p_bal: dict[int, dict[int, float]] = {b.id: {} for b in net.buses}
    q_bal: dict[int, dict[int, float]] = {b.id: {} for b in net.buses}
    p_bal[sub][vm.grid_p] = 1.0
    q_bal[sub][vm.grid_q] = 1.0

    for l, ln in enumerate(net.lines):
        g, bsus = line_admittance(ln)
        cap = ln.capacity_kw / base
        f, t = ln.from_bus, ln.to_bus
        rv = prog.add_var(f"R[{f}-{t}]")
        iv = prog.add_var(f"I[{f}-{t}]")
        vm.r[l], vm.i[l] = rv, iv
        pf = prog.add_var(f"Pl[{f}->{t}]", lo=-cap, hi=cap)
        pr = prog.add_var(f"Pl[{t}->{f}]", lo=-cap, hi=cap)
        qf = prog.add_var(f"Ql[{f}->{t}]")
        qr = prog.add_var(f"Ql[{t}->{f}]")
        vm.p_flow[(l, 0)], vm.p_flow[(l, 1)] = pf, pr
        vm.q_flow[(l, 0)], vm.q_flow[(l, 1)] = qf, qr

        uf, ut = vm.u[f], vm.u[t]
        prog.add_eq({pf: 1.0, uf: -SQRT2 * g, rv: g, iv: bsus}, 0.0)
        prog.add_eq({pr: 1.0, ut: -SQRT2 * g, rv: g, iv: -bsus}, 0.0)
        prog.add_eq({qf: 1.0, uf: SQRT2 * bsus, rv: -bsus, iv: g}, 0.0)
        prog.add_eq({qr: 1.0, ut: SQRT2 * bsus, rv: -bsus, iv: -g}, 0.0)
        vm.line_cone[l] = prog.add_rotated_cone(uf, ut, [rv, iv])
        vm.line_u[l] = (uf, ut)

        p_bal[f][pf] = -1.0
        p_bal[t][pr] = -1.0
        q_bal[f][qf] = -1.0
        q_bal[t][qr] = -1.0

    cap_p_terms: dict[int, float] = {}
    cap_q_terms: dict[int, float] = {}

    for k, a in enumerate(net.assets):
        bus = net.bus_by_id(a.bus)
        if a.kind == AssetKind.STORAGE:
            prm = a.params
            ps = prog.add_var(
                f"Ps[{k}@{a.bus}]", lo=prm.r_min_kw / base, hi=prm.r_max_kw / base
            )
            se = prog.add_var(
                f"SE[{k}@{a.bus}]",
                lo=prm.soc_min_kwh / base,
                hi=prm.soc_max_kwh / base,
            )
            prog.add_eq({se: 1.0, ps: 1.0}, prm.available_kwh / base)
            vm.asset[k] = {"p": ps, "soc": se}
            p_bal[a.bus][ps] = 1.0
        elif a.kind == AssetKind.DEMAND_RESPONSE:
            cap = a.params.dr_max * bus.p_demand_kw / base
            pdr = prog.add_var(f"Pdr[{k}@{a.bus}]", lo=0.0, hi=cap,
                               cost=prices.dr * base)
            qdr = prog.add_var(f"Qdr[{k}@{a.bus}]")
            # curtailment at the bus power factor: Q tracks P proportionally
            ratio = (bus.q_demand_kvar / bus.p_demand_kw
                     if bus.p_demand_kw > 0 else 0.0)
            prog.add_eq({qdr: 1.0, pdr: -ratio}, 0.0)
            vm.asset[k] = {"p": pdr, "q": qdr}
            p_bal[a.bus][pdr] = 1.0
            q_bal[a.bus][qdr] = 1.0
            cap_p_terms[pdr] = 1.0
            cap_q_terms[qdr] = 1.0
        elif a.kind == AssetKind.CAPACITOR:
            qcc = prog.add_var(
                f"Qcc[{k}@{a.bus}]", lo=0.0, hi=a.params.q_max_kvar / base
            )
            vm.asset[k] = {"q": qcc}
            q_bal[a.bus][qcc] = 1.0
        elif a.kind == AssetKind.PV2:
            p2 = prog.add_var(
                f"Ppv2[{k}@{a.bus}]", lo=0.0, hi=a.params.p_cap_kw / base,
                cost=prices.pv * base,
            )
            vm.asset[k] = {"p": p2}
            p_bal[a.bus][p2] = 1.0
            cap_p_terms[p2] = 1.0
        else:  # PV1 / PV3, inverter-coupled
            tag = "Ppv1" if a.kind == AssetKind.PV1 else "Ppv3"
            pv = prog.add_var(f"{tag}[{k}@{a.bus}]", cost=prices.pv * base)
            qv = prog.add_var(f"Q{tag[1:]}[{k}@{a.bus}]")
            scap = prog.add_var(f"Scap[{k}@{a.bus}]")
            prog.fix_var(scap, a.params.s_cap_kva / base / SQRT2)
            prog.add_rotated_cone(scap, scap, [pv, qv])
            if a.kind == AssetKind.PV1:
                # must-take: active output pinned to (scaled) capacity
                factor = 1.0 if pv1_factor is None else pv1_factor
                prog.fix_var(pv, factor * a.params.p_cap_kw / base)
            else:
                prog.var_lo[pv] = 0.0
                prog.var_hi[pv] = a.params.p_cap_kw / base
            vm.asset[k] = {"p": pv, "q": qv, "scap": scap}
            p_bal[a.bus][pv] = 1.0
            q_bal[a.bus][qv] = 1.0
            cap_p_terms[pv] = 1.0
            cap_q_terms[qv] = 1.0

    for b in net.buses:
        prog.add_eq(p_bal[b.id], b.p_demand_kw / base)
        prog.add_eq(q_bal[b.id], b.q_demand_kvar / base)

    if der_caps_pu is not None:
        p_cap, q_cap = der_caps_pu
        vm.cap_p_row = prog.add_ineq(cap_p_terms, hi=p_cap)
        vm.cap_q_row = prog.add_ineq(cap_q_terms, hi=q_cap)

    return prog, vm


def build_stage1(net: Network, prices: Prices) -> tuple[ConicProgram, VariableMap]:
    """Day-ahead dispatch program: full DER capability, no participation caps."""
    return _build(net, prices, pv1_factor=None, der_caps_pu=None)


def build_modified(
    net: Network,
    prices: Prices,
    ratios: ParticipationRatios,
    tau: float,
) -> tuple[ConicProgram, VariableMap]:
    """Participation-capped dispatch program for reduction coefficient ``tau``.

    Must-take PV output is scaled to ``(ip - tau)/ip`` of capacity; total
    scheduled DER active power is capped at ``(ip - tau)`` of system load and
    reactive power at ``(ip - tau)/ip * iq`` of system reactive load.
    """
    ip, iq = ratios.i_p, ratios.i_q
    if tau < 0:
        raise DomainError(f"tau must be nonnegative, got {tau}")
    if ip == 0.0 and tau > 0.0:
        raise DomainError("tau > 0 with zero participation ratio")
    if tau > ip + 1e-12:
        raise DomainError(f"tau {tau} exceeds participation ratio {ip}")
    tau = min(tau, ip)
    factor = 1.0 if ip == 0.0 else (ip - tau) / ip
    base = net.base_kva
    p_cap = (ip - tau) * net.total_demand_kw() / base
    q_cap = factor * iq * net.total_demand_kvar() / base
    return _build(net, prices, pv1_factor=factor, der_caps_pu=(p_cap, q_cap))


def extract_dispatch(net: Network, vm: VariableMap, sol: Solution) -> Dispatch:
    """Map an optimal solution vector back to physical units."""
    if sol.status != SolveStatus.OPTIMAL:
        raise DomainError(f"cannot extract dispatch from status {sol.status.value}")
    x = sol.x
    base = net.base_kva

    voltages = {}
    for bus_id, j in vm.u.items():
        usq = SQRT2 * x[j]  # = V^2
        if usq < -1e-9:
            raise ExtractionError(f"negative squared voltage at bus {bus_id}: {usq}")
        voltages[bus_id] = math.sqrt(max(usq, 0.0))

    flows = {}
    for l, ln in enumerate(net.lines):
        f, t = ln.from_bus, ln.to_bus
        flows[(f, t)] = (x[vm.p_flow[(l, 0)]] * base, x[vm.q_flow[(l, 0)]] * base)
        flows[(t, f)] = (x[vm.p_flow[(l, 1)]] * base, x[vm.q_flow[(l, 1)]] * base)

    asset_p, asset_q, soc = {}, {}, {}
    for k, fields_ in vm.asset.items():
        asset_p[k] = x[fields_["p"]] * base if "p" in fields_ else 0.0
        asset_q[k] = x[fields_["q"]] * base if "q" in fields_ else 0.0
        if "soc" in fields_:
            soc[k] = x[fields_["soc"]] * base

    return Dispatch(
        grid_p_kw=x[vm.grid_p] * base,
        grid_q_kvar=x[vm.grid_q] * base,
        voltages=voltages,
        flows=flows,
        asset_p_kw=asset_p,
        asset_q_kvar=asset_q,
        storage_soc_kwh=soc,
        objective_usd=sol.objective_value,
    )


def participation_ratios(dispatch: Dispatch, net: Network) -> ParticipationRatios:
    """Active/reactive DER share of total load.

    Storage counts toward the active ratio only while discharging; charging
    is bulk-grid consumption, not DER supply.
    """
    d_p = net.total_demand_kw()
    d_q = net.total_demand_kvar()
    if d_p <= 0:
        raise DomainError("total active demand is zero")

    p_sum = 0.0
    q_sum = 0.0
    for k, a in enumerate(net.assets):
        if a.kind == AssetKind.STORAGE:
            p_sum += max(dispatch.asset_p_kw.get(k, 0.0), 0.0)
        elif a.kind == AssetKind.CAPACITOR:
            q_sum += dispatch.asset_q_kvar.get(k, 0.0)
        elif a.kind == AssetKind.PV2:
            p_sum += dispatch.asset_p_kw.get(k, 0.0)
        else:  # DR, PV1, PV3 contribute on both sides
            p_sum += dispatch.asset_p_kw.get(k, 0.0)
            q_sum += dispatch.asset_q_kvar.get(k, 0.0)

    return ParticipationRatios(
        i_p=p_sum / d_p,
        i_q=q_sum / d_q if d_q > 0 else 0.0,
    )


def exactness_report(vm: VariableMap, sol: Solution,
                     tol: float = EXACTNESS_TOL) -> ExactnessReport:
    """Per-line relaxation gaps ``2 U_n U_i - R^2 - I^2`` of a solution."""
    if sol.status != SolveStatus.OPTIMAL:
        raise DomainError(f"no exactness report for status {sol.status.value}")
    x = sol.x
    gaps = []
    for l in sorted(vm.r):
        rv, iv = x[vm.r[l]], x[vm.i[l]]
        uf, ut = vm.line_u[l]
        gap = 2.0 * x[uf] * x[ut] - rv * rv - iv * iv
        gaps.append(max(gap, 0.0))
    max_gap = max(gaps) if gaps else 0.0
    return ExactnessReport(gaps=gaps, max_gap=max_gap, exact=max_gap <= tol,
                           tolerance=tol)
