"""Two-stage chance-constrained scheduling loop.

Stage 1 solves the full dispatch program and measures the DER participation
ratios.  Stage 2 draws one fixed Monte Carlo scenario set (common random
numbers: the set is sampled once and reused by every iteration, so
iteration-to-iteration changes in the violation index are attributable to
the dispatch alone), then repeatedly

    1. solves the participation-capped program at the current ``tau``,
    2. runs a power flow per scenario against that schedule,
    3. computes the violation index, the fraction of scenarios whose
       compensated active power exceeds the threshold (non-convergent
       power flows count as violations),

stepping ``tau`` upward until the index drops to ``epsilon`` (Satisfied) or
``tau`` exhausts the stage-1 participation ratio (Exhausted).
"""

from __future__ import annotations

import csv
import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .conic import SolveStatus, ToleranceConfig, solve
from .errors import DomainError, ModelError
from .grid import Network, Prices
from .opf import (
    Dispatch,
    ParticipationRatios,
    build_modified,
    build_stage1,
    extract_dispatch,
    participation_ratios,
)
from .powerflow import (
    CompensationRecord,
    scenario_injections,
    solve_pf,
)
from .scenarios import Scenario, UncertaintyModel, sample_scenarios


class CcStatus(enum.Enum):
    SATISFIED = "satisfied"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class CcConfig:
    threshold_p_kw: float = 200.0
    epsilon: float = 0.05
    n_scenarios: int = 1000
    seed: int = 0
    tau_step: float = 0.01
    max_iterations: int = 200
    threshold_q_kvar: float | None = None  # optional OR-ed reactive criterion
    workers: int = 1
    pf_tol: float = 1e-8
    pf_max_iter: int = 100
    solver_tol: ToleranceConfig = field(default_factory=ToleranceConfig)

    def __post_init__(self):
        if self.threshold_p_kw <= 0:
            raise DomainError("threshold_p_kw must be > 0")
        if not 0.0 < self.epsilon < 1.0:
            raise DomainError("epsilon must lie strictly in (0, 1)")
        if self.tau_step <= 0:
            raise DomainError("tau_step must be > 0")
        if self.n_scenarios < 1:
            raise DomainError("n_scenarios must be >= 1")


@dataclass
class IterationRecord:
    iteration: int
    tau: float
    i_p: float
    i_q: float
    z_vio: float
    cost_usd: float


@dataclass
class CcResult:
    status: CcStatus
    final_tau: float
    ratios_initial: ParticipationRatios
    ratios_final: ParticipationRatios
    z_vio_final: float
    cost_final: float
    dispatch_final: Dispatch
    trace: list[IterationRecord]
    records_final: list[CompensationRecord]


def violation_index(
    records: list[CompensationRecord],
    threshold_p_kw: float,
    threshold_q_kvar: float | None = None,
) -> float:
    """Fraction of scenarios violating the compensated-power threshold.

    A record violates when |delta_p| exceeds the threshold, when the
    optional reactive threshold is exceeded, or when its power flow did not
    converge (conservative accounting).
    """
    if not records:
        raise DomainError("violation index of an empty record list")
    bad = 0
    for r in records:
        if not r.converged or abs(r.delta_p_kw) > threshold_p_kw:
            bad += 1
        elif threshold_q_kvar is not None and abs(r.delta_q_kvar) > threshold_q_kvar:
            bad += 1
    return bad / len(records)


def evaluate_scenarios(
    net: Network,
    dispatch: Dispatch,
    scenarios: list[Scenario],
    config: CcConfig,
) -> list[CompensationRecord]:
    """Power-flow every scenario against a schedule; records in scenario order.

    Scenario evaluations are independent, so the worker count changes wall
    time only, never any numeric result.
    """

    def one(s: Scenario) -> CompensationRecord:
        inj = scenario_injections(dispatch, s, net)
        pf = solve_pf(net, inj, tol=config.pf_tol, max_iter=config.pf_max_iter)
        return CompensationRecord(
            scenario_id=s.id,
            delta_p_kw=pf.slack_p_kw - dispatch.grid_p_kw,
            delta_q_kvar=pf.slack_q_kvar - dispatch.grid_q_kvar,
            converged=pf.converged,
        )

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(one, scenarios))
    return [one(s) for s in scenarios]


def run(
    net: Network,
    prices: Prices,
    model: UncertaintyModel,
    config: CcConfig,
) -> CcResult:
    """Execute the full two-stage loop.  See the module docstring."""
    prog, vm = build_stage1(net, prices)
    sol = solve(prog, config.solver_tol)
    if sol.status != SolveStatus.OPTIMAL:
        raise ModelError(f"stage-1 solve failed: {sol.status.value} ({sol.message})")
    dispatch1 = extract_dispatch(net, vm, sol)
    ratios0 = participation_ratios(dispatch1, net)

    scenarios = sample_scenarios(net, model, config.n_scenarios, config.seed)

    trace: list[IterationRecord] = []
    tau = 0.0
    status = CcStatus.EXHAUSTED
    dispatch = dispatch1
    ratios_it = ratios0
    z_vio = math.inf
    records: list[CompensationRecord] = []

    for it in range(config.max_iterations):
        prog, vm = build_modified(net, prices, ratios0, tau)
        sol = solve(prog, config.solver_tol)
        if sol.status != SolveStatus.OPTIMAL:
            raise ModelError(
                f"iteration {it} (tau={tau:.6g}): solver returned "
                f"{sol.status.value} ({sol.message})"
            )
        dispatch = extract_dispatch(net, vm, sol)
        ratios_it = participation_ratios(dispatch, net)
        records = evaluate_scenarios(net, dispatch, scenarios, config)
        z_vio = violation_index(
            records, config.threshold_p_kw, config.threshold_q_kvar
        )
        trace.append(
            IterationRecord(
                iteration=it,
                tau=tau,
                i_p=ratios_it.i_p,
                i_q=ratios_it.i_q,
                z_vio=z_vio,
                cost_usd=dispatch.objective_usd,
            )
        )
        if z_vio <= config.epsilon:
            status = CcStatus.SATISFIED
            break
        if tau >= ratios0.i_p:
            status = CcStatus.EXHAUSTED
            break
        tau = min(tau + config.tau_step, ratios0.i_p)

    return CcResult(
        status=status,
        final_tau=trace[-1].tau if trace else 0.0,
        ratios_initial=ratios0,
        ratios_final=ratios_it,
        z_vio_final=z_vio,
        cost_final=dispatch.objective_usd,
        dispatch_final=dispatch,
        trace=trace,
        records_final=records,
    )


# ---------------------------------------------------------------------------
# CSV reports
# ---------------------------------------------------------------------------

def write_trace_csv(trace: list[IterationRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "tau", "i_p", "i_q", "z_vio", "cost_usd"])
        for r in trace:
            w.writerow(
                [r.iteration, repr(r.tau), repr(r.i_p), repr(r.i_q),
                 repr(r.z_vio), repr(r.cost_usd)]
            )


def write_compensation_csv(records: list[CompensationRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["scenario_id", "delta_p_kw", "delta_q_kvar", "converged"])
        for r in records:
            w.writerow(
                [r.scenario_id, repr(r.delta_p_kw), repr(r.delta_q_kvar),
                 int(r.converged)]
            )


def write_result_csv(result: CcResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(
            ["status", "final_tau", "i_p_initial", "i_q_initial",
             "i_p_final", "i_q_final", "z_vio_final", "cost_usd",
             "grid_p_kw", "iterations"]
        )
        w.writerow(
            [
                result.status.value,
                repr(result.final_tau),
                repr(result.ratios_initial.i_p),
                repr(result.ratios_initial.i_q),
                repr(result.ratios_final.i_p),
                repr(result.ratios_final.i_q),
                repr(result.z_vio_final),
                repr(result.cost_final),
                repr(result.dispatch_final.grid_p_kw),
                len(result.trace),
            ]
        )
