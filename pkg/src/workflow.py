"""
LangGraph inversion workflow - successive approximations for h(t, x)
"""
import logging
import operator
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Annotated, Any, Dict, List, Optional, Tuple, TypedDict

from langgraph.graph import END, StateGraph

from src.config import defaults
from src.errors import ParameterError
from src.estimates import compute_constants
from src.forward import ProblemSpec
from src.inverse import (
    IterationState,
    RecoveredSource,
    SourceTermMk,
    compute_Mk,
    contraction_ratios,
    picard_iterate,
    reconstruct_h,
)
from src.schemas import AuditLogEntry, ConvergenceReport, EstimateReport, Regime
from src.spectral import SpectralState, weighted_distance

logger = logging.getLogger(__name__)


class InversionState(TypedDict, total=False):
    spec: ProblemSpec
    tol: float
    max_iter: int

    source: SourceTermMk
    constants: EstimateReport
    contraction_value: float
    regime: Regime

    iteration: IterationState
    # Every iterate, kept for the distances to the final one
    iterates: Annotated[List[SpectralState], operator.add]
    converged: bool

    recovered: RecoveredSource
    report: ConvergenceReport

    # Execution tracking
    execution_log: Annotated[List[AuditLogEntry], operator.add]
    method_selections: Dict[str, str]


def log_stage_execution(stage: str, action: str, details: Dict[str, Any]) -> List[AuditLogEntry]:
    """Audit entry for the append-only execution log"""
    return [
        AuditLogEntry(
            timestamp=datetime.now(timezone.utc).isoformat(),
            stage=stage,
            action=action,
            details=details,
        )
    ]


# ============================================================================
# STAGE 1: PREPARE - derivative routes, M_k, contraction value, constants
# ============================================================================
def node_prepare(state: InversionState) -> Dict[str, Any]:
    """PREPARE Stage: build M_k and decide whether the run is inside the proven regime"""
    spec = state["spec"]
    logger.info(f"[PREPARE] {spec.name}: K={spec.K}, grid=({spec.nt}, {spec.nx}), tol={state['tol']:g}")

    source = compute_Mk(spec)
    constants = compute_constants(spec, derivatives=source.derivatives)
    contraction_value = constants.fk_value
    regime = Regime.PROVEN if contraction_value <= 1.0 else Regime.OUTSIDE
    if regime == Regime.OUTSIDE:
        logger.warning(f"[PREPARE] contraction value {contraction_value:.4g} > 1: {regime.value}")

    selections = {name: route.value for name, route in source.derivatives.routes.items()}
    logger.info(f"[PREPARE] Completed: contraction={contraction_value:.6g}, routes={selections}")
    return {
        "source": source,
        "constants": constants,
        "contraction_value": contraction_value,
        "regime": regime,
        "iteration": IterationState.initial(spec),
        "converged": False,
        "method_selections": selections,
        "execution_log": log_stage_execution(
            "PREPARE", "source_term_built",
            {"contraction_value": contraction_value, "regime": regime.value, **selections},
        ),
    }


# ============================================================================
# STAGE 2: ITERATE - one successive approximation
# ============================================================================
def node_iterate(state: InversionState) -> Dict[str, Any]:
    """ITERATE Stage: solve all modes against the previous coupling sum"""
    spec = state["spec"]
    nxt = picard_iterate(spec, state["iteration"], state["source"])
    converged = nxt.weighted_increment <= state["tol"] ** 2
    logger.info(f"[PICARD] n={nxt.n}: weighted increment {nxt.weighted_increment:.6e}")
    return {
        "iteration": nxt,
        "iterates": [nxt.state],
        "converged": converged,
        "execution_log": log_stage_execution(
            "PICARD", "iterate",
            {"n": nxt.n, "weighted_increment": nxt.weighted_increment},
        ),
    }


# ============================================================================
# STAGE 3: RECONSTRUCT - h from the trace equation
# ============================================================================
def node_reconstruct(state: InversionState) -> Dict[str, Any]:
    """RECONSTRUCT Stage: read h off the final iterate"""
    recovered = reconstruct_h(state["spec"], state["iteration"].state, state["source"])
    return {
        "recovered": recovered,
        "execution_log": log_stage_execution(
            "RECONSTRUCT", "source_recovered",
            {"trace_residual": recovered.trace_residual, "weak_residual": recovered.weak_residual},
        ),
    }


# ============================================================================
# STAGE 4: REPORT - convergence diagnostics
# ============================================================================
def _envelopes(increments: List[float], state_norms: List[float], A0: float) -> Dict[str, list]:
    """Per-iterate a priori bound 2(1 - 2^-n) A0 and increment envelope, with margins bound - value.

    The increment u^n - u^{n-1} (n >= 2) is compared with A0 (1/2)^(n-2): the envelope halves
    from the first increment, which is bounded by A0, so index n pairs with exponent n - 2.
    """
    iterate_bounds = [2.0 * (1.0 - 0.5 ** n) * A0 for n in range(1, len(state_norms) + 1)]
    iterate_margins = [bound - norm for bound, norm in zip(iterate_bounds, state_norms)]
    fundamental_bounds: List[Optional[float]] = [None] + [A0 * 0.5 ** (n - 2) for n in range(2, len(increments) + 1)]
    fundamental_margins = [
        None if bound is None else bound - increment
        for bound, increment in zip(fundamental_bounds, increments)
    ]
    return {
        "iterate_bounds": iterate_bounds,
        "iterate_bound_margins": iterate_margins,
        "iterate_bound_holds": [margin >= 0.0 for margin in iterate_margins],
        "fundamental_bounds": fundamental_bounds,
        "fundamental_bound_margins": fundamental_margins,
        "fundamental_bound_holds": [None if margin is None else margin >= 0.0 for margin in fundamental_margins],
    }


def node_report(state: InversionState) -> Dict[str, Any]:
    """REPORT Stage: ratios, per-iterate bounds and distances to the final iterate"""
    iteration = state["iteration"]
    A0 = state["constants"].A0
    increments = iteration.increments
    ratios = contraction_ratios(increments, iteration.state_norms)
    measured = [r for r in ratios[1:] if r is not None]

    final = iteration.state
    report = ConvergenceReport(
        iterations=iteration.n,
        converged=state["converged"],
        tol=state["tol"],
        increments=increments,
        ratios=ratios,
        state_norms=iteration.state_norms,
        **_envelopes(increments, iteration.state_norms, A0),
        distance_to_final=[weighted_distance(u, final) for u in state["iterates"]],
        condition_value=state["contraction_value"],
        regime=state["regime"],
        terminal_increment=iteration.weighted_increment,
        max_ratio=max(measured) if measured else None,
    )
    level = logging.INFO if report.converged else logging.WARNING
    logger.log(level, f"[REPORT] converged={report.converged} after {report.iterations} iterations, max ratio={report.max_ratio}")
    return {
        "report": report,
        "execution_log": log_stage_execution(
            "REPORT", "report_built",
            {"iterations": report.iterations, "converged": report.converged},
        ),
    }


# ============================================================================
# Conditional routing logic
# ============================================================================
def should_continue(state: InversionState) -> str:
    """Iterate until the weighted increment drops below tol^2 or the budget runs out"""
    if state["converged"]:
        return "reconstruct"
    if state["iteration"].n >= state["max_iter"]:
        logger.warning(f"[PICARD] max_iter={state['max_iter']} reached without convergence")
        return "reconstruct"
    return "iterate"


def create_compiled_workflow():
    """Create and return the compiled workflow"""
    workflow = StateGraph(InversionState)

    workflow.add_node("prepare", node_prepare)
    workflow.add_node("iterate", node_iterate)
    workflow.add_node("reconstruct", node_reconstruct)
    workflow.add_node("report", node_report)

    workflow.set_entry_point("prepare")
    workflow.add_edge("prepare", "iterate")
    workflow.add_conditional_edges(
        "iterate",
        should_continue,
        {
            "iterate": "iterate",
            "reconstruct": "reconstruct",
        },
    )
    workflow.add_edge("reconstruct", "report")
    workflow.add_edge("report", END)

    return workflow.compile()


inversion_workflow = create_compiled_workflow()


@dataclass
class InversionOutcome:
    state: SpectralState
    recovered: RecoveredSource
    report: ConvergenceReport
    constants: EstimateReport
    iterates: List[SpectralState]
    execution_log: List[AuditLogEntry]
    method_selections: Dict[str, str]


def run_inversion(
    spec: ProblemSpec,
    tol: float = defaults.TOL,
    max_iter: int = defaults.MAX_ITER,
    keep_iterates: bool = False,
) -> InversionOutcome:
    """Run the graph; every iterate is returned only when keep_iterates is set"""
    if not (tol > 0.0):
        raise ParameterError(f"tol must be positive, got {tol}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be at least 1, got {max_iter}")
    final = inversion_workflow.invoke(
        {"spec": spec, "tol": tol, "max_iter": max_iter, "iterates": [], "execution_log": []},
        config={"recursion_limit": max_iter + 10},
    )
    return InversionOutcome(
        state=final["iteration"].state,
        recovered=final["recovered"],
        report=final["report"],
        constants=final["constants"],
        iterates=final["iterates"] if keep_iterates else [],
        execution_log=final["execution_log"],
        method_selections=final["method_selections"],
    )


def solve_inverse(
    spec: ProblemSpec,
    tol: float = defaults.TOL,
    max_iter: int = defaults.MAX_ITER,
) -> Tuple[SpectralState, RecoveredSource, ConvergenceReport]:
    """Successive approximations from u^0 = 0, then reconstruction of h"""
    outcome = run_inversion(spec, tol, max_iter)
    return outcome.state, outcome.recovered, outcome.report
