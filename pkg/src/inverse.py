"""
Successive approximations for the source factor h(t, x).

Each approximation solves, for every mode k,

    D_t^alpha u_k^n - (u_k^n)_xx + k^2 u_k^n = M_k + (f_k / f(., ., l0)) S^{n-1}

with S = sum_k k^2 u_k sin(k l0), starting from u_k^0 = 0. The source
factor is then read off the trace equation at y = l0.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy.integrate import trapezoid

from src.config import defaults
from src.errors import DivisionHazardError
from src.fracops import caputo_l1, extrapolate_initial
from src.forward import ProblemSpec
from src.modesolver import solve_modes
from src.schemas import DerivativeRoute, SpaceGrid, TimeGrid
from src.specfun import estimate_constant
from src.spectral import (
    SpectralState,
    coupling_field,
    mode_weights,
    trace_field,
    weighted_distance,
    weighted_norm_series,
)

logger = logging.getLogger(__name__)

# Test functions of the weak-form residual
WEAK_TEST_FUNCTIONS = 3


# ============================================================================
# Derivatives of the trace data
# ============================================================================
@dataclass(frozen=True)
class PsiDerivatives:
    caputo: np.ndarray
    xx: np.ndarray
    routes: Dict[str, DerivativeRoute]


def second_difference_x(values: np.ndarray, dx: float) -> np.ndarray:
    """u_xx along the last axis: centered inside, second-order one-sided at both ends"""
    out = np.empty(values.shape)
    out[..., 1:-1] = (values[..., :-2] - 2.0 * values[..., 1:-1] + values[..., 2:]) / dx ** 2
    if values.shape[-1] >= 4:
        out[..., 0] = (2.0 * values[..., 0] - 5.0 * values[..., 1] + 4.0 * values[..., 2] - values[..., 3]) / dx ** 2
        out[..., -1] = (2.0 * values[..., -1] - 5.0 * values[..., -2] + 4.0 * values[..., -3] - values[..., -4]) / dx ** 2
    else:
        out[..., 0] = out[..., 1]
        out[..., -1] = out[..., -2]
    return out


def psi_derivatives(spec: ProblemSpec) -> PsiDerivatives:
    """D_t^alpha psi and psi_xx on the grid, analytic when available and preferred"""
    if spec.prefer_analytic and spec.has_analytic_psi_derivatives:
        caputo = spec.sample_plane(spec.psi_caputo, "psi_caputo")
        xx = spec.sample_plane(spec.psi_xx, "psi_xx")
        route = DerivativeRoute.ANALYTIC
    else:
        psi = spec.psi_grid
        caputo = extrapolate_initial(caputo_l1(psi, spec.time_grid, spec.alpha))
        xx = second_difference_x(psi, spec.space_grid.dx)
        route = DerivativeRoute.NUMERICAL
    return PsiDerivatives(caputo=caputo, xx=xx, routes={"psi_caputo": route, "psi_xx": route})


def check_division_hazard(spec: ProblemSpec) -> None:
    f_abs = np.abs(spec.f_l0)
    i, j = np.unravel_index(int(np.argmin(f_abs)), f_abs.shape)
    if f_abs[i, j] < defaults.DIVISION_HAZARD:
        t, x = float(spec.t[i]), float(spec.x[j])
        raise DivisionHazardError(
            f"|f(t,x,l0)| = {f_abs[i, j]:.3e} below {defaults.DIVISION_HAZARD:g} at node ({i}, {j}), (t, x) = ({t:.6g}, {x:.6g})",
            node=(int(i), int(j)),
            point=(t, x),
        )


# ============================================================================
# Source term M_k and the contraction condition
# ============================================================================
@dataclass(frozen=True)
class SourceTermMk:
    values: np.ndarray  # (K, nt, nx)
    bracket: np.ndarray  # D^alpha psi - psi_xx - g(., ., l0)
    derivatives: PsiDerivatives


def compute_Mk(spec: ProblemSpec, derivatives: Optional[PsiDerivatives] = None) -> SourceTermMk:
    """M_k = f_k (D^alpha psi - psi_xx - g(., ., l0)) / f(., ., l0) + g_k"""
    check_division_hazard(spec)
    derivatives = derivatives or psi_derivatives(spec)
    bracket = derivatives.caputo - derivatives.xx - spec.g_l0
    values = spec.f_k * (bracket / spec.f_l0)[None] + spec.g_k
    return SourceTermMk(values=values, bracket=bracket, derivatives=derivatives)


def contraction_check(spec: ProblemSpec, M_alpha: Optional[float] = None) -> float:
    """L = (M_alpha f0^2 / eps) max_{t,x} sum_k lambda_k^(5/2+eps) f_k^2; contraction holds for L <= 1"""
    if M_alpha is None:
        _, M_alpha = estimate_constant(spec.alpha, spec.T)
    f0 = float(np.max(1.0 / np.abs(spec.f_l0)))
    weighted = np.tensordot(mode_weights(spec.K, spec.epsilon), spec.f_k ** 2, axes=(0, 0))
    return float(M_alpha * f0 ** 2 / spec.epsilon * np.max(weighted))


# ============================================================================
# One Picard step
# ============================================================================
@dataclass
class IterationState:
    n: int
    state: SpectralState
    weighted_increment: float = 0.0
    increments: List[float] = field(default_factory=list)
    state_norms: List[float] = field(default_factory=list)

    @classmethod
    def initial(cls, spec: ProblemSpec) -> "IterationState":
        return cls(n=0, state=SpectralState.zeros(spec.K, spec.epsilon, spec.time_grid, spec.space_grid))


def picard_iterate(spec: ProblemSpec, prev: IterationState, source: Optional[SourceTermMk] = None) -> IterationState:
    source = source or compute_Mk(spec)
    S = coupling_field(prev.state, spec.l0)
    rhs = source.values + spec.f_k * (S / spec.f_l0)[None]
    values = solve_modes(spec.phi_k, rhs, spec.time_grid, spec.space_grid, spec.alpha)
    state = SpectralState(values, spec.epsilon, spec.time_grid, spec.space_grid)

    increment = weighted_distance(state, prev.state)
    norm = float(np.max(weighted_norm_series(state)))
    logger.debug(f"[PICARD] n={prev.n + 1}: weighted increment {increment:.6e}, state norm {norm:.6e}")
    return IterationState(
        n=prev.n + 1,
        state=state,
        weighted_increment=increment,
        increments=prev.increments + [increment],
        state_norms=prev.state_norms + [norm],
    )


def contraction_ratios(increments: List[float], state_norms: List[float]) -> List[Optional[float]]:
    """d_n / d_{n-1}; None for n = 1 and when d_{n-1} sits at the round-off floor"""
    ratios: List[Optional[float]] = [None]
    for n in range(1, len(increments)):
        floor = defaults.RATIO_FLOOR * max(1.0, state_norms[n - 1])
        previous = increments[n - 1]
        ratios.append(increments[n] / previous if previous > floor else None)
    return ratios


# ============================================================================
# Reconstruction of h
# ============================================================================
@dataclass(frozen=True)
class RecoveredSource:
    h: np.ndarray
    time_grid: TimeGrid
    space_grid: SpaceGrid
    trace_residual: float
    weak_residual: float
    routes: Dict[str, DerivativeRoute]

    def l2_squared_series(self) -> np.ndarray:
        return trapezoid(self.h ** 2, x=self.space_grid.nodes, axis=-1)


def weak_form_residual(spec: ProblemSpec, state: SpectralState, h: np.ndarray) -> float:
    """Residual of the variational identity against w_j = sin(j pi x), j = 1..3.

    Maximised over t >= t_1 and k, relative to the size of the source term.
    """
    x = spec.x
    j = np.arange(1, WEAK_TEST_FUNCTIONS + 1, dtype=float)
    w = np.sin(np.pi * np.outer(j, x))  # (J, nx)
    w_x = np.pi * j[:, None] * np.cos(np.pi * np.outer(j, x))

    u = state.values
    caputo = np.moveaxis(caputo_l1(np.moveaxis(u, 1, 0), spec.time_grid, spec.alpha), 0, 1)
    u_x = np.gradient(u, x, axis=-1, edge_order=2)
    lam = np.arange(1, state.K + 1, dtype=float) ** 2
    source = spec.g_k + spec.f_k * h[None]

    def project(values, test):
        return trapezoid(values[:, :, None, :] * test[None, None], x=x, axis=-1)

    residual = (
        project(caputo, w) + project(u_x, w_x) + lam[:, None, None] * project(u, w) - project(source, w)
    )[:, 1:]
    scale = max(1.0, float(np.max(np.abs(project(source, w)))))
    return float(np.max(np.abs(residual)) / scale)


def reconstruct_h(spec: ProblemSpec, final: SpectralState, source: Optional[SourceTermMk] = None) -> RecoveredSource:
    """h = [D^alpha psi - psi_xx - g(., ., l0) + S] / f(., ., l0); row t = 0 extrapolated"""
    check_division_hazard(spec)
    if source is None:
        derivatives = psi_derivatives(spec)
        bracket = derivatives.caputo - derivatives.xx - spec.g_l0
        routes = derivatives.routes
    else:
        bracket = source.bracket
        routes = source.derivatives.routes

    S = coupling_field(final, spec.l0)
    h = extrapolate_initial((bracket + S) / spec.f_l0)
    trace_residual = float(np.max(np.abs(trace_field(final, spec.l0) - spec.psi_grid)))
    weak = weak_form_residual(spec, final, h)
    logger.info(f"[RECONSTRUCT] trace residual {trace_residual:.3e}, weak residual {weak:.3e}")
    return RecoveredSource(
        h=h,
        time_grid=spec.time_grid,
        space_grid=spec.space_grid,
        trace_residual=trace_residual,
        weak_residual=weak,
        routes=routes,
    )
