"""
A priori constants of the inverse problem and numerical checks of the
energy bounds they imply.
"""
import logging
import math
from typing import List, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gamma

from src.config import defaults
from src.errors import UsageError
from src.forward import ProblemSpec
from src.fracops import caputo_l1, extrapolate_initial
from src.inverse import PsiDerivatives, RecoveredSource, contraction_check, psi_derivatives
from src.schemas import BoundCheck, DerivativeRoute, EstimateReport
from src.specfun import estimate_constant
from src.spectral import SpectralState, l2_squared, mode_weights, weighted_norm_series

logger = logging.getLogger(__name__)

HALF_PI = 0.5 * math.pi


# ============================================================================
# Norm helpers
# ============================================================================
def y_norm_squared(spec: ProblemSpec, volume: np.ndarray) -> np.ndarray:
    """int_0^pi v^2 dy at every (t, x) node (or every x node for a plane)"""
    return (volume ** 2) @ spec.basis.weights


def omega_norm_squared(spec: ProblemSpec, volume: np.ndarray) -> np.ndarray:
    """||v(t)||^2 over (0,1) x (0,pi); a scalar for a plane"""
    return trapezoid(y_norm_squared(spec, volume), x=spec.x, axis=-1)


def weighted_coefficient_integral(spec: ProblemSpec, coeffs: np.ndarray, power: Optional[float] = None) -> np.ndarray:
    """int_0^1 sum_k w_k |v_k|^2 dx with w_k = lambda_k^(5/2+eps), or k^power when given"""
    if power is None:
        w = mode_weights(spec.K, spec.epsilon)
    else:
        w = np.arange(1, spec.K + 1, dtype=float) ** power
    return trapezoid(np.tensordot(w, coeffs ** 2, axes=(0, 0)), x=spec.x, axis=-1)


def third_derivative_spectral(spec: ProblemSpec, coeffs: np.ndarray) -> np.ndarray:
    """||v_yyy||^2 over Omega from the coefficients, (pi/2) int sum_k k^6 v_k^2 dx"""
    return HALF_PI * weighted_coefficient_integral(spec, coeffs, power=6.0)


def _sup_norms(spec: ProblemSpec):
    f0 = float(np.max(1.0 / np.abs(spec.f_l0)))
    g0 = float(np.max(np.abs(spec.g_l0)))
    return f0, g0


def _refinement_drift(spec: ProblemSpec) -> List[str]:
    """Re-sample the sup norms at twice the (t, x) density and flag drift above 1%"""
    fine = spec.refined(2)
    coarse_f0, coarse_g0 = _sup_norms(spec)
    fine_f0, fine_g0 = _sup_norms(fine)
    pairs = [("f0", coarse_f0, fine_f0), ("g0", coarse_g0, fine_g0)]
    if spec.psi is not None and spec.psi_data is None:
        pairs.append(("max|psi|", float(np.max(np.abs(spec.psi_grid))), float(np.max(np.abs(fine.psi_grid)))))

    warnings = []
    for label, coarse, refined in pairs:
        drift = abs(refined - coarse) / max(abs(refined), 1e-300)
        if refined != 0.0 and drift > defaults.SUP_NORM_DRIFT:
            warnings.append(f"{label} drifts by {100 * drift:.2f}% under refinement; grid may be under-resolved")
    return warnings


# ============================================================================
# Constants
# ============================================================================
def compute_constants(spec: ProblemSpec, derivatives: Optional[PsiDerivatives] = None) -> EstimateReport:
    """Sup norms, M, M_alpha, A0, A1, B1 and the two smallness conditions"""
    logger.info(f"[ESTIMATES] {spec.name}: alpha={spec.alpha}, T={spec.T}, eps={spec.epsilon}")
    warnings = list(spec.check_conditions())

    derivatives = derivatives or psi_derivatives(spec)
    f0, g0 = _sup_norms(spec)
    psi0 = float(np.max(np.abs(derivatives.caputo) + np.abs(derivatives.xx)))
    M, M_alpha = estimate_constant(spec.alpha, spec.T)

    fstar = float(np.max(weighted_coefficient_integral(spec, spec.f_k)))
    gstar = float(np.max(weighted_coefficient_integral(spec, spec.g_k)))
    phistar = float(weighted_coefficient_integral(spec, spec.phi_k))
    lead = f0 ** 2 * (psi0 + g0) ** 2

    A0 = M * phistar + M_alpha * lead * fstar + M_alpha * gstar
    A1 = lead * float(np.max(omega_norm_squared(spec, spec.f_volume))) + float(
        np.max(omega_norm_squared(spec, spec.g_volume))
    )

    B1_spectral = (
        M * float(third_derivative_spectral(spec, spec.phi_k))
        + M_alpha * lead * float(np.max(third_derivative_spectral(spec, spec.f_k)))
        + M_alpha * float(np.max(third_derivative_spectral(spec, spec.g_k)))
    )

    B1_derivative = None
    if spec.f_yyy is not None and spec.g_yyy is not None and spec.phi_yyy is not None:
        f_yyy = spec.sample_volume(spec.f_yyy, "f_yyy")
        g_yyy = spec.sample_volume(spec.g_yyy, "g_yyy")
        phi_yyy = np.broadcast_to(
            np.asarray(spec.phi_yyy(spec.x[:, None], spec.basis.y[None, :]), dtype=float),
            (spec.nx, spec.basis.ny),
        )
        B1_derivative = (
            M * float(omega_norm_squared(spec, phi_yyy))
            + M_alpha * lead * float(np.max(omega_norm_squared(spec, f_yyy)))
            + M_alpha * float(np.max(omega_norm_squared(spec, g_yyy)))
        )
        condition4_value = 2.0 * M_alpha * f0 ** 2 * float(np.max(y_norm_squared(spec, f_yyy)))
        b1_route = DerivativeRoute.ANALYTIC
        B1 = B1_derivative
    else:
        k6 = np.arange(1, spec.K + 1, dtype=float) ** 6
        f_yyy_sq = HALF_PI * np.tensordot(k6, spec.f_k ** 2, axes=(0, 0))
        condition4_value = 2.0 * M_alpha * f0 ** 2 * float(np.max(f_yyy_sq))
        b1_route = DerivativeRoute.NUMERICAL
        B1 = B1_spectral
        warnings.append("third y-derivatives not supplied; B1 taken from spectral weighting")

    fk_value = contraction_check(spec, M_alpha)
    if fk_value > 1.0:
        warnings.append(f"contraction value {fk_value:.4g} exceeds 1: outside proven regime")
    if condition4_value > 1.0:
        warnings.append(f"smallness condition value {condition4_value:.4g} exceeds 1")
    warnings.extend(_refinement_drift(spec))

    for message in warnings:
        logger.warning(f"[ESTIMATES] {message}")
    logger.info(
        f"[ESTIMATES] M={M:.6g}, M_alpha={M_alpha:.6g}, A0={A0:.6g}, B1={B1:.6g}, "
        f"condition={condition4_value:.6g}, contraction={fk_value:.6g}"
    )
    return EstimateReport(
        f0=f0,
        g0=g0,
        psi0=psi0,
        M=M,
        M_alpha=M_alpha,
        A0=A0,
        A1=A1,
        B1=B1,
        B1_derivative=B1_derivative,
        B1_spectral=B1_spectral,
        b1_route=b1_route,
        fstar=fstar,
        gstar=gstar,
        phistar=phistar,
        epsilon=spec.epsilon,
        condition4_value=condition4_value,
        fk_value=fk_value,
        warnings=warnings,
    )


# ============================================================================
# Bound checks
# ============================================================================
def _check(name: str, lhs: float, rhs: float) -> BoundCheck:
    return BoundCheck(name=name, lhs=lhs, rhs=rhs, margin=rhs - lhs, holds=bool(lhs <= rhs))


def verify_bounds(
    spec: ProblemSpec,
    state: SpectralState,
    recovered: RecoveredSource,
    report: EstimateReport,
) -> List[BoundCheck]:
    """Evaluate the left-hand sides of the energy bounds on a computed solution"""
    grid = (spec.time_grid, spec.space_grid)
    if (state.time_grid, state.space_grid) != grid or (recovered.time_grid, recovered.space_grid) != grid:
        raise UsageError("solution, recovered source and problem live on different grids")
    if state.K != spec.K:
        raise UsageError(f"state carries {state.K} modes, problem has K={spec.K}")

    t, x, T = spec.t, spec.x, spec.T
    f0, g0, psi0 = report.f0, report.g0, report.psi0
    A0, A1, B1 = report.A0, report.A1, report.B1
    lam = np.arange(1, spec.K + 1, dtype=float) ** 2

    u = state.values
    u_x = np.gradient(u, x, axis=-1, edge_order=2)
    caputo = extrapolate_initial(caputo_l1(np.moveaxis(u, 1, 0), spec.time_grid, spec.alpha))
    caputo = np.moveaxis(caputo, 0, 1)

    u_sq = l2_squared(u, x)  # (K, nt)
    u_x_sq = l2_squared(u_x, x)
    caputo_sq = l2_squared(caputo, x)

    phi_x = np.gradient(spec.phi_k, x, axis=-1, edge_order=2)
    phi_sq = HALF_PI * float(np.sum(l2_squared(spec.phi_k, x)))
    phi_x_sq = HALF_PI * float(np.sum(l2_squared(phi_x, x)))
    phi_y_sq = HALF_PI * float(lam @ l2_squared(spec.phi_k, x))

    f_omega = omega_norm_squared(spec, spec.f_volume)
    g_omega = omega_norm_squared(spec, spec.g_volume)
    max_f_y = float(np.max(y_norm_squared(spec, spec.f_volume)))
    data_rate = float(np.max(f0 ** 2 * (psi0 + g0) ** 2 * f_omega + g_omega))
    memory = gamma(spec.alpha) * T ** (1.0 - spec.alpha) / 2.0

    gradient_energy = trapezoid(HALF_PI * (u_x_sq.sum(axis=0) + lam @ u_sq), x=t)
    caputo_energy = trapezoid(HALF_PI * caputo_sq.sum(axis=0), x=t)
    mode_gradient = trapezoid((u_x_sq + lam[:, None] * u_sq).sum(axis=0), x=t)
    mode_caputo = trapezoid(caputo_sq.sum(axis=0), x=t)
    h_sq = float(np.max(recovered.l2_squared_series()))

    checks = [
        _check("weighted_norm", float(np.max(weighted_norm_series(state))), 2.0 * A0),
        _check("l2_norm", float(np.max(HALF_PI * u_sq.sum(axis=0))), 2.0 * B1),
        _check(
            "gradient_energy",
            float(gradient_energy),
            memory * phi_sq + 3.0 * B1 * T + 0.5 * T * A1 + T * B1 * f0 ** 2 * max_f_y,
        ),
        _check(
            "caputo_energy",
            float(caputo_energy),
            memory * (phi_x_sq + phi_y_sq) + T * data_rate + 2.0 * B1 * f0 ** 2 * max_f_y,
        ),
        _check("source_l2", h_sq, 4.0 * f0 ** 2 * (psi0 ** 2 + 2.0 * B1) + 2.0 * g0 ** 2),
        _check("source_l2_weighted", h_sq, 4.0 * f0 ** 2 * (psi0 ** 2 + A0 / spec.epsilon) + 2.0 * g0 ** 2),
        _check(
            "mode_gradient_energy",
            float(mode_gradient),
            memory * phi_sq + 3.0 * A0 * T + 0.5 * T * A1 + T * A0 * f0 ** 2 / (2.0 * spec.epsilon) * max_f_y,
        ),
        _check(
            "mode_caputo_energy",
            float(mode_caputo),
            memory * (phi_x_sq + phi_y_sq) + T * data_rate + A0 * f0 ** 2 / spec.epsilon * max_f_y,
        ),
    ]
    for check in checks:
        level = logging.INFO if check.holds else logging.WARNING
        logger.log(level, f"[ESTIMATES] {check.name}: lhs={check.lhs:.6e} rhs={check.rhs:.6e} holds={check.holds}")
    return checks
