"""
Manufactured solutions and convergence studies.

Every registered case has the form

    u*(t, x, y) = (1 + t^2) sin(pi x) sum_k c_k sin(k y),   f = sin y,
    h*(t, x) = (1 + t) sin(pi x),

with g chosen so that (u*, h*) solves the equation exactly.
"""
import dataclasses
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import trapezoid
from scipy.special import gamma

from src.config import settings
from src.errors import RegistryError, UsageError
from src.forward import ProblemSpec, solve_forward
from src.schemas import ConvergenceStudy, StudyReference, StudyTarget
from src.spectral import l2_squared
from src.workflow import solve_inverse

logger = logging.getLogger(__name__)

CASE_ALPHA = 0.5
CASE_T = 0.02
CASE_K = 16

# id -> (mode coefficients c_k, scale of h*, l0)
_REGISTRY: Dict[str, Tuple[Dict[int, float], float, float]] = {
    "MMS-0": ({}, 0.0, math.pi / 2),
    "MMS-1": ({1: 1.0}, 1.0, math.pi / 2),
    "MMS-2": ({1: 1.0, 2: 0.125}, 1.0, math.pi / 3),
}

_OVERRIDABLE = {"alpha", "T", "l0", "K", "epsilon", "nt", "nx", "ny", "prefer_analytic"}


def registered_cases() -> List[str]:
    return sorted(_REGISTRY)


@dataclass(frozen=True)
class ManufacturedCase:
    id: str
    spec: ProblemSpec
    coefficients: Dict[int, float]
    exact_u: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    exact_h: Callable[[np.ndarray, np.ndarray], np.ndarray]
    # pieces of the equation, kept apart for the residual check
    caputo_u: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    laplacian_u: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

    def exact_modes(self, spec: Optional[ProblemSpec] = None) -> np.ndarray:
        """u*_k(t, x) on the (t, x) grid of spec, shape (K, nt, nx)"""
        spec = spec or self.spec
        amplitude = (1.0 + spec.t ** 2)[:, None] * np.sin(np.pi * spec.x)[None, :]
        out = np.zeros((spec.K, spec.nt, spec.nx))
        for k, c in self.coefficients.items():
            if k <= spec.K:
                out[k - 1] = c * amplitude
        return out

    def with_grid(self, nt: int, nx: int) -> "ManufacturedCase":
        return dataclasses.replace(self, spec=self.spec.with_grid(nt=nt, nx=nx))


def manufactured_case(case_id: str, **overrides) -> ManufacturedCase:
    if case_id not in _REGISTRY:
        raise RegistryError(f"unknown manufactured case '{case_id}'; registered: {', '.join(registered_cases())}")
    unknown = set(overrides) - _OVERRIDABLE
    if unknown:
        raise UsageError(f"cannot override {sorted(unknown)} on a manufactured case")

    coefficients, h_scale, default_l0 = _REGISTRY[case_id]
    alpha = overrides.pop("alpha", CASE_ALPHA)
    l0 = overrides.pop("l0", default_l0)
    ks = np.array(sorted(coefficients), dtype=float)
    cs = np.array([coefficients[int(k)] for k in ks], dtype=float)

    def time_factor(t):
        return 1.0 + t ** 2

    def time_caputo(t):
        return 2.0 * np.power(t, 2.0 - alpha) / gamma(3.0 - alpha)

    def y_series(y, power=0, derivative="sin"):
        """sum_k c_k k^power sin(k y) (or cos)"""
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape)
        trig = np.sin if derivative == "sin" else np.cos
        for k, c in zip(ks, cs):
            out = out + c * k ** power * trig(k * y)
        return out

    def exact_u(t, x, y):
        return time_factor(t) * np.sin(np.pi * x) * y_series(y)

    def exact_h(t, x):
        return h_scale * (1.0 + t) * np.sin(np.pi * x)

    def caputo_u(t, x, y):
        return time_caputo(t) * np.sin(np.pi * x) * y_series(y)

    def laplacian_u(t, x, y):
        # u_xx + u_yy
        return -time_factor(t) * np.sin(np.pi * x) * (np.pi ** 2 * y_series(y) + y_series(y, power=2))

    def f(t, x, y):
        return np.sin(y) + 0.0 * t + 0.0 * x

    def f_yyy(t, x, y):
        return -np.cos(y) + 0.0 * t + 0.0 * x

    def g(t, x, y):
        return caputo_u(t, x, y) - laplacian_u(t, x, y) - f(t, x, y) * exact_h(t, x)

    def g_yyy(t, x, y):
        s = np.sin(np.pi * x)
        caputo_part = -time_caputo(t) * s * y_series(y, power=3, derivative="cos")
        laplacian_part = -time_factor(t) * s * (
            np.pi ** 2 * y_series(y, power=3, derivative="cos") + y_series(y, power=5, derivative="cos")
        )
        return caputo_part + laplacian_part + np.cos(y) * exact_h(t, x)

    def phi(x, y):
        return np.sin(np.pi * x) * y_series(y)

    def phi_yyy(x, y):
        return -np.sin(np.pi * x) * y_series(y, power=3, derivative="cos")

    trace = float(y_series(l0))

    def psi(t, x):
        return time_factor(t) * np.sin(np.pi * x) * trace

    def psi_caputo(t, x):
        return time_caputo(t) * np.sin(np.pi * x) * trace

    def psi_xx(t, x):
        return -np.pi ** 2 * time_factor(t) * np.sin(np.pi * x) * trace

    spec = ProblemSpec(
        alpha=alpha,
        T=overrides.pop("T", CASE_T),
        l0=l0,
        f=f,
        g=g,
        phi=phi,
        K=overrides.pop("K", CASE_K),
        h_true=exact_h,
        psi=psi,
        psi_caputo=psi_caputo,
        psi_xx=psi_xx,
        f_yyy=f_yyy,
        g_yyy=g_yyy,
        phi_yyy=phi_yyy,
        name=case_id,
        **overrides,
    )
    logger.debug(f"[VERIFY] built {case_id}: alpha={spec.alpha}, T={spec.T}, l0={spec.l0:.6f}, K={spec.K}")
    return ManufacturedCase(
        id=case_id,
        spec=spec,
        coefficients=dict(coefficients),
        exact_u=exact_u,
        exact_h=exact_h,
        caputo_u=caputo_u,
        laplacian_u=laplacian_u,
    )


def residual(case: ManufacturedCase, n_points: int = 100, seed: int = 0) -> float:
    """max |D^alpha u* - (u*_xx + u*_yy) - f h* - g| at random interior nodes"""
    rng = np.random.Generator(np.random.Philox(seed))
    spec = case.spec
    t = rng.uniform(0.0, spec.T, n_points)
    x = rng.uniform(0.0, 1.0, n_points)
    y = rng.uniform(0.0, math.pi, n_points)
    lhs = case.caputo_u(t, x, y) - case.laplacian_u(t, x, y)
    rhs = spec.f(t, x, y) * case.exact_h(t, x) + spec.g(t, x, y)
    return float(np.max(np.abs(lhs - rhs)))


# ============================================================================
# Convergence studies
# ============================================================================
def _validate_ladder(ladder: Sequence[Tuple[int, int]]) -> List[Tuple[int, int]]:
    ladder = [(int(nt), int(nx)) for nt, nx in ladder]
    if len(ladder) < 3:
        raise UsageError("a convergence ladder needs at least 3 levels")
    for (nt0, nx0), (nt1, nx1) in zip(ladder, ladder[1:]):
        if nt1 < nt0 or nx1 < nx0 or (nt1, nx1) == (nt0, nx0):
            raise UsageError(f"ladder levels must be strictly refining: {(nt0, nx0)} -> {(nt1, nx1)}")
    return ladder


def _ladder_axis(ladder: List[Tuple[int, int]]) -> str:
    nts = {nt for nt, _ in ladder}
    nxs = {nx for _, nx in ladder}
    if len(nxs) == 1:
        return "time"
    if len(nts) == 1:
        return "space"
    return "both"


def _stride(coarse: int, fine: int) -> int:
    if (fine - 1) % (coarse - 1):
        raise UsageError(f"successive reference needs nested grids: {coarse} nodes do not embed in {fine}")
    return (fine - 1) // (coarse - 1)


def _restrict(values: np.ndarray, coarse: Tuple[int, int], fine: Tuple[int, int]) -> np.ndarray:
    st, sx = _stride(coarse[0], fine[0]), _stride(coarse[1], fine[1])
    return values[..., ::st, ::sx]


def _u_error(diff: np.ndarray, t: np.ndarray, x: np.ndarray) -> float:
    """Discrete L2(Q) norm by Parseval over the modes"""
    per_t = 0.5 * math.pi * l2_squared(diff, x).sum(axis=0)
    return math.sqrt(float(trapezoid(per_t, x=t)))


def _h_error(diff: np.ndarray, t: np.ndarray, x: np.ndarray) -> float:
    """L2((t_1, T) x (0, 1)); the extrapolated row t = 0 is left out"""
    per_t = l2_squared(diff[1:], x)
    return math.sqrt(float(trapezoid(per_t, x=t[1:])))


def relative_h_error(case: ManufacturedCase, h: np.ndarray, spec: Optional[ProblemSpec] = None) -> float:
    spec = spec or case.spec
    exact = case.exact_h(spec.t[:, None], spec.x[None, :]) * np.ones((spec.nt, spec.nx))
    scale = _h_error(exact, spec.t, spec.x)
    err = _h_error(h - exact, spec.t, spec.x)
    return err / scale if scale > 0.0 else err


def _least_squares_order(steps: List[float], errors: List[float]) -> Optional[float]:
    pairs = [(s, e) for s, e in zip(steps, errors) if e > 0.0]
    if len(pairs) < 2:
        return None
    slope, _ = np.polyfit(np.log([s for s, _ in pairs]), np.log([e for _, e in pairs]), 1)
    return float(slope)


def convergence_study(
    case: ManufacturedCase,
    ladder: Sequence[Tuple[int, int]],
    target: StudyTarget = StudyTarget.FORWARD,
    reference: StudyReference = StudyReference.EXACT,
    tol: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> ConvergenceStudy:
    """Run the target pipeline on every ladder level and report observed orders"""
    ladder = _validate_ladder(ladder)
    target = StudyTarget(target)
    reference = StudyReference(reference)
    axis = _ladder_axis(ladder)
    logger.info(f"[VERIFY] {case.id}: {target.value} study over {ladder} ({axis}, {reference.value})")

    def run_level(level: Tuple[int, int]):
        spec = case.spec.with_grid(nt=level[0], nx=level[1])
        if target == StudyTarget.FORWARD:
            state, _ = solve_forward(spec)
            return spec, state.values, True
        spec = dataclasses.replace(spec, prefer_analytic=False)
        kwargs = {}
        if tol is not None:
            kwargs["tol"] = tol
        if max_iter is not None:
            kwargs["max_iter"] = max_iter
        _, recovered, report = solve_inverse(spec, **kwargs)
        return spec, recovered.h, report.converged

    if settings.WORKERS > 1:
        with ThreadPoolExecutor(max_workers=settings.WORKERS) as pool:
            results = list(pool.map(run_level, ladder))
    else:
        results = []
        for level in ladder:
            results.append(run_level(level))
            if not results[-1][2]:
                break

    aborted_reason = None
    usable = []
    for level, (spec, values, converged) in zip(ladder, results):
        if not converged:
            aborted_reason = f"inverse iteration did not converge at level {level}"
            logger.warning(f"[VERIFY] {aborted_reason}; study aborted")
            break
        usable.append((level, spec, values))

    def step_of(spec: ProblemSpec) -> float:
        if axis == "time":
            return spec.time_grid.dt
        if axis == "space":
            return spec.space_grid.dx
        return max(spec.time_grid.dt, spec.space_grid.dx)

    steps: List[float] = []
    errors: List[float] = []
    for i, (level, spec, values) in enumerate(usable):
        if reference == StudyReference.EXACT:
            if target == StudyTarget.FORWARD:
                err = _u_error(values - case.exact_modes(spec), spec.t, spec.x)
            else:
                exact = case.exact_h(spec.t[:, None], spec.x[None, :]) * np.ones((spec.nt, spec.nx))
                err = _h_error(values - exact, spec.t, spec.x)
        else:
            if i + 1 >= len(usable):
                break
            fine_level, _, fine_values = usable[i + 1]
            diff = values - _restrict(fine_values, level, fine_level)
            err = _u_error(diff, spec.t, spec.x) if target == StudyTarget.FORWARD else _h_error(diff, spec.t, spec.x)
        steps.append(step_of(spec))
        errors.append(err)

    orders: List[Optional[float]] = [None]
    for (s0, e0), (s1, e1) in zip(zip(steps, errors), zip(steps[1:], errors[1:])):
        orders.append(math.log(e0 / e1) / math.log(s0 / s1) if e0 > 0.0 and e1 > 0.0 else None)

    study = ConvergenceStudy(
        case_id=case.id,
        target=target,
        reference=reference,
        axis=axis,
        ladder=ladder,
        steps=steps,
        errors=errors,
        orders=orders[: len(errors)],
        observed_order=_least_squares_order(steps, errors),
        delta=case.spec.with_grid(nt=ladder[0][0]).time_grid.dt if target == StudyTarget.INVERSE else None,
        complete=aborted_reason is None,
        aborted_reason=aborted_reason,
    )
    logger.info(f"[VERIFY] errors={['%.3e' % e for e in errors]}, observed order={study.observed_order}")
    return study


def format_study_table(study: ConvergenceStudy) -> str:
    lines = [f"{study.case_id} {study.target.value} ({study.axis}, {study.reference.value})",
             f"{'nt':>6} {'nx':>6} {'step':>12} {'error':>12} {'order':>8}"]
    for (nt, nx), step, err, order in zip(study.ladder, study.steps, study.errors, study.orders):
        order_text = f"{order:8.3f}" if order is not None else f"{'-':>8}"
        lines.append(f"{nt:>6} {nx:>6} {step:12.4e} {err:12.4e} {order_text}")
    if study.observed_order is not None:
        lines.append(f"observed order: {study.observed_order:.3f}")
    if not study.complete:
        lines.append(f"aborted: {study.aborted_reason}")
    return "\n".join(lines)
