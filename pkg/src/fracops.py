"""
Discrete fractional calculus on uniform time grids.

The Caputo derivative uses the L1 scheme and the Riemann-Liouville integral
the product trapezoidal rule. Both operate along axis 0 so a (nt, nx) field
is differentiated column by column in one call.
"""
import logging
import math
from dataclasses import dataclass
from typing import Union

import numpy as np
from scipy.special import gamma

from src.errors import GridError, ParameterError
from src.schemas import FracKind, TimeGrid

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FracWeights:
    alpha: float
    kind: FracKind
    coefficients: np.ndarray


def _check_open_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0,1), got {alpha}")


def l1_weights(alpha: float, m: int) -> FracWeights:
    """L1 weights b_j = (j+1)^(1-alpha) - j^(1-alpha), j = 0..m-1"""
    _check_open_alpha(alpha)
    if m < 1:
        raise ParameterError(f"step index m must be at least 1, got {m}")
    j = np.arange(m + 1, dtype=float)
    powers = j ** (1.0 - alpha)
    coefficients = np.diff(powers)
    coefficients.setflags(write=False)
    return FracWeights(alpha=alpha, kind=FracKind.CAPUTO_L1, coefficients=coefficients)


def rl_weights(alpha: float, n: int) -> FracWeights:
    """Product trapezoidal weights for J^alpha at node n (without dt^alpha / Gamma(alpha+2))"""
    if not (alpha > 0.0):
        raise ParameterError(f"alpha must be positive, got {alpha}")
    a = np.zeros(n + 1)
    if n == 0:
        return FracWeights(alpha=alpha, kind=FracKind.RL_TRAPEZOID, coefficients=a)
    p = alpha + 1.0
    j = np.arange(1, n, dtype=float)
    a[0] = (n - 1.0) ** p - (n - alpha - 1.0) * n ** alpha
    a[1:n] = (n - j + 1.0) ** p - 2.0 * (n - j) ** p + (n - j - 1.0) ** p
    a[n] = 1.0
    a.setflags(write=False)
    return FracWeights(alpha=alpha, kind=FracKind.RL_TRAPEZOID, coefficients=a)


def _as_time_series(v, grid: TimeGrid) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.ndim == 0 or v.shape[0] != grid.nt:
        raise GridError(f"series has {v.shape[0] if v.ndim else 0} time nodes, grid has {grid.nt}")
    return v


def l1_history(v: np.ndarray, m: int, b: np.ndarray) -> np.ndarray:
    """Sum_{j=1}^{m-1} b_j (v^{m-j} - v^{m-j-1}) over the leading axis"""
    if m < 2:
        return np.zeros(v.shape[1:])
    diffs = np.diff(v[:m], axis=0)  # diffs[i] = v^{i+1} - v^i
    # b_j multiplies diffs[m-j-1]
    return np.tensordot(b[1:m][::-1], diffs[: m - 1], axes=(0, 0))


def caputo_l1(v, grid: TimeGrid, alpha: float) -> np.ndarray:
    """L1 approximation of D_t^alpha v at nodes 1..nt-1.

    Node 0 is NaN: the scheme has no value there.
    """
    _check_open_alpha(alpha)
    v = _as_time_series(v, grid)
    b = l1_weights(alpha, grid.nt - 1).coefficients
    c0 = grid.dt ** (-alpha) / gamma(2.0 - alpha)

    diffs = np.diff(v, axis=0)
    out = np.full(v.shape, np.nan)
    for m in range(1, grid.nt):
        # sum_{j=0}^{m-1} b_j (v^{m-j} - v^{m-j-1})
        out[m] = c0 * np.tensordot(b[:m][::-1], diffs[:m], axes=(0, 0))
    return out


def rl_integral(v, grid: TimeGrid, alpha: float) -> np.ndarray:
    """Product trapezoidal approximation of J_t^alpha v; exact for piecewise-linear v"""
    if not (alpha > 0.0):
        raise ParameterError(f"alpha must be positive, got {alpha}")
    v = _as_time_series(v, grid)
    scale = grid.dt ** alpha / gamma(alpha + 2.0)

    out = np.zeros(v.shape)
    for n in range(1, grid.nt):
        a = rl_weights(alpha, n).coefficients
        out[n] = scale * np.tensordot(a, v[: n + 1], axes=(0, 0))
    return out


def extrapolate_initial(values: np.ndarray) -> np.ndarray:
    """Fill row 0 by linear extrapolation from rows 1 and 2 (row 1 copied when only two rows)"""
    out = np.array(values, dtype=float, copy=True)
    if out.shape[0] < 2:
        raise GridError("extrapolation needs at least 2 time nodes")
    if out.shape[0] == 2:
        out[0] = out[1]
    else:
        out[0] = 2.0 * out[1] - out[2]
    return out


def l1_solve_linear(
    grid: TimeGrid,
    alpha: float,
    c1: float,
    c2: Union[float, np.ndarray],
    y0: float,
) -> np.ndarray:
    """Solve D^alpha y = c1 y + c2(t), y(0) = y0 by the implicit L1 scheme"""
    _check_open_alpha(alpha)
    c2 = np.broadcast_to(np.asarray(c2, dtype=float), (grid.nt,))
    b = l1_weights(alpha, grid.nt - 1).coefficients
    c0 = grid.dt ** (-alpha) / gamma(2.0 - alpha)
    if math.isclose(c0, c1):
        raise ParameterError("time step resonates with c1; refine the grid")

    y = np.zeros(grid.nt)
    y[0] = y0
    for m in range(1, grid.nt):
        history = l1_history(y, m, b)
        y[m] = (c0 * y[m - 1] - c0 * history + c2[m]) / (c0 - c1)
    return y


def fractional_power(beta: float, alpha: float, t: np.ndarray, kind: str = "caputo") -> np.ndarray:
    """Exact D^alpha t^beta (kind='caputo') or J^alpha t^beta (kind='integral')"""
    t = np.asarray(t, dtype=float)
    if kind == "caputo":
        if beta == 0.0:
            return np.zeros_like(t)
        return gamma(beta + 1.0) / gamma(beta + 1.0 - alpha) * t ** (beta - alpha)
    return gamma(beta + 1.0) / gamma(beta + 1.0 + alpha) * t ** (beta + alpha)
