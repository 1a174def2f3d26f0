"""
Sine eigenbasis on (0, pi), coefficient transforms and the weighted mode norm
"""
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Union

import numpy as np
from scipy.integrate import simpson, trapezoid

from src.config import defaults
from src.errors import DataError, ParameterError, TruncationError
from src.schemas import SpaceGrid, TimeGrid

logger = logging.getLogger(__name__)

_ENDPOINT_TOLERANCE = 1e-10


@dataclass(frozen=True)
class SineBasis:
    """sin(k y), k = 1..K, with Simpson weights on a uniform y-grid of [0, pi]"""

    K: int
    ny: int
    y: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    sin_table: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, K: int, ny: Optional[int] = None) -> "SineBasis":
        if K < 1:
            raise ParameterError(f"K must be at least 1, got {K}")
        if ny is None:
            ny = defaults.Y_NODES_PER_MODE * K + 1
        if 2 * K > ny - 1:
            raise TruncationError(
                f"K={K} exceeds the Nyquist limit {(ny - 1) // 2} of a {ny}-node y-grid"
            )
        y = np.linspace(0.0, math.pi, ny)
        weights = simpson(np.eye(ny), x=y, axis=-1)
        sin_table = np.sin(np.outer(np.arange(1, K + 1), y))
        sin_table[:, 0] = 0.0
        sin_table[:, -1] = 0.0
        for arr in (y, weights, sin_table):
            arr.setflags(write=False)
        return cls(K=K, ny=ny, y=y, weights=weights, sin_table=sin_table)

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, self.K + 1)

    @property
    def eigenvalues(self) -> np.ndarray:
        return self.k.astype(float) ** 2


def sine_coefficients(v, basis: Union[int, SineBasis]) -> np.ndarray:
    """v_k = (2/pi) int_0^pi v(y) sin(ky) dy for samples on the basis y-grid (last axis)"""
    v = np.asarray(v, dtype=float)
    if isinstance(basis, int):
        basis = SineBasis.build(basis, v.shape[-1])
    if v.shape[-1] != basis.ny:
        raise TruncationError(f"samples have {v.shape[-1]} y-nodes, basis expects {basis.ny}")
    if not np.all(np.isfinite(v)):
        raise DataError("non-finite samples passed to sine_coefficients")

    scale = max(float(np.max(np.abs(v))), 1.0) if v.size else 1.0
    endpoint = float(np.max(np.abs(v[..., [0, -1]]))) if v.size else 0.0
    if endpoint > _ENDPOINT_TOLERANCE * scale:
        logger.warning(f"sine_coefficients: samples do not vanish at y=0, pi (max {endpoint:.3e})")

    kernel = (basis.weights[:, None] * basis.sin_table.T) * (2.0 / math.pi)
    return v @ kernel


def sine_synthesis(coeffs, y_nodes) -> np.ndarray:
    """Partial sum sum_k c_k sin(k y) at y_nodes (coefficients on the last axis)"""
    coeffs = np.asarray(coeffs, dtype=float)
    y_nodes = np.asarray(y_nodes, dtype=float)
    K = coeffs.shape[-1]
    table = np.sin(np.outer(np.arange(1, K + 1), y_nodes))
    at_ends = np.isclose(y_nodes, 0.0, rtol=0.0, atol=1e-14) | np.isclose(y_nodes, math.pi, rtol=0.0, atol=1e-14)
    table[:, at_ends] = 0.0
    return coeffs @ table


@dataclass(frozen=True)
class ModeField:
    k: int
    values: np.ndarray
    time_grid: TimeGrid
    space_grid: SpaceGrid


@dataclass(frozen=True)
class SpectralState:
    """All mode fields u_k(t, x), stacked as values[k-1, t, x]"""

    values: np.ndarray
    epsilon: float
    time_grid: TimeGrid
    space_grid: SpaceGrid

    def __post_init__(self):
        if self.values.ndim != 3 or self.values.shape[1:] != (self.time_grid.nt, self.space_grid.nx):
            raise ParameterError(f"state shape {self.values.shape} does not match the (t, x) grids")
        if not (self.epsilon > 0.0):
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")

    @classmethod
    def zeros(cls, K: int, epsilon: float, time_grid: TimeGrid, space_grid: SpaceGrid) -> "SpectralState":
        return cls(np.zeros((K, time_grid.nt, space_grid.nx)), epsilon, time_grid, space_grid)

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def modes(self) -> List[ModeField]:
        return [ModeField(k + 1, self.values[k], self.time_grid, self.space_grid) for k in range(self.K)]

    def mode(self, k: int) -> ModeField:
        if not (1 <= k <= self.K):
            raise ParameterError(f"mode index must lie in [1, {self.K}], got {k}")
        return ModeField(k, self.values[k - 1], self.time_grid, self.space_grid)

    def scaled(self, c: float) -> "SpectralState":
        return SpectralState(c * self.values, self.epsilon, self.time_grid, self.space_grid)


def mode_weights(K: int, epsilon: float) -> np.ndarray:
    """lambda_k^(5/2 + eps) = k^(2 (5/2 + eps))"""
    return np.arange(1, K + 1, dtype=float) ** (2.0 * (2.5 + epsilon))


def l2_squared(values: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Discrete ||.||^2 on L2(0, 1) along the last axis"""
    return trapezoid(values ** 2, x=x, axis=-1)


def weighted_norm_series(s: SpectralState) -> np.ndarray:
    """sum_k lambda_k^(5/2+eps) ||u_k(t)||^2 at every time level"""
    per_mode = l2_squared(s.values, s.space_grid.nodes)  # (K, nt)
    return mode_weights(s.K, s.epsilon) @ per_mode


def weighted_norm(s: SpectralState, t_index: int) -> float:
    return float(weighted_norm_series(s)[t_index])


def weighted_distance(a: SpectralState, b: SpectralState) -> float:
    """max_t of the weighted norm of a - b"""
    if a.values.shape != b.values.shape:
        raise ParameterError("states live on different grids")
    diff = SpectralState(a.values - b.values, a.epsilon, a.time_grid, a.space_grid)
    return float(np.max(weighted_norm_series(diff)))


def _check_l0(l0: float) -> None:
    if not (0.0 < l0 < math.pi):
        raise ParameterError(f"l0 must lie in (0,pi), got {l0}")


def coupling_field(s: SpectralState, l0: float) -> np.ndarray:
    """S(t, x) = sum_k k^2 u_k(t, x) sin(k l0) on the whole (t, x) grid"""
    _check_l0(l0)
    k = np.arange(1, s.K + 1, dtype=float)
    return np.tensordot(k ** 2 * np.sin(k * l0), s.values, axes=(0, 0))


def coupling_sum(s: SpectralState, l0: float, t_index: int) -> np.ndarray:
    return coupling_field(s, l0)[t_index]


def trace_field(s: SpectralState, l0: float) -> np.ndarray:
    """u(t, x, l0) = sum_k u_k(t, x) sin(k l0)"""
    _check_l0(l0)
    k = np.arange(1, s.K + 1, dtype=float)
    return np.tensordot(np.sin(k * l0), s.values, axes=(0, 0))


def spectral_tail(s: SpectralState) -> float:
    """Share of the peak weighted norm carried by the top quarter of the modes"""
    per_mode = mode_weights(s.K, s.epsilon)[:, None] * l2_squared(s.values, s.space_grid.nodes)
    totals = per_mode.sum(axis=0)
    t_peak = int(np.argmax(totals))
    if totals[t_peak] == 0.0:
        return 0.0
    top = max(1, s.K // 4)
    return float(per_mode[-top:, t_peak].sum() / totals[t_peak])
