"""
Forward subdiffusion solve for a known source factor h(t, x) and synthesis
of the overdetermination trace psi(t, x) = u(t, x, l0).
"""
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, List, Optional, Tuple

import numpy as np

from src.config import defaults
from src.errors import DataError, GridError, ParameterError, UsageError
from src.modesolver import solve_modes
from src.schemas import SpaceGrid, TimeGrid
from src.spectral import SineBasis, SpectralState, sine_coefficients, sine_synthesis, trace_field

logger = logging.getLogger(__name__)

# Samplers are vectorized: they are called with broadcastable numpy arrays
FieldSampler = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
InitialSampler = Callable[[np.ndarray, np.ndarray], np.ndarray]
PlaneSampler = Callable[[np.ndarray, np.ndarray], np.ndarray]


def _zero_field(t, x, y):
    return np.zeros(np.broadcast(t, x, y).shape)


def _zero_initial(x, y):
    return np.zeros(np.broadcast(x, y).shape)


@dataclass
class ProblemSpec:
    """Data of the initial-boundary value problem with overdetermination at y = l0.

    Sampler arguments: f, g and the third y-derivatives take (t, x, y); phi and
    phi_yyy take (x, y); h_true, psi, psi_caputo and psi_xx take (t, x).
    ``psi_data`` replaces the psi sampler with measured grid values.
    """

    alpha: float
    T: float
    l0: float
    f: FieldSampler
    g: FieldSampler = _zero_field
    phi: InitialSampler = _zero_initial
    K: int = defaults.MODES
    epsilon: float = defaults.EPSILON
    nt: int = defaults.NT
    nx: int = defaults.NX
    ny: Optional[int] = None
    h_true: Optional[PlaneSampler] = None
    psi: Optional[PlaneSampler] = None
    psi_data: Optional[np.ndarray] = field(default=None, repr=False)
    psi_caputo: Optional[PlaneSampler] = None
    psi_xx: Optional[PlaneSampler] = None
    f_yyy: Optional[FieldSampler] = None
    g_yyy: Optional[FieldSampler] = None
    phi_yyy: Optional[InitialSampler] = None
    prefer_analytic: bool = True
    name: str = "custom"

    def __post_init__(self):
        if not (0.0 < self.alpha < 1.0):
            raise ParameterError(f"alpha must lie in (0,1), got {self.alpha}")
        if not (0.0 < self.l0 < math.pi):
            raise ParameterError(f"l0 must lie in (0,pi), got {self.l0}")
        if self.K < 1:
            raise ParameterError(f"K must be at least 1, got {self.K}")
        if not (self.epsilon > 0.0):
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        # grids validate T, nt, nx
        self.time_grid
        self.space_grid

    # ------------------------------------------------------------------
    # grids
    # ------------------------------------------------------------------
    @cached_property
    def time_grid(self) -> TimeGrid:
        return TimeGrid(T=self.T, nt=self.nt)

    @cached_property
    def space_grid(self) -> SpaceGrid:
        return SpaceGrid(nx=self.nx)

    @cached_property
    def basis(self) -> SineBasis:
        return SineBasis.build(self.K, self.ny)

    @property
    def t(self) -> np.ndarray:
        return self.time_grid.nodes

    @property
    def x(self) -> np.ndarray:
        return self.space_grid.nodes

    def with_grid(self, nt: Optional[int] = None, nx: Optional[int] = None, ny: Optional[int] = None) -> "ProblemSpec":
        """Same problem on other grids; measured psi does not carry over"""
        psi_data = self.psi_data
        nt = self.nt if nt is None else nt
        nx = self.nx if nx is None else nx
        if psi_data is not None and (nt, nx) != (self.nt, self.nx):
            psi_data = None
        return dataclasses.replace(self, nt=nt, nx=nx, ny=self.ny if ny is None else ny, psi_data=psi_data)

    def refined(self, factor: int) -> "ProblemSpec":
        return self.with_grid(
            nt=self.time_grid.refined(factor).nt,
            nx=self.space_grid.refined(factor).nx,
        )

    def with_psi(self, psi: np.ndarray) -> "ProblemSpec":
        """Attach measured trace values; analytic psi derivatives no longer apply"""
        return dataclasses.replace(self, psi=None, psi_data=np.asarray(psi, dtype=float), psi_caputo=None, psi_xx=None)

    # ------------------------------------------------------------------
    # sampled data
    # ------------------------------------------------------------------
    def sample_volume(self, sampler: FieldSampler, label: str) -> np.ndarray:
        t = self.t[:, None, None]
        x = self.x[None, :, None]
        y = self.basis.y[None, None, :]
        shape = (self.nt, self.nx, self.basis.ny)
        values = np.broadcast_to(np.asarray(sampler(t, x, y), dtype=float), shape)
        if not np.all(np.isfinite(values)):
            raise DataError(f"{label} has non-finite samples on the grid")
        return values

    def sample_plane(self, sampler: Callable, label: str, *, at_l0: bool = False) -> np.ndarray:
        t = self.t[:, None]
        x = self.x[None, :]
        raw = sampler(t, x, self.l0) if at_l0 else sampler(t, x)
        values = np.broadcast_to(np.asarray(raw, dtype=float), (self.nt, self.nx)).copy()
        if not np.all(np.isfinite(values)):
            raise DataError(f"{label} has non-finite samples on the grid")
        return values

    @cached_property
    def f_volume(self) -> np.ndarray:
        return self.sample_volume(self.f, "f")

    @cached_property
    def g_volume(self) -> np.ndarray:
        return self.sample_volume(self.g, "g")

    @cached_property
    def phi_plane(self) -> np.ndarray:
        x = self.x[:, None]
        y = self.basis.y[None, :]
        values = np.broadcast_to(np.asarray(self.phi(x, y), dtype=float), (self.nx, self.basis.ny))
        if not np.all(np.isfinite(values)):
            raise DataError("phi has non-finite samples on the grid")
        return values

    @cached_property
    def f_k(self) -> np.ndarray:
        """(K, nt, nx)"""
        return np.moveaxis(sine_coefficients(self.f_volume, self.basis), -1, 0)

    @cached_property
    def g_k(self) -> np.ndarray:
        return np.moveaxis(sine_coefficients(self.g_volume, self.basis), -1, 0)

    @cached_property
    def phi_k(self) -> np.ndarray:
        """(K, nx)"""
        return np.moveaxis(sine_coefficients(self.phi_plane, self.basis), -1, 0)

    @cached_property
    def f_l0(self) -> np.ndarray:
        return self.sample_plane(self.f, "f(., ., l0)", at_l0=True)

    @cached_property
    def g_l0(self) -> np.ndarray:
        return self.sample_plane(self.g, "g(., ., l0)", at_l0=True)

    @cached_property
    def h_grid(self) -> np.ndarray:
        if self.h_true is None:
            raise UsageError("the forward problem needs h_true")
        return self.sample_plane(self.h_true, "h_true")

    @cached_property
    def psi_grid(self) -> np.ndarray:
        if self.psi_data is not None:
            psi = np.asarray(self.psi_data, dtype=float)
            if psi.shape != (self.nt, self.nx):
                raise GridError(f"psi data has shape {psi.shape}, grid is {(self.nt, self.nx)}")
            if not np.all(np.isfinite(psi)):
                raise DataError("psi data has non-finite values")
            return psi
        if self.psi is None:
            raise UsageError("the inverse problem needs psi (sampler or data)")
        return self.sample_plane(self.psi, "psi")

    @property
    def has_analytic_psi_derivatives(self) -> bool:
        return self.psi_caputo is not None and self.psi_xx is not None and self.psi_data is None

    def check_conditions(self) -> List[str]:
        """Sample the compatibility conditions on f, g and phi; returns warnings"""
        warnings: List[str] = []
        f_min = float(np.min(np.abs(self.f_l0)))
        if f_min < defaults.DIVISION_HAZARD:
            warnings.append(f"f(t,x,l0) nearly vanishes on the grid (min |f| = {f_min:.3e})")

        dy = self.basis.y[1] - self.basis.y[0]
        checks = (("f", self.f_volume), ("g", self.g_volume), ("phi", self.phi_plane))
        for label, values in checks:
            scale = max(float(np.max(np.abs(values))), 1.0)
            ends = float(np.max(np.abs(values[..., [0, -1]])))
            if ends > 1e-10 * scale:
                warnings.append(f"{label} does not vanish at y=0, pi (max {ends:.3e})")
            if values.shape[-1] >= 3:
                second = np.abs(np.stack([
                    values[..., 0] - 2.0 * values[..., 1] + values[..., 2],
                    values[..., -1] - 2.0 * values[..., -2] + values[..., -3],
                ])) / dy ** 2
                if float(np.max(second)) > 10.0 * dy * scale:
                    warnings.append(f"{label}_yy does not vanish at y=0, pi (max {float(np.max(second)):.3e})")

        phi_x_ends = float(np.max(np.abs(self.phi_plane[[0, -1], :])))
        if phi_x_ends > 1e-10 * max(float(np.max(np.abs(self.phi_plane))), 1.0):
            warnings.append(f"phi does not vanish at x=0, 1 (max {phi_x_ends:.3e})")

        for message in warnings:
            logger.warning(f"[CONDITIONS] {self.name}: {message}")
        return warnings


@dataclass(frozen=True)
class ModeData:
    f_k: np.ndarray
    g_k: np.ndarray
    phi_k: np.ndarray


def decompose_data(spec: ProblemSpec) -> ModeData:
    """Sine coefficients of f, g (every (t, x) node) and phi (every x node)"""
    return ModeData(f_k=spec.f_k, g_k=spec.g_k, phi_k=spec.phi_k)


@dataclass
class FullField:
    """u(t, x, y) assembled lazily from the mode fields"""

    state: SpectralState
    y: np.ndarray

    @cached_property
    def values(self) -> np.ndarray:
        """(nt, nx, ny)"""
        return sine_synthesis(np.moveaxis(self.state.values, 0, -1), self.y)

    def trace(self, l0: float) -> np.ndarray:
        return trace_field(self.state, l0)


def solve_forward(spec: ProblemSpec) -> Tuple[SpectralState, FullField]:
    if spec.h_true is None:
        raise UsageError("solve_forward needs a known source factor h_true")
    logger.info(f"[FORWARD] {spec.name}: alpha={spec.alpha}, T={spec.T}, K={spec.K}, grid=({spec.nt}, {spec.nx})")

    rhs = spec.g_k + spec.f_k * spec.h_grid[None, :, :]
    values = solve_modes(spec.phi_k, rhs, spec.time_grid, spec.space_grid, spec.alpha)
    state = SpectralState(values, spec.epsilon, spec.time_grid, spec.space_grid)
    logger.info(f"[FORWARD] Completed: max |u_k| = {float(np.max(np.abs(values))):.6e}")
    return state, FullField(state=state, y=spec.basis.y)


def synthesize_data(spec: ProblemSpec, noise_level: float = 0.0, seed: int = defaults.SEED, fine_factor: int = 1) -> np.ndarray:
    """psi = u(., ., l0) + noise_level * ||u(., ., l0)||_inf * xi on the problem's (t, x) grid"""
    if noise_level < 0.0:
        raise ParameterError(f"noise_level must be non-negative, got {noise_level}")
    if fine_factor < 1:
        raise ParameterError(f"fine_factor must be at least 1, got {fine_factor}")

    source = spec.refined(fine_factor) if fine_factor > 1 else spec
    state, _ = solve_forward(source)
    trace = trace_field(state, spec.l0)
    if fine_factor > 1:
        trace = trace[::fine_factor, ::fine_factor].copy()
    logger.info(f"[SYNTHESIZE] trace on {trace.shape} (fine_factor={fine_factor}), noise_level={noise_level}, seed={seed}")

    if noise_level == 0.0:
        return trace
    rng = np.random.Generator(np.random.Philox(seed))
    scale = noise_level * float(np.max(np.abs(trace)))
    return trace + scale * rng.standard_normal(trace.shape)
