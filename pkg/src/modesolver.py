"""
Implicit L1 solver for the Fourier modes

    D_t^alpha u_k - (u_k)_xx + lambda_k u_k = r_k(t, x),  u_k(t, 0) = u_k(t, 1) = 0,
    u_k(0, x) = phi_k(x).

Modes share the (t, x) grid so they are marched together: the Thomas sweep
runs over the x-axis with every mode in a trailing batch axis.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.special import gamma

from src.config import settings
from src.errors import DataError, SingularSystemError
from src.fracops import l1_history, l1_weights
from src.schemas import SpaceGrid, TimeGrid
from src.spectral import ModeField

logger = logging.getLogger(__name__)

RhsLike = Union[np.ndarray, Callable[[float, np.ndarray], np.ndarray]]


@dataclass
class TridiagonalSystem:
    """sub[i] u[i-1] + diag[i] u[i] + sup[i] u[i+1] = rhs[i]; sub[0] and sup[-1] are ignored.

    rhs may carry extra trailing axes (one column per batched system); the
    diagonals then broadcast against it.
    """

    sub: np.ndarray
    diag: np.ndarray
    sup: np.ndarray
    rhs: np.ndarray


def thomas_solve(sys: TridiagonalSystem) -> np.ndarray:
    """Thomas algorithm without pivoting, batched over trailing axes of rhs"""
    rhs = np.asarray(sys.rhs, dtype=float)
    n = rhs.shape[0]
    sub = np.broadcast_to(np.asarray(sys.sub, dtype=float), rhs.shape)
    diag = np.broadcast_to(np.asarray(sys.diag, dtype=float), rhs.shape)
    sup = np.broadcast_to(np.asarray(sys.sup, dtype=float), rhs.shape)

    c_prime = np.empty(rhs.shape)
    d_prime = np.empty(rhs.shape)

    pivot = diag[0]
    if np.any(pivot == 0.0):
        raise SingularSystemError("zero pivot at row 0")
    c_prime[0] = sup[0] / pivot
    d_prime[0] = rhs[0] / pivot
    for i in range(1, n):
        pivot = diag[i] - sub[i] * c_prime[i - 1]
        if np.any(pivot == 0.0):
            raise SingularSystemError(f"zero pivot at row {i}")
        c_prime[i] = sup[i] / pivot
        d_prime[i] = (rhs[i] - sub[i] * d_prime[i - 1]) / pivot

    x = np.empty(rhs.shape)
    x[-1] = d_prime[-1]
    for i in range(n - 2, -1, -1):
        x[i] = d_prime[i] - c_prime[i] * x[i + 1]
    return x


def _head_coefficient(time_grid: TimeGrid, alpha: float) -> float:
    return time_grid.dt ** (-alpha) / gamma(2.0 - alpha)


def step_mode(
    history: np.ndarray,
    lambda_k: Union[float, np.ndarray],
    rhs_m: np.ndarray,
    alpha: float,
    time_grid: TimeGrid,
    space_grid: SpaceGrid,
) -> np.ndarray:
    """Advance to level m = len(history).

    history has shape (m, nx) for one mode or (m, nx, B) for a batch of B
    modes with lambda_k of shape (B,). Returns the new level with zero
    Dirichlet values at both ends.
    """
    m = history.shape[0]
    c0 = _head_coefficient(time_grid, alpha)
    b = l1_weights(alpha, max(m, 1)).coefficients
    inv_dx2 = 1.0 / space_grid.dx ** 2

    memory = l1_history(history, m, b)
    rhs = np.asarray(rhs_m, dtype=float) + c0 * history[m - 1] - c0 * memory
    interior = rhs[1:-1]

    n = space_grid.nx - 2
    lam = np.asarray(lambda_k, dtype=float)
    diag = np.broadcast_to(c0 + 2.0 * inv_dx2 + lam, interior.shape)
    off = np.full(interior.shape, -inv_dx2)
    u_inner = thomas_solve(TridiagonalSystem(sub=off, diag=diag, sup=off, rhs=interior)) if n > 0 else interior

    out = np.zeros(rhs.shape)
    out[1:-1] = u_inner
    return out


def _sample_rhs(rhs: RhsLike, time_grid: TimeGrid, space_grid: SpaceGrid) -> np.ndarray:
    if callable(rhs):
        t = time_grid.nodes
        values = np.stack([np.asarray(rhs(t[m], space_grid.nodes), dtype=float) for m in range(time_grid.nt)])
    else:
        values = np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(values)):
        raise DataError("right-hand side has non-finite values on the grid")
    return values


def solve_mode(
    k: int,
    phi_k: np.ndarray,
    rhs: RhsLike,
    time_grid: TimeGrid,
    space_grid: SpaceGrid,
    alpha: float,
    lambda_k: Optional[float] = None,
) -> ModeField:
    """March one mode through all time levels; lambda_k defaults to k^2"""
    lam = float(k * k) if lambda_k is None else float(lambda_k)
    r = _sample_rhs(rhs, time_grid, space_grid)
    values = _march(np.asarray(phi_k, dtype=float), r, np.asarray(lam), alpha, time_grid, space_grid)
    return ModeField(k=k, values=values, time_grid=time_grid, space_grid=space_grid)


def _march(
    phi: np.ndarray,
    rhs: np.ndarray,
    lam: np.ndarray,
    alpha: float,
    time_grid: TimeGrid,
    space_grid: SpaceGrid,
) -> np.ndarray:
    u = np.zeros(rhs.shape)
    u[0] = phi
    u[0, 0] = 0.0
    u[0, -1] = 0.0
    for m in range(1, time_grid.nt):
        u[m] = step_mode(u[:m], lam, rhs[m], alpha, time_grid, space_grid)
    return u


def solve_modes(
    phi: np.ndarray,
    rhs: np.ndarray,
    time_grid: TimeGrid,
    space_grid: SpaceGrid,
    alpha: float,
    workers: Optional[int] = None,
) -> np.ndarray:
    """Solve all modes at once.

    phi has shape (K, nx), rhs (K, nt, nx); returns (K, nt, nx). With more
    than one worker the modes are split into contiguous chunks.
    """
    phi = np.asarray(phi, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if not np.all(np.isfinite(rhs)):
        raise DataError("right-hand side has non-finite values on the grid")
    K = phi.shape[0]
    lam = np.arange(1, K + 1, dtype=float) ** 2
    workers = settings.WORKERS if workers is None else workers

    def run_chunk(idx: np.ndarray) -> np.ndarray:
        # (B, nt, nx) -> (nt, nx, B) so the batch rides on the trailing axis
        u = _march(phi[idx].T, np.moveaxis(rhs[idx], 0, -1), lam[idx], alpha, time_grid, space_grid)
        return np.moveaxis(u, -1, 0)

    if workers <= 1 or K == 1:
        return run_chunk(np.arange(K))

    chunks = [c for c in np.array_split(np.arange(K), min(workers, K)) if c.size]
    logger.debug(f"solve_modes: {K} modes over {len(chunks)} chunks")
    with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
        parts = list(pool.map(run_chunk, chunks))
    return np.concatenate(parts, axis=0)
