"""
Two-parameter Mittag-Leffler function on the real line and the bound constant M
"""
import logging
import math
from typing import Tuple

import mpmath
import numpy as np
from scipy.special import rgamma

from src.config import defaults
from src.errors import DomainError
from src.schemas import MLBound, MLParams

logger = logging.getLogger(__name__)

# Terms below this fraction of the largest term no longer move a double
_SERIES_CUTOFF = 1e-17
_ASYMPTOTIC_TERMS = 60


def _check_argument(z: float) -> float:
    z = float(z)
    if not math.isfinite(z):
        raise DomainError(f"Mittag-Leffler argument must be finite, got {z}")
    return z


def ml_series(p: MLParams, z: float, n_terms: int = defaults.ML_SERIES_TERMS) -> Tuple[float, bool]:
    """Partial sum of sum_k z^k / Gamma(alpha k + mu) using compensated summation.

    Returns the sum and whether the tail dropped below double resolution
    within ``n_terms`` terms.
    """
    z = _check_argument(z)
    if z == 0.0:
        return 1.0 / math.gamma(p.mu), True

    log_abs = math.log(abs(z))
    terms = []
    largest = 0.0
    for k in range(n_terms):
        log_term = k * log_abs - math.lgamma(p.alpha * k + p.mu)
        if log_term > 700.0:
            return math.inf, False
        magnitude = math.exp(log_term)
        largest = max(largest, magnitude)
        terms.append(-magnitude if (z < 0.0 and k % 2 == 1) else magnitude)
        if k > 0 and magnitude < _SERIES_CUTOFF * largest:
            return math.fsum(terms), True
    return math.fsum(terms), False


def _ml_asymptotic(p: MLParams, z: float) -> float:
    """Exponential asymptotics for large positive z, algebraic tail included"""
    w = z ** (1.0 / p.alpha)
    try:
        lead = math.exp(w) * z ** ((1.0 - p.mu) / p.alpha) / p.alpha
    except OverflowError:
        logger.warning(f"E_({p.alpha},{p.mu})({z}) overflows double precision")
        return math.inf

    tail = []
    previous = math.inf
    for k in range(1, _ASYMPTOTIC_TERMS + 1):
        term = float(rgamma(p.mu - p.alpha * k)) * z ** (-k)
        if term != 0.0 and abs(term) > previous:
            # asymptotic series starts to diverge
            break
        tail.append(term)
        if term != 0.0:
            previous = abs(term)
            if previous < _SERIES_CUTOFF * lead:
                break
    return lead - math.fsum(tail)


def _ml_talbot(p: MLParams, z: float) -> float:
    """Invert the Laplace transform s^(alpha-mu) / (s^alpha - z) at t = 1"""
    with mpmath.workdps(defaults.ML_WORKING_DPS):
        a = mpmath.mpf(p.alpha)
        m = mpmath.mpf(p.mu)
        zz = mpmath.mpf(z)
        value = mpmath.invertlaplace(lambda s: s ** (a - m) / (s ** a - zz), 1, method="talbot")
    return float(value)


def mittag_leffler(p: MLParams, z: float) -> float:
    """Evaluate E_{alpha,mu}(z) for real z"""
    z = _check_argument(z)
    if z == 0.0:
        return 1.0 / math.gamma(p.mu)

    if z > 0.0:
        if z <= defaults.ML_SERIES_RADIUS:
            value, converged = ml_series(p, z)
            if converged:
                return value
        return _ml_asymptotic(p, z)

    if -z <= defaults.ML_NEGATIVE_SERIES_RADIUS:
        value, _ = ml_series(p, z)
        return value
    return _ml_talbot(p, z)


def mittag_leffler_array(p: MLParams, z) -> np.ndarray:
    """Elementwise E_{alpha,mu} over an array of real arguments"""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    for idx, value in np.ndenumerate(z):
        out[idx] = mittag_leffler(p, value)
    return out


def ml_bound(p: MLParams, z_max: float) -> MLBound:
    """Upper bound M of E_{alpha,mu} over [0, z_max], inflated by the safety margin"""
    z_max = _check_argument(z_max)
    if z_max < 0.0:
        raise DomainError(f"z_max must be non-negative, got {z_max}")

    samples = np.linspace(0.0, z_max, defaults.ML_BOUND_SAMPLES)
    peak = max(mittag_leffler(p, z) for z in samples)
    M = peak * (1.0 + defaults.ML_BOUND_MARGIN)
    logger.debug(f"ml_bound: alpha={p.alpha}, mu={p.mu}, z_max={z_max} -> M={M}")
    return MLBound(M=M, interval=(0.0, z_max))


def estimate_constant(alpha: float, T: float) -> Tuple[float, float]:
    """Constants (M, M_alpha) for the a priori estimates.

    M bounds both E_alpha and E_{alpha,alpha} over [0, c T^alpha] where c is
    the energy constant of the Gronwall step; M_alpha = M T^alpha.
    """
    z_max = defaults.GRONWALL_RATE * T ** alpha
    M = max(
        ml_bound(MLParams(alpha=alpha, mu=1.0), z_max).M,
        ml_bound(MLParams(alpha=alpha, mu=alpha), z_max).M,
    )
    return M, M * T ** alpha
