"""
Exception hierarchy for fracsource
"""
from typing import Optional, Tuple


class FracSourceError(Exception):
    """Base class for every error raised by the package"""


class ParameterError(FracSourceError):
    """A model parameter lies outside its admissible range"""


class DomainError(FracSourceError):
    """An argument is non-finite or outside the function's domain"""


class GridError(FracSourceError):
    """A time or space grid is too coarse or malformed"""


class DataError(FracSourceError):
    """Sampled problem data contains non-finite values"""


class TruncationError(FracSourceError):
    """Requested mode count exceeds what the y-grid can resolve"""


class SingularSystemError(FracSourceError):
    """Zero pivot met while sweeping a tridiagonal system"""


class DivisionHazardError(FracSourceError):
    """The trace f(t,x,l0) is too close to zero to divide by"""

    def __init__(self, message: str, node: Optional[Tuple[int, int]] = None,
                 point: Optional[Tuple[float, float]] = None):
        super().__init__(message)
        self.node = node
        self.point = point


class RegistryError(FracSourceError):
    """Unknown manufactured-case identifier"""


class UsageError(FracSourceError):
    """An operation was called with inconsistent inputs"""


class ConfigError(UsageError):
    """A run configuration holds an unknown key or an out-of-range value"""
