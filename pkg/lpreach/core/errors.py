"""Exception hierarchy and error classification

Solver pathologies (infeasible, unbounded, iteration cap, order violation,
non-convergence of the nudge loop) are reported through status fields and
never raised. The exceptions below cover malformed input and interval
evaluation failures.
"""
from typing import Optional, Tuple


class LPReachError(Exception):
    """Base class for all library errors"""


class DimensionMismatch(LPReachError, ValueError):
    """Array shapes of a problem or operand disagree"""


class UnsupportedBounds(LPReachError, ValueError):
    """General [l, u] variable bounds were passed; only x >= 0 or free is supported"""


class PivotTooSmall(LPReachError, ArithmeticError):
    """Requested pivot entry is not larger than eps_piv in magnitude"""


class IntervalError(LPReachError, ArithmeticError):
    """Interval evaluation failed"""


class DivisionByZeroInterval(IntervalError, ZeroDivisionError):
    """Divisor interval contains zero"""


class DomainError(IntervalError):
    """Interval argument leaves the domain of a primitive (e.g. tan across a pole)"""

    def __init__(self, message: str, t: Optional[float] = None):
        super().__init__(message)
        self.t = t

    def at_time(self, t: float) -> "DomainError":
        """Copy of this error stamped with the integration time"""
        return DomainError(str(self), t=t)

    def __str__(self) -> str:
        base = super().__str__()
        if self.t is None:
            return base
        return f"{base} (t={self.t!r})"


class ScenarioError(LPReachError, ValueError):
    """Scenario or problem file is malformed or inconsistent"""


def classify_error(exc: BaseException) -> Tuple[str, str]:
    """
    分类错误类型，返回 (error_type, message)

    Args:
        exc: exception raised while handling a command

    Returns:
        Stable error-type string and a one-line message
    """
    error_msg = str(exc) or exc.__class__.__name__

    if isinstance(exc, FileNotFoundError):
        return "io_error", f"file not found: {exc.filename or error_msg}"
    if isinstance(exc, (PermissionError, IsADirectoryError)):
        return "io_error", error_msg
    if isinstance(exc, ScenarioError):
        return "parse_error", error_msg
    if isinstance(exc, UnsupportedBounds):
        return "unsupported_bounds", error_msg
    if isinstance(exc, DimensionMismatch):
        return "dimension_mismatch", error_msg
    if isinstance(exc, DomainError):
        return "domain_error", error_msg
    if isinstance(exc, DivisionByZeroInterval):
        return "division_by_zero_interval", error_msg
    if isinstance(exc, PivotTooSmall):
        return "pivot_too_small", error_msg
    if isinstance(exc, LPReachError):
        return "lpreach_error", error_msg
    return "unknown_error", error_msg
