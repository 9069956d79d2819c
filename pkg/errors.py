"""
Error taxonomy shared by every solver module.
Each error carries the process exit code the CLI reports for it.
"""

from typing import Any, Dict, List, Optional

USAGE_EXIT_CODE = 1
SOLVER_EXIT_CODE = 2


class RobustGameError(Exception):
    """Base class for all solver and validation errors."""

    exit_code = USAGE_EXIT_CODE

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class NonStochasticRow(RobustGameError):
    """A transition row is negative somewhere or does not sum to one."""


class DimensionMismatch(RobustGameError):
    pass


class InvalidUncertaintySet(RobustGameError):
    pass


class InvalidPolicy(RobustGameError):
    pass


class InstanceTooLarge(RobustGameError):
    pass


class MaxIterExceeded(RobustGameError):
    """Raised when a fixed-point iteration hits its iteration cap."""

    exit_code = SOLVER_EXIT_CODE

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message, {"residual": residual, "iterations": iterations})
        self.residual = residual
        self.iterations = iterations


class MaxRoundsExceeded(RobustGameError):
    """Raised by Nash-iteration when the span never drops below tolerance.

    `result` holds the last (non-converged) iterate so callers can still
    evaluate it.
    """

    exit_code = SOLVER_EXIT_CODE

    def __init__(self, message: str, span_trace: List[float], result: Any = None):
        super().__init__(message, {"span_trace": span_trace[-50:]})
        self.span_trace = span_trace
        self.result = result


class UnsupportedGameClass(RobustGameError):
    exit_code = SOLVER_EXIT_CODE


class NoEquilibriumFound(RobustGameError):
    exit_code = SOLVER_EXIT_CODE


class Divergence(RobustGameError):
    exit_code = SOLVER_EXIT_CODE


class ReducibleChain(RobustGameError):
    exit_code = SOLVER_EXIT_CODE
