"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An argument lies outside the domain of the operation."""


class ConfigurationError(ValueError):
    """Inputs are individually valid but inconsistent with each other."""


class UndefinedCorrelationError(ArithmeticError):
    """A correlation was requested for a coordinate with zero variance."""


class InadmissibleTargetError(ValueError):
    """A target correlation matrix failed the admissibility gate."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class InfeasibleTargetError(ValueError):
    """No simplex weights reproduce the target correlations."""

    def __init__(self, residual: float, tolerance: float):
        super().__init__(
            f"target cannot be generated by the extreme measures: "
            f"best max-norm residual {residual:.3e} exceeds {tolerance:.1e}"
        )
        self.residual = residual
        self.tolerance = tolerance
