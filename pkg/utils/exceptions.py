"""
Exception hierarchy

Every failure raised by the engines derives from ForwardDensityError so the
command layer can turn it into a machine-readable error document and exit
code 1. Each subclass carries a stable ``code`` string.
"""

from typing import Any, Dict, Optional


class ForwardDensityError(Exception):
    """Base class for all domain errors."""

    code = "forward_density_error"

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"error": self.code, "message": self.message, "details": self.details}


class DomainError(ForwardDensityError):
    """Argument outside the mathematical domain of an operation."""

    code = "domain_error"


class NoSolution(ForwardDensityError):
    """Root search target lies outside the attainable range."""

    code = "no_solution"


class DegenerateDesign(ForwardDensityError):
    """Least-squares design matrix is rank deficient."""

    code = "degenerate_design"


class NonPositiveSmile(ForwardDensityError):
    """Fitted smile is not strictly positive over its strike range."""

    code = "non_positive_smile"


class DivisionDegenerate(ForwardDensityError):
    """A grid bound denominator vanishes, so the bound is unbounded."""

    code = "division_degenerate"


class InfeasiblePrices(ForwardDensityError):
    """Closed-form discrete calibration produced a negative probability."""

    code = "infeasible_prices"


class SingularSystem(ForwardDensityError):
    """Calibration matrix is singular or numerically so."""

    code = "singular_system"


class OutOfRange(ForwardDensityError):
    """Price vector lies outside the range of the extended model."""

    code = "out_of_range"

    def __init__(self, message: str, components: Dict[int, float], details: Optional[Dict[str, Any]] = None):
        merged = dict(details or {})
        merged["components"] = {str(k): v for k, v in components.items()}
        super().__init__(message, merged)
        self.components = components


class InfeasibleAtFloor(ForwardDensityError):
    """Calibration fails even at the smallest volatility of the search bracket."""

    code = "infeasible_at_floor"


class SingularJacobian(ForwardDensityError):
    """Jacobian of the price map is too ill-conditioned to invert."""

    code = "singular_jacobian"


class WeightCollapse(ForwardDensityError):
    """All particle weights vanished in a filter step."""

    code = "weight_collapse"


class MalformedRow(ForwardDensityError):
    """A quote file row failed validation."""

    code = "malformed_row"

    def __init__(self, message: str, line_number: int, details: Optional[Dict[str, Any]] = None):
        merged = dict(details or {})
        merged["line"] = line_number
        super().__init__(f"line {line_number}: {message}", merged)
        self.line_number = line_number


class MissingPair(ForwardDensityError):
    """No strike on a date carries both a call and a put with volume."""

    code = "missing_pair"


class ConfigError(ForwardDensityError):
    """Run configuration is inconsistent with itself or with the data."""

    code = "config_error"
