#!/usr/bin/env python3
"""Exception types for the hypershell library.

Every error class carries the process exit code the command line front end
reports for it. Library code only raises; ``hypershell.__main__`` maps.
"""

from __future__ import annotations

from typing import Any


class HypershellError(Exception):
    """Base exception for all hypershell errors."""

    exit_code: int = 1

    def __init__(self, message: str, **detail: Any) -> None:
        super().__init__(message)
        self.detail: dict[str, Any] = detail


class ConfigError(HypershellError):
    """Raised when a problem config or expression cannot be parsed."""

    exit_code = 2


# Geometry errors
# ============================================================================


class GeometryError(HypershellError):
    """Base class for surface, chart and region failures."""

    exit_code = 3


class DomainError(GeometryError):
    """Raised when a point lies outside the parameter domain."""

    pass


class CurvatureSignError(GeometryError):
    """Raised when the Gauss curvature is not negative."""

    pass


class NoncharacteristicError(GeometryError):
    """Raised when a curve or region fails the noncharacteristic condition."""

    pass


class MarginError(GeometryError):
    """Raised when a finite difference stencil leaves the sampling grid."""

    pass


class ChartError(GeometryError):
    """Raised when an asymptotic chart cannot be built or validated."""

    pass


class RadiusTooLargeError(ChartError):
    """Raised when curve tracing leaves the parameter domain."""

    pass


class BranchError(ChartError):
    """Raised when the asymptotic direction field flips branch."""

    pass


class DegenerateChartError(ChartError):
    """Raised when Π(∂y1, ∂y2) vanishes on a chart."""

    pass


# Solver errors
# ============================================================================


class SolverError(HypershellError):
    """Base class for numerical failures."""

    exit_code = 4


class ContractionError(SolverError):
    """Signals that a block is too large for the Picard contraction gate.

    Callers subdivide and retry; it only escapes when no subdivision helps.
    """

    pass


class ConvergenceError(SolverError):
    """Raised when the Picard iteration does not converge."""

    pass


class CompatibilityError(SolverError):
    """Raised when boundary data violate corner compatibility."""

    pass


class NotAnIsometryError(SolverError):
    """Raised when a field expected to be strain free is not."""

    pass


class LawError(SolverError):
    """Raised for an elastic law whose quadratic form is not semidefinite."""

    pass


class IntegrabilityWarning(UserWarning):
    """Emitted when the reconstructed displacement gradient has a large curl."""

    pass
