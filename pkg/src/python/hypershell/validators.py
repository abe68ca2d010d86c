"""
Validation utilities for coercive, Pydantic-style validation.

These validators attempt to coerce values to the correct type before
validating constraints, so callers may pass numpy scalars, strings read
from configs or plain Python numbers interchangeably. The numeric
tolerances shared across the solver live at the bottom of this module.
"""

from __future__ import annotations

import math
from typing import Any, Sequence

import numpy as np

from .exceptions import ConfigError


class ValidationError(ConfigError):
    """Raised when validation fails."""

    pass


def validate_int(
    value: Any, name: str, min_val: int | None = None, max_val: int | None = None
) -> int:
    """
    Validate and coerce to integer.

    Args:
        value: Value to validate
        name: Field name for error messages
        min_val: Minimum allowed value (inclusive)
        max_val: Maximum allowed value (inclusive)

    Returns:
        Validated integer value

    Raises:
        ValidationError: If validation fails

    Examples:
        >>> validate_int("32", "grid", 2)
        32
        >>> validate_int(5.0, "strips")
        5
    """
    if isinstance(value, float) and not value.is_integer():
        raise ValidationError(f"{name} must be an integer, got {value!r}")
    try:
        result = int(value)
    except (ValueError, TypeError) as e:
        raise ValidationError(f"{name} must be an integer, got {value!r}") from e

    if min_val is not None and result < min_val:
        raise ValidationError(f"{name} must be >= {min_val}, got {result}")

    if max_val is not None and result > max_val:
        raise ValidationError(f"{name} must be <= {max_val}, got {result}")

    return result


def validate_float(
    value: Any,
    name: str,
    min_val: float | None = None,
    max_val: float | None = None,
    exclusive_min: bool = False,
) -> float:
    """
    Validate and coerce to a finite float.

    Args:
        value: Value to validate
        name: Field name for error messages
        min_val: Minimum allowed value
        max_val: Maximum allowed value (inclusive)
        exclusive_min: Treat ``min_val`` as a strict bound

    Returns:
        Validated float value

    Raises:
        ValidationError: If validation fails

    Examples:
        >>> validate_float("0.5", "radius", 0.0, exclusive_min=True)
        0.5
    """
    try:
        result = float(value)
    except (ValueError, TypeError) as e:
        raise ValidationError(f"{name} must be a number, got {value!r}") from e

    if not math.isfinite(result):
        raise ValidationError(f"{name} must be finite, got {result}")

    if min_val is not None:
        if exclusive_min and result <= min_val:
            raise ValidationError(f"{name} must be > {min_val}, got {result}")
        if not exclusive_min and result < min_val:
            raise ValidationError(f"{name} must be >= {min_val}, got {result}")

    if max_val is not None and result > max_val:
        raise ValidationError(f"{name} must be <= {max_val}, got {result}")

    return result


def validate_positive(value: Any, name: str) -> float:
    """Validate a strictly positive finite float."""
    return validate_float(value, name, 0.0, exclusive_min=True)


def validate_point(value: Any, name: str, dim: int = 2) -> np.ndarray:
    """
    Validate and coerce to a point (1-D float array of length ``dim``).

    Args:
        value: Sequence of coordinates
        name: Field name for error messages
        dim: Expected number of coordinates

    Returns:
        Float array of shape ``(dim,)``

    Raises:
        ValidationError: If validation fails
    """
    try:
        result = np.asarray(value, dtype=float).reshape(-1)
    except (ValueError, TypeError) as e:
        raise ValidationError(f"{name} must be a sequence of {dim} numbers, got {value!r}") from e

    if result.shape != (dim,):
        raise ValidationError(f"{name} must have {dim} coordinates, got {result.size}")

    if not np.all(np.isfinite(result)):
        raise ValidationError(f"{name} must be finite, got {value!r}")

    return result


def validate_choice(value: Any, name: str, choices: Sequence[Any]) -> Any:
    """Validate that ``value`` is one of ``choices``."""
    if value not in choices:
        allowed = ", ".join(repr(c) for c in choices)
        raise ValidationError(f"{name} must be one of {allowed}, got {value!r}")
    return value


def validate_list_float(value: Any, name: str, allow_empty: bool = False) -> list[float]:
    """
    Validate and coerce to list of finite floats.

    Examples:
        >>> validate_list_float(["0.1", 0.05], "eps_list")
        [0.1, 0.05]
    """
    if not isinstance(value, (list, tuple, np.ndarray)):
        raise ValidationError(f"{name} must be a list, got {type(value)}")

    if not allow_empty and len(value) == 0:
        raise ValidationError(f"{name} cannot be empty")

    return [validate_float(item, f"{name}[{i}]") for i, item in enumerate(value)]


# Numerical tolerances
TOL_ASYM_REL = 1e-7
JACOBIAN_MIN = 1e-8
INVERSE_TOL = 1e-8
DEGENERATE_PI = 1e-10
KAPPA_MIN = 1e-10
NONCHAR_TOL = 1e-8
PICARD_TOL = 1e-11
PICARD_MAX_ITER = 200
CORNER_TOL = 1e-9
DEGENERATE_DIAMETER = 1e-8
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50
BISECTION_TOL = 1e-12
SYMMETRY_TOL = 1e-10
