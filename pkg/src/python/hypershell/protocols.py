#!/usr/bin/env python3
"""
Protocol definitions for the callables and charts passed between modules.

These protocols enable static type checking with mypy while allowing
closed-form, spline-backed, sympy-compiled and traced implementations to be
mixed freely.
"""

from __future__ import annotations

from typing import Any, Protocol

import numpy as np


class ScalarFieldProtocol(Protocol):
    """Scalar field of the surface parameters, evaluated with broadcasting."""

    def __call__(self, x1: np.ndarray, x2: np.ndarray, /) -> np.ndarray:
        ...


class ArrayFunctionProtocol(Protocol):
    """Function of one curve or edge parameter, evaluated elementwise."""

    def __call__(self, t: np.ndarray, /) -> np.ndarray:
        ...


class ChartProtocol(Protocol):
    """Asymptotic coordinate system on part of a surface."""

    method: str

    def forward(self, x: Any) -> np.ndarray:
        """Surface parameters (..., 2) to chart coordinates (..., 2)."""
        ...

    def inverse(self, y: Any) -> np.ndarray:
        """Chart coordinates (..., 2) to surface parameters (..., 2)."""
        ...

    def jacobian(self, y: Any) -> np.ndarray:
        """∂x_a/∂y_k, shape (..., 2, 2) indexed [a, k]."""
        ...

    def validation_points(self, n: int) -> np.ndarray:
        """n×n chart coordinates covering the chart's box."""
        ...

    def to_dict(self) -> dict[str, Any]:
        """Summary used in reports."""
        ...


ScalarField = ScalarFieldProtocol
ArrayFn = ArrayFunctionProtocol
