#!/usr/bin/env python3
"""Tests for plane curves and Cauchy data."""

import numpy as np
import pytest
from hypershell.curves import CurveData, PlaneCurve, tangential_derivative
from hypershell.exceptions import ConfigError, NoncharacteristicError


@pytest.fixture
def arc():
    """t ↦ (t + t³/3, −sin t) on [0, 1]."""
    return PlaneCurve.from_function(
        lambda t: np.stack([t + t**3 / 3, -np.sin(t)], axis=-1),
        lambda t: np.stack([1 + t**2, -np.cos(t)], axis=-1),
        1.0,
        name="arc",
    )


class TestPlaneCurve:
    """Tests for the PlaneCurve class."""

    def test_positive_length(self):
        """Test that a curve needs t_end > 0."""
        with pytest.raises(ConfigError, match="t_end > 0"):
            PlaneCurve.line((0.0, 0.0), (1.0, -1.0), 0.0)

    def test_line_endpoints(self):
        """Test the endpoints of a straight segment."""
        line = PlaneCurve.line((0.5, 1.0), (2.0, -1.0), 0.5)
        np.testing.assert_allclose(line.start, [0.5, 1.0])
        np.testing.assert_allclose(line.end, [1.5, 0.5])

    def test_signs(self, arc):
        """Test the tangent sign pattern."""
        assert arc.signs() == (1, -1)
        arc.require_signs(1, -1)
        with pytest.raises(NoncharacteristicError, match="sign pattern"):
            arc.require_signs(1, 1)

    def test_characteristic(self):
        """Test that a vanishing tangent component is characteristic."""
        flat = PlaneCurve.line((0.0, 0.0), (1.0, 0.0))
        with pytest.raises(NoncharacteristicError, match="characteristic"):
            flat.signs()

    def test_component_inverse(self, arc):
        """Test bisection inversion of a monotone component."""
        t = np.array([0.1, 0.5, 0.9])
        x = arc.point(t)
        np.testing.assert_allclose(arc.component_inverse(0, x[:, 0]), t, atol=1e-10)
        np.testing.assert_allclose(arc.component_inverse(1, x[:, 1]), t, atol=1e-10)
        np.testing.assert_allclose(arc.graph_x2(x[:, 0]), x[:, 1], atol=1e-10)

    def test_component_inverse_extend(self, arc):
        """Test linear continuation beyond the curve."""
        c0 = arc.start[0]
        assert float(arc.component_inverse(0, c0 - 0.1, extend=True)) == pytest.approx(-0.1)

    def test_from_samples(self):
        """Test spline curves through samples."""
        t = np.linspace(0.0, 1.0, 21)
        curve = PlaneCurve.from_samples(t, np.stack([t, -2 * t], axis=-1))
        np.testing.assert_allclose(curve.point(0.37), [0.37, -0.74], atol=1e-12)
        np.testing.assert_allclose(curve.derivative(0.37), [1.0, -2.0], atol=1e-10)

    def test_from_samples_requires_zero_start(self):
        """Test that sample parameters must start at 0 and increase."""
        with pytest.raises(ConfigError, match="starting at 0"):
            PlaneCurve.from_samples([0.1, 0.5, 1.0], np.zeros((3, 2)))


class TestCurveData:
    """Tests for Cauchy data on a curve."""

    def test_gradient_round_trip(self, arc):
        """Test that (q0', q1) determine the gradient of a known field."""

        def value(p):
            return np.exp(p[..., 0]) * np.cos(p[..., 1])

        def grad(p):
            e = np.exp(p[..., 0])
            return np.stack([e * np.cos(p[..., 1]), -e * np.sin(p[..., 1])], axis=-1)

        data = CurveData.from_gradient(arc, value, grad)
        t = np.linspace(0.0, 1.0, 7)
        np.testing.assert_allclose(data.gradient(arc, t), grad(arc.point(t)), atol=1e-12)

        differenced = CurveData(data.value, data.transverse)
        np.testing.assert_allclose(differenced.gradient(arc, t), grad(arc.point(t)), atol=1e-8)

    def test_zero(self, arc):
        """Test that zero data have zero gradient."""
        np.testing.assert_array_equal(CurveData.zero().gradient(arc, np.linspace(0, 1, 5)), 0.0)


class TestTangentialDerivative:
    """Tests for the fourth-order difference along a curve."""

    def test_sine(self):
        """Test accuracy inside and at both ends of the interval."""
        t = np.array([0.0, 0.001, 0.5, 0.999, 1.0])
        d = tangential_derivative(np.sin, t, 1.0)
        np.testing.assert_allclose(d, np.cos(t), atol=1e-10)
