#!/usr/bin/env python3
"""Tests for asymptotic charts, curve normalization and the normal form."""

import math

import numpy as np
import pytest
from hypershell.asymptotic import (
    MonotoneMap,
    asymptotic_directions_at,
    build_chart,
    curve_image,
    export_chart,
    has_closed_form,
    normal_form,
    normalize_chart_along_curve,
)
from hypershell.curves import PlaneCurve
from hypershell.exceptions import (
    ChartError,
    ConfigError,
    CurvatureSignError,
    NoncharacteristicError,
    RadiusTooLargeError,
)
from hypershell.geometry import SurfacePatch


@pytest.fixture
def saddle():
    return SurfacePatch.saddle()


@pytest.fixture
def saddle_chart(saddle):
    return build_chart(saddle, (0.0, 0.0), 0.5)


class TestAsymptoticDirections:
    """Tests for asymptotic_directions_at."""

    def test_saddle(self, saddle):
        """Test that the coordinate axes are asymptotic on h = x1·x2."""
        plus, minus = asymptotic_directions_at(saddle, (0.0, 0.0))
        np.testing.assert_allclose(plus, [1.0, 0.0], atol=1e-12)
        np.testing.assert_allclose(minus, [0.0, 1.0], atol=1e-12)

    def test_hyperbolic_paraboloid(self):
        """Test the ±45° directions on (x1² − x2²)/2."""
        plus, minus = asymptotic_directions_at(SurfacePatch.hyperbolic_paraboloid(), (0, 0))
        np.testing.assert_allclose(plus, np.array([1.0, 1.0]) / math.sqrt(2), atol=1e-12)
        np.testing.assert_allclose(minus, np.array([1.0, -1.0]) / math.sqrt(2), atol=1e-12)

    def test_directions_are_null(self):
        """Test Π(ξ, ξ) = 0 and |ξ|_g = 1 away from the origin."""
        surface = SurfacePatch.separable()
        x = (0.4, -0.3)
        forms = surface.forms(*x)
        for xi in asymptotic_directions_at(surface, x):
            assert float(forms.second(xi, xi)) == pytest.approx(0.0, abs=1e-12)
            assert float(forms.inner(xi, xi)) == pytest.approx(1.0)

    def test_plane(self):
        """Test that a flat surface has no asymptotic directions."""
        plane = SurfacePatch.from_expression("0", validate=False)
        with pytest.raises(CurvatureSignError):
            asymptotic_directions_at(plane, (0.0, 0.0))


class TestBuildChart:
    """Tests for chart construction."""

    def test_saddle_is_translation(self, saddle):
        """Test that the saddle chart is a translation of the identity."""
        chart = build_chart(saddle, (0.2, -0.1), 0.3)
        assert chart.method == "linear"
        np.testing.assert_allclose(chart.forward((0.4, 0.1)), [0.2, 0.2], atol=1e-14)
        np.testing.assert_allclose(chart.inverse((0.0, 0.0)), [0.2, -0.1])

    def test_hyperbolic_paraboloid_is_rotation(self):
        """Test that the chart lines are x1 ± x2 = const."""
        chart = build_chart(SurfacePatch.hyperbolic_paraboloid(), (0.0, 0.0), 0.5)
        y = chart.forward((0.3, 0.1))
        np.testing.assert_allclose(y, np.array([0.4, 0.2]) / math.sqrt(2), atol=1e-14)

    def test_monkey_saddle(self):
        """Test the closed-form chart on the monkey saddle near (1, 0)."""
        surface = SurfacePatch.monkey_saddle(domain=(0.5, 1.5, -0.5, 0.5))
        chart = build_chart(surface, (1.0, 0.0), 0.2)
        assert chart.method == "holomorphic"
        x = np.array([[1.1, 0.05], [0.9, -0.1]])
        np.testing.assert_allclose(chart.inverse(chart.forward(x)), x, atol=1e-12)

    def test_separable(self):
        """Test the quadrature chart on a separable height."""
        chart = build_chart(SurfacePatch.separable(), (0.1, 0.0), 0.4)
        assert chart.method == "separable"
        np.testing.assert_allclose(chart.forward((0.1, 0.0)), [0.0, 0.0], atol=1e-12)

    def test_traced_chart_on_generic_surface(self):
        """Test that a surface without a closed form gets a traced chart."""
        surface = SurfacePatch.from_expression("x1*x2 + 0.1*x1^3")
        assert not has_closed_form(surface)
        chart = build_chart(surface, (0.0, 0.0), 0.3)
        assert chart.method == "ode"
        y = np.array([[0.1, -0.05], [-0.2, 0.15]])
        np.testing.assert_allclose(chart.forward(chart.inverse(y)), y, atol=1e-8)

    def test_traced_chart_matches_closed_form(self, saddle):
        """Test that tracing the saddle reproduces its straight coordinate lines."""
        chart = build_chart(saddle, (0.0, 0.0), 0.3, method="ode")
        x = chart.inverse(np.array([[0.1, 0.0], [0.0, -0.1]]))
        assert abs(x[0, 1]) < 1e-8
        assert abs(x[1, 0]) < 1e-8

    def test_closed_unavailable(self):
        """Test that method='closed' fails without a closed form."""
        surface = SurfacePatch.from_expression("x1*x2 + 0.1*x1^3")
        with pytest.raises(ChartError, match="no closed-form chart"):
            build_chart(surface, (0.0, 0.0), 0.3, method="closed")

    def test_radius_too_large(self, saddle):
        """Test that a patch leaving the domain is rejected."""
        with pytest.raises(RadiusTooLargeError):
            build_chart(saddle, (0.9, 0.0), 0.3)

    def test_unknown_method(self, saddle):
        """Test that an unknown method is a config error."""
        with pytest.raises(ConfigError):
            build_chart(saddle, (0.0, 0.0), 0.3, method="magic")

    def test_sign_tag_and_reflection(self, saddle_chart):
        """Test that reflecting y2 flips the sign of Π(∂y1, ∂y2)."""
        assert saddle_chart.sign_tag == -1
        assert saddle_chart.reflected().sign_tag == 1

    def test_export(self, saddle_chart):
        """Test the JSON-ready chart export."""
        data = export_chart(saddle_chart, 5)
        assert data["method"] == "linear"
        assert len(data["y"]) == 25
        assert len(data["jacobian"]) == 25


class TestNormalizeChart:
    """Tests for normalize_chart_along_curve."""

    def test_already_normalized(self, saddle_chart):
        """Test that γ(t) = (t, −t) leaves the saddle chart unchanged."""
        gamma = PlaneCurve.line((0.0, 0.0), (1.0, -1.0), 0.3)
        chart = normalize_chart_along_curve(saddle_chart, gamma)
        np.testing.assert_allclose(chart.forward((0.2, 0.1)), [0.2, 0.1], atol=1e-10)

    def test_root_method(self, saddle_chart):
        """Test that a normalized chart reports the method of the chart it wraps."""
        gamma = PlaneCurve.line((0.0, 0.0), (2.0, -1.0), 0.2)
        chart = normalize_chart_along_curve(saddle_chart, gamma)
        assert chart.method == "reparametrized"
        assert chart.root_method == "linear"
        assert chart.to_dict()["base_method"] == "linear"

    def test_anisotropic_stretch(self, saddle_chart):
        """Test that γ(t) = (2t, −t) gives the chart (x1/2, x2)."""
        gamma = PlaneCurve.line((0.0, 0.0), (2.0, -1.0), 0.2)
        chart = normalize_chart_along_curve(saddle_chart, gamma)
        np.testing.assert_allclose(chart.forward((0.4, 0.2)), [0.2, 0.2], atol=1e-10)
        np.testing.assert_allclose(chart.forward(gamma.point(0.1)), [0.1, -0.1], atol=1e-10)

    def test_ascending_curve(self, saddle_chart):
        """Test that γ(t) = (t, t) is rejected."""
        gamma = PlaneCurve.line((0.0, 0.0), (1.0, 1.0), 0.3)
        with pytest.raises(NoncharacteristicError):
            normalize_chart_along_curve(saddle_chart, gamma)

    def test_characteristic_curve(self, saddle_chart):
        """Test that a coordinate line is characteristic."""
        gamma = PlaneCurve.line((0.0, 0.0), (1.0, 0.0), 0.3)
        assert curve_image(saddle_chart, gamma).signs == (1, 0)
        with pytest.raises(NoncharacteristicError, match="characteristic"):
            normalize_chart_along_curve(saddle_chart, gamma)

    def test_transversal_swaps(self, saddle_chart):
        """Test that a transversal curve pointing to z1 < 0 swaps the coordinates."""
        gamma = PlaneCurve.line((0.0, 0.0), (1.0, -1.0), 0.3)
        beta = PlaneCurve.line((0.0, 0.0), (-1.0, -1.0), 0.3)
        chart = normalize_chart_along_curve(saddle_chart, gamma, beta)
        assert chart.src == (1, 0)
        tangent = chart.jacobian_inverse(chart.forward(beta.start)) @ beta.derivative(0.0)
        assert np.all(tangent > 0)


class TestMonotoneMap:
    """Tests for monotone reparametrizations."""

    def test_not_monotone(self):
        """Test that a non-monotone table is rejected."""
        with pytest.raises(NoncharacteristicError, match="monotone"):
            MonotoneMap([0.0, 1.0, 2.0], [0.0, 1.0, 0.5], [1.0, 1.0, -1.0])

    def test_inverse(self):
        """Test that inverted maps compose to the identity, also outside the table."""
        u = np.linspace(0.0, 1.0, 11)
        phi = MonotoneMap(u, u**3 + u, 3 * u**2 + 1)
        s = np.array([-0.5, 0.25, 0.8, 1.5])
        np.testing.assert_allclose(phi.inverted()(phi(s)), s, atol=1e-4)


class TestNormalForm:
    """Tests for the normal-form coefficients."""

    def test_saddle_origin(self, saddle, saddle_chart):
        """Test the leading coefficient 2 and zero lower-order terms at the origin."""
        coeffs = normal_form(saddle, saddle_chart).at(0.0, 0.0)
        assert float(coeffs.leading) == pytest.approx(2.0)
        assert float(coeffs.f) == 0.0
        assert float(coeffs.f0) == 0.0
        assert float(coeffs.X1) == pytest.approx(0.0, abs=1e-14)
        assert float(coeffs.X2) == pytest.approx(0.0, abs=1e-14)

    def test_leading_formula(self, saddle, saddle_chart):
        """Test κ̂ = 2√(−κ/det G) where Π(∂1, ∂2) < 0."""
        z = np.array([[0.3, -0.2], [-0.1, 0.4]])
        form = normal_form(saddle, saddle_chart)
        leading = form.leading(z)
        forms = saddle.forms(z[:, 0], z[:, 1])
        expected = 2.0 * np.sqrt(-forms.kappa / forms.det_G)
        np.testing.assert_allclose(leading, expected)

    def test_sources_scale(self, saddle, saddle_chart):
        """Test f̂ = f/κ̂ and f̂0 = f0/κ̂."""
        form = normal_form(
            saddle, saddle_chart, f0=lambda a, b: 3.0 + 0 * a, f=lambda a, b: a + b
        )
        coeffs = form.at(np.array([0.2]), np.array([0.1]))
        np.testing.assert_allclose(coeffs.f, 0.3 / coeffs.leading)
        np.testing.assert_allclose(coeffs.f0, 3.0 / coeffs.leading)

    def test_christoffel_only(self, saddle, saddle_chart):
        """Test that with no sources X̂ is the chart Christoffel term."""
        coeffs = normal_form(saddle, saddle_chart).at(np.array([0.3]), np.array([0.2]))
        np.testing.assert_allclose(coeffs.f, 0.0)
        np.testing.assert_allclose(np.stack([coeffs.X1, coeffs.X2], -1), coeffs.christoffel)
