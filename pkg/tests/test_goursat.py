#!/usr/bin/env python3
"""Tests for the characteristic (Goursat) solver."""

import math

import numpy as np
import pytest
from hypershell.curves import CurveData, PlaneCurve
from hypershell.exceptions import (
    CompatibilityError,
    ConfigError,
    ContractionError,
    DomainError,
    GeometryError,
    NoncharacteristicError,
)
from hypershell.goursat import (
    CSV_HEADER,
    GoursatProblem,
    RegionDescriptor,
    check_compatibility_order1,
    constant,
    epsilon_t,
    picard_solve_small,
    solve_goursat,
    solve_on_composite,
    solve_on_E,
    solve_on_rect,
    trace_bound_ratio,
    trace_diagnostics,
    zero_fn,
)
from pytools.convergence import EOCRecorder


def _quadratic(x1, x2):
    return x1**2 + x2**2


def _quadratic_points(p):
    return p[..., 0] ** 2 + p[..., 1] ** 2


def _quadratic_grad(p):
    return 2.0 * p


@pytest.fixture
def gamma():
    """γ(t) = (t, −t) on [0, 1]."""
    return PlaneCurve.line((0.0, 0.0), (1.0, -1.0), 1.0, name="gamma")


@pytest.fixture
def beta():
    """β(t) = (t, t) on [0, 1]."""
    return PlaneCurve.line((0.0, 0.0), (1.0, 1.0), 1.0, name="beta")


class TestRegions:
    """Tests for region descriptors."""

    def test_e_ranges(self, gamma):
        """Test the bounding box and boundaries of E(γ)."""
        region = RegionDescriptor.e(gamma)
        assert region.x1_range == (0.0, 1.0)
        assert region.x2_range == (-1.0, 0.0)
        assert float(region.lower_at(0.5)) == pytest.approx(-0.5)
        assert float(region.upper_at(0.5)) == 0.0
        assert region.contains(0.5, -0.25)
        assert not region.contains(0.5, -0.75)

    def test_e_needs_descending_gamma(self, beta):
        """Test that E(γ) needs γ1' > 0 and γ2' < 0."""
        with pytest.raises(NoncharacteristicError, match="sign pattern"):
            RegionDescriptor.e(beta)

    def test_rect_needs_positive_sides(self):
        """Test that a rectangle side must be positive."""
        with pytest.raises(ConfigError):
            RegionDescriptor.rect((0.0, 0.0), 0.0, 1.0)

    def test_xi1_junction(self, gamma):
        """Test that Ξ1 needs γ(0) = β(0)."""
        beta = PlaneCurve.line((0.1, 0.0), (1.0, 1.0), 1.0)
        with pytest.raises(GeometryError, match="gamma\\(0\\) = beta\\(0\\)"):
            RegionDescriptor.xi1(beta, gamma)

    def test_phi_top(self, gamma):
        """Test that Φ is capped at the level β2(t0)."""
        beta = PlaneCurve.line((0.0, 0.0), (1.0, 1.0), 0.5)
        short = PlaneCurve.line((0.0, 0.0), (1.0, -1.0), 0.5)
        beta_hat = PlaneCurve.line((0.5, -0.5), (1.0, 1.0), 1.0)
        region = RegionDescriptor.phi(beta, short, beta_hat)
        assert region.x1_range == (0.0, pytest.approx(1.5))
        assert region.x2_range[1] == pytest.approx(0.5)

    def test_missing_data(self):
        """Test that a region without its boundary data is rejected."""
        region = RegionDescriptor.rect((0.0, 0.0), 1.0, 1.0)
        with pytest.raises(ConfigError, match="needs data 'p1'"):
            GoursatProblem(region, p2=zero_fn)


class TestEpsilonT:
    """Tests for the adaptive tile extent."""

    def test_values(self):
        """Test ε_T against C·max(λ, λ²) = 1/2."""
        assert epsilon_t(0.0) == math.inf
        assert epsilon_t(0.5) == pytest.approx(1.0)
        assert epsilon_t(0.125) == pytest.approx(2.0)
        assert epsilon_t(2.0) == pytest.approx(0.25)


class TestRectangle:
    """Tests for rectangles and P regions."""

    def test_unit_source(self):
        """Test that w_x1x2 = 1 with zero edge data gives w = x1·x2."""
        problem = GoursatProblem(
            RegionDescriptor.rect((0.0, 0.0), 1.0, 1.0), f=constant(1.0), p1=zero_fn, p2=zero_fn
        )
        sol = solve_on_rect(problem, spacing=0.1)
        assert sol.sup_error(lambda a, b: a * b) < 1e-12
        assert sol.value_at((1.0, 1.0)) == pytest.approx(1.0)

    def test_product_data(self):
        """Test that edge data of w* = x1·x2 on a shifted box are reproduced."""
        corner = (0.5, -0.5)
        problem = GoursatProblem(
            RegionDescriptor.rect(corner, 0.5, 1.0),
            f=constant(1.0),
            p1=lambda s: s * corner[1],
            p2=lambda s: corner[0] * s,
            dp1=lambda s: np.full_like(s, corner[1]),
            dp2=lambda s: np.full_like(s, corner[0]),
        )
        sol = solve_on_rect(problem, spacing=0.05)
        assert sol.sup_error(lambda a, b: a * b) < 1e-12

    def test_corner_mismatch(self):
        """Test that disagreeing corner data are a compatibility error."""
        problem = GoursatProblem(
            RegionDescriptor.rect((0.0, 0.0), 1.0, 1.0),
            p1=lambda s: np.ones_like(s),
            p2=zero_fn,
        )
        report = check_compatibility_order1(problem)
        assert not report.holds
        assert report.max_residual == pytest.approx(1.0)
        with pytest.raises(CompatibilityError, match="corner"):
            solve_on_rect(problem)

    def test_superposition(self):
        """Test that the solution for f_A + 2·f_B with data A + 2·B is w_A + 2·w_B."""
        region = RegionDescriptor.rect((0.0, 0.0), 1.0, 0.8)
        lower = {"f0": constant(0.2), "X": (constant(0.1), constant(-0.1))}

        def solve(f, p1, p2):
            return solve_on_rect(GoursatProblem(region, f=f, p1=p1, p2=p2, **lower), spacing=0.05)

        a = solve(lambda x1, x2: np.sin(x1 + x2), lambda s: s**2, lambda s: s**3)
        b = solve(lambda x1, x2: np.cos(x1) * x2, np.sin, lambda s: s)
        both = solve(
            lambda x1, x2: np.sin(x1 + x2) + 2.0 * np.cos(x1) * x2,
            lambda s: s**2 + 2.0 * np.sin(s),
            lambda s: s**3 + 2.0 * s,
        )
        for name in ("w", "p", "q"):
            combined = a.values(name) + 2.0 * b.values(name)
            assert np.nanmax(np.abs(both.values(name) - combined)) < 1e-9

    def test_p1(self):
        """Test P1(β) with w* = x2², p = 2t on β(t) = (t, t)."""
        beta = PlaneCurve.line((0.0, 0.0), (1.0, 1.0), 1.0)
        problem = GoursatProblem(RegionDescriptor.p1(beta), p=lambda t: 2.0 * t, p1=zero_fn)
        sol = solve_on_rect(problem, spacing=0.05)
        assert sol.sup_error(lambda a, b: b**2) < 1e-10

    def test_wrong_kind(self, gamma):
        """Test that each entry point checks the region kind."""
        problem = GoursatProblem(RegionDescriptor.e(gamma), gamma_data=CurveData.zero())
        with pytest.raises(ConfigError, match="expected region kind"):
            solve_on_rect(problem)

    def test_contraction_gate(self):
        """Test that a single block fails the gate for large coefficients."""
        problem = GoursatProblem(
            RegionDescriptor.rect((0.0, 0.0), 1.0, 1.0), f0=constant(10.0), p1=zero_fn, p2=zero_fn
        )
        with pytest.raises(ContractionError, match="contraction gate"):
            picard_solve_small(problem, spacing=0.1)


class TestE:
    """Tests for E(γ)."""

    def test_zero_data(self, gamma):
        """Test that zero data give w ≡ 0."""
        problem = GoursatProblem(RegionDescriptor.e(gamma), gamma_data=CurveData.zero())
        sol = solve_on_E(problem, spacing=0.1)
        assert np.nanmax(np.abs(sol.w)) == 0.0

    def test_zero_data_with_lower_order_terms(self, gamma):
        """Test uniqueness with f0 = 1 and no source."""
        problem = GoursatProblem(
            RegionDescriptor.e(gamma), f0=constant(1.0), gamma_data=CurveData.zero()
        )
        sol = solve_on_E(problem, spacing=0.1)
        assert np.nanmax(np.abs(sol.w)) == 0.0

    def test_quadratic(self, gamma):
        """Test that data of x1² + x2² on γ(t) = (t, −t) are reproduced."""
        data = CurveData.from_gradient(gamma, _quadratic_points, _quadratic_grad)
        np.testing.assert_allclose(data.value(np.array([0.5])), [0.5])
        problem = GoursatProblem(RegionDescriptor.e(gamma), gamma_data=data)
        sol = solve_on_E(problem, spacing=0.05)
        assert sol.sup_error(_quadratic) < 1e-10
        assert sol.sup_error(lambda a, b: 2 * a, "p") < 1e-10

    def test_corner_interpolation(self, gamma):
        """Test that the cell at the corner of E(γ) interpolates w_x2 of x1² + x2² exactly."""
        data = CurveData.from_gradient(gamma, _quadratic_points, _quadratic_grad)
        h = 0.05
        sol = solve_on_E(GoursatProblem(RegionDescriptor.e(gamma), gamma_data=data), spacing=h)
        value = sol.interpolate(np.array([[h / 2, -h / 2]]), "q")
        assert float(value[0]) == pytest.approx(-h, abs=1e-9)
        assert sol.value_at((h / 2, -h / 4)) == pytest.approx(_quadratic(h / 2, -h / 4), abs=h**2)

    def test_second_order(self, gamma):
        """Test second-order convergence for w* = x1³ + cos(x2)."""

        def exact(a, b):
            return a**3 + np.cos(b)

        def grad(p):
            return np.stack([3 * p[..., 0] ** 2, -np.sin(p[..., 1])], axis=-1)

        data = CurveData.from_gradient(gamma, lambda p: exact(p[..., 0], p[..., 1]), grad)
        problem = GoursatProblem(RegionDescriptor.e(gamma), gamma_data=data)
        eoc = EOCRecorder()
        for h in (0.1, 0.05, 0.025):
            sol = solve_on_E(problem, spacing=h)
            eoc.add_data_point(h, sol.sup_error(exact))
        assert 1.7 <= eoc.order_estimate() <= 2.5

    def test_tiling_consistency(self, gamma):
        """Test that two tile sizes give the same lattice solution."""
        problem = GoursatProblem(
            RegionDescriptor.e(gamma),
            f=constant(1.0),
            f0=constant(1.0),
            X=(constant(1.0), constant(0.0)),
            gamma_data=CurveData.zero(),
        )
        coarse = solve_goursat(problem, 0.05, epsilon_override=0.2, threads=1)
        fine = solve_goursat(problem, 0.05, epsilon_override=0.1, threads=2)
        assert fine.diagnostics.n_tiles > coarse.diagnostics.n_tiles
        diff = np.abs(coarse.w - fine.w)[coarse.mask]
        assert float(np.max(diff)) < 1e-9

    def test_diagnostics(self, gamma):
        """Test the solve diagnostics and exports."""
        problem = GoursatProblem(
            RegionDescriptor.e(gamma), f0=constant(0.5), gamma_data=CurveData.zero()
        )
        sol = solve_on_E(problem, spacing=0.1)
        d = sol.diagnostics
        assert d.coefficient_bound == pytest.approx(0.5)
        assert d.epsilon_t == pytest.approx(1.0)
        assert d.iterations >= 2
        assert len(sol.to_rows()) == int(np.count_nonzero(sol.mask))
        assert len(sol.to_rows()[0]) == len(CSV_HEADER)
        assert sol.to_dict()["region_kind"] == "E"

    def test_unknown_field(self, gamma):
        """Test that solution fields are looked up by name."""
        sol = solve_on_E(
            GoursatProblem(RegionDescriptor.e(gamma), gamma_data=CurveData.zero()), spacing=0.25
        )
        with pytest.raises(ConfigError, match="unknown solution field"):
            sol.values("r")


class TestComposite:
    """Tests for Ξ1, Ξ2 and Φ."""

    def test_xi1_quadratic(self, gamma, beta):
        """Test that Ξ1 with data of x1² + x2² recovers it."""
        data = CurveData.from_gradient(gamma, _quadratic_points, _quadratic_grad)
        problem = GoursatProblem(
            RegionDescriptor.xi1(beta, gamma, 0.5), gamma_data=data, p=lambda t: 2.0 * t
        )
        assert check_compatibility_order1(problem).max_residual < 1e-9
        sol = solve_on_composite(problem, spacing=0.05)
        assert sol.sup_error(_quadratic) < 1e-9

    def test_xi1_perturbed(self, gamma, beta):
        """Test that q1 + 1 at the junction breaks compatibility by |γ1'(0)|."""
        data = CurveData.from_gradient(gamma, _quadratic_points, _quadratic_grad)
        shifted = CurveData(data.value, lambda t: data.transverse(t) + 1.0, data.tangential)
        problem = GoursatProblem(
            RegionDescriptor.xi1(beta, gamma, 0.5), gamma_data=shifted, p=lambda t: 2.0 * t
        )
        report = check_compatibility_order1(problem)
        assert not report.holds
        assert abs(report.junctions[0].residual) == pytest.approx(1.0)
        with pytest.raises(CompatibilityError, match="beta junction"):
            solve_on_composite(problem)

    def test_xi2_zero(self):
        """Test Ξ2 with zero data."""
        gamma = PlaneCurve.line((0.0, 0.0), (1.0, -1.0), 0.5)
        beta = PlaneCurve.line((0.5, -0.5), (1.0, 1.0), 0.5)
        problem = GoursatProblem(
            RegionDescriptor.xi2(beta, gamma), gamma_data=CurveData.zero(), p=zero_fn
        )
        sol = solve_on_composite(problem, spacing=0.05)
        assert np.nanmax(np.abs(sol.w)) == 0.0

    def test_phi(self):
        """Test Φ with zero data and with data of x1² + x2²."""
        beta = PlaneCurve.line((0.0, 0.0), (1.0, 1.0), 0.5)
        gamma = PlaneCurve.line((0.0, 0.0), (1.0, -1.0), 0.5)
        beta_hat = PlaneCurve.line((0.5, -0.5), (1.0, 1.0), 1.0)
        region = RegionDescriptor.phi(beta, gamma, beta_hat)

        zero = GoursatProblem(region, gamma_data=CurveData.zero(), p=zero_fn, p_hat=zero_fn)
        assert np.nanmax(np.abs(solve_on_composite(zero, spacing=0.05).w)) == 0.0

        data = CurveData.from_gradient(gamma, _quadratic_points, _quadratic_grad)
        problem = GoursatProblem(
            region, gamma_data=data, p=lambda t: 2.0 * t, p_hat=lambda t: 2.0 * (0.5 + t)
        )
        report = check_compatibility_order1(problem)
        assert report.holds
        assert [j.name for j in report.junctions] == ["beta", "beta_hat"]
        sol = solve_on_composite(problem, spacing=0.05)
        assert sol.sup_error(_quadratic) < 1e-9
        assert sol.diagnostics.seam_residual < 1e-9


class TestTrace:
    """Tests for the trace functional Γ."""

    def test_zero(self, gamma):
        """Test Γ = 0 for w ≡ 0."""
        sol = solve_on_E(
            GoursatProblem(RegionDescriptor.e(gamma), gamma_data=CurveData.zero()), spacing=0.1
        )
        report = trace_diagnostics(sol, gamma)
        assert report.gamma == 0.0
        assert report.ratio == 0.0

    def test_quadratic(self, gamma):
        """Test Γ for x1² + x2² on the unit E(γ) against its closed form."""
        data = CurveData.from_gradient(gamma, _quadratic_points, _quadratic_grad)
        sol = solve_on_E(GoursatProblem(RegionDescriptor.e(gamma), gamma_data=data), spacing=0.05)
        report = trace_diagnostics(sol, gamma)
        # ∫ 4t⁴ + 8t² + 4t + 4(1 − t) dt
        assert report.gamma == pytest.approx(4 / 5 + 8 / 3 + 4, rel=5e-3)
        assert report.w22_norm_sq > 0

    def test_curve_outside(self, gamma):
        """Test that a curve leaving the region raises DomainError."""
        sol = solve_on_E(
            GoursatProblem(RegionDescriptor.e(gamma), gamma_data=CurveData.zero()), spacing=0.1
        )
        outside = PlaneCurve.line((0.0, 0.5), (1.0, 0.0), 1.0, name="outside")
        with pytest.raises(DomainError, match="leaves the solved region"):
            trace_diagnostics(sol, outside)

    def test_bound_ratio(self, gamma):
        """Test that the trace ratio is positive over a family of curves."""
        data = CurveData.from_gradient(gamma, _quadratic_points, _quadratic_grad)
        sol = solve_on_E(GoursatProblem(RegionDescriptor.e(gamma), gamma_data=data), spacing=0.05)
        curves = [PlaneCurve.line((0.0, 0.0), (1.0, -s), 1.0) for s in (1.0, 0.5)]
        bound = trace_bound_ratio(sol, curves, f=constant(0.0))
        assert 0.0 < bound.lower <= bound.upper
        with pytest.raises(ConfigError):
            trace_bound_ratio(sol, [])
