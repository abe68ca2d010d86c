#!/usr/bin/env python3
"""Tests for the linear strain equation and displacement reconstruction."""

import numpy as np
import pytest
from hypershell.exceptions import (
    CompatibilityError,
    ConfigError,
    NoncharacteristicError,
)
from hypershell.geometry import SurfacePatch
from hypershell.isometry import rigid_field
from hypershell.strain import (
    DISPLACEMENT_HEADER,
    BoundaryData,
    NoncharRegion,
    SolverOptions,
    SymbolicDisplacement,
    assemble_scalar_problem,
    boundary_operator_T,
    check_noncharacteristic,
    fit_rigid_axis,
    gradient_identity_defect,
    manufactured_rhs,
    normal_derivative_defect,
    reconstruct_displacement,
    residual_sym_grad,
    rigid_motion_data,
    solve_displacement,
    solve_scalar,
    strain_coefficients,
    zero_strain,
)
from pytools.convergence import EOCRecorder

V_EXACT = "sin(x1 + 0.3)*exp(0.5*x2)"
Y_EXACT = ("0.1*sin(x1)*x2", "0.2*x1*x2^2", "0.1*cos(x1 + x2)")
AXIS = (0.3, -0.2, 1.0)


@pytest.fixture
def paraboloid():
    return SurfacePatch.hyperbolic_paraboloid()


@pytest.fixture
def box():
    return NoncharRegion.box((-0.4, -0.4), 0.8, 0.8)


@pytest.fixture
def exact(paraboloid):
    return SymbolicDisplacement(paraboloid, list(Y_EXACT))


class TestNoncharRegion:
    """Tests for region embeddings."""

    def test_box(self, box):
        """Test the corners and Jacobian of an axis-parallel box."""
        np.testing.assert_allclose(box.point(0.0, 0.0), [-0.4, -0.4])
        np.testing.assert_allclose(box.point(0.8, 0.8), [0.4, 0.4])
        np.testing.assert_array_equal(box.jac(0.3, 0.1), np.eye(2))

    def test_diamond(self):
        """Test that the diamond edges run along (1, −1) and (1, 1)."""
        region = NoncharRegion.diamond((-0.5, 0.0), 0.7, 0.7)
        r = 0.7 / np.sqrt(2)
        np.testing.assert_allclose(region.point(0.7, 0.0), [-0.5 + r, -r])
        np.testing.assert_allclose(region.point(0.0, 0.7), [-0.5 + r, r])

    def test_from_expressions(self):
        """Test the Jacobian of an expression region."""
        region = NoncharRegion.from_expressions("0.5 + t", "(1 + s)/(0.5 + t)", 1.5, 1.0)
        J = region.jac(0.5, 0.0)
        np.testing.assert_allclose(J, [[1.0, 0.0], [-1.0, 1.0]])
        assert region.to_dict()["kind"] == "expression"

    def test_positive_lengths(self):
        """Test that a region needs positive side lengths."""
        with pytest.raises(ConfigError):
            NoncharRegion.box((0.0, 0.0), 0.0, 1.0)

    def test_inverse(self):
        """Test Newton inversion of the region map."""
        region = NoncharRegion.from_expressions("0.5 + t", "(1 + s)/(0.5 + t)", 1.5, 1.0)
        ts = np.array([[0.2, 0.3], [1.4, 0.9], [0.0, 0.0]])
        x = region.point(ts[:, 0], ts[:, 1])
        np.testing.assert_allclose(region.inverse(x), ts, atol=1e-10)

    def test_side_params(self, box):
        """Test edge parametrizations."""
        t, s = box.side_params("top", np.array([0.25]))
        assert float(t[0]) == 0.25
        assert float(s[0]) == pytest.approx(0.8)
        with pytest.raises(ConfigError):
            box.side_params("front", 0.0)


class TestCheckNoncharacteristic:
    """Tests for the noncharacteristic region gate."""

    def test_separable_box(self):
        """Test that a box passes on a separable saddle."""
        report = check_noncharacteristic(
            SurfacePatch.separable(), NoncharRegion.box((-0.5, -0.5), 1.0, 1.0)
        )
        assert report.passes
        report.require()

    def test_monkey_box(self):
        """Test the curvilinear box on the monkey saddle."""
        region = NoncharRegion.from_expressions("0.5 + t", "(1 + s)/(0.5 + t)", 1.5, 1.0)
        assert check_noncharacteristic(SurfacePatch.monkey_saddle(), region).passes

    def test_monkey_annulus(self):
        """Test that an annular sector of the monkey saddle fails."""
        region = NoncharRegion.from_expressions(
            "(1.5 + 0.5*s)*cos(0.3 + 0.7*t)", "(1.5 + 0.5*s)*sin(0.3 + 0.7*t)", 1.0, 1.0
        )
        report = check_noncharacteristic(SurfacePatch.monkey_saddle(), region)
        assert not report.passes
        assert "t_curves" in [c.name for c in report.failed()]
        with pytest.raises(NoncharacteristicError):
            report.require()

    def test_box_on_saddle_is_characteristic(self):
        """Test that coordinate lines of h = x1·x2 are characteristic."""
        report = check_noncharacteristic(
            SurfacePatch.saddle(), NoncharRegion.box((-0.4, -0.4), 0.8, 0.8)
        )
        assert not report.passes
        assert report.to_dict()["passes"] is False

    def test_outside_domain(self, paraboloid):
        """Test the domain check."""
        report = check_noncharacteristic(paraboloid, NoncharRegion.box((0.5, 0.0), 1.0, 0.2))
        assert [c.name for c in report.failed()][0] == "inside_domain"


class TestStrainCoefficients:
    """Tests for P(U) and the scalar problem."""

    def test_zero_strain(self, paraboloid, box):
        """Test that U = 0 gives P(U) = 0 and K = 0."""
        P, K = strain_coefficients(paraboloid, zero_strain(box, 9))
        np.testing.assert_array_equal(P, 0.0)
        np.testing.assert_array_equal(K, 0.0)

    def test_needs_form(self, paraboloid, box):
        """Test that the strain must be a rank-2 form."""
        grid = box.sample(lambda x1, x2: x1 + x2, 9)
        with pytest.raises(ConfigError, match="rank-2 form"):
            strain_coefficients(paraboloid, grid)

    def test_rigid_strain_vanishes(self, paraboloid, box):
        """Test that a rigid motion has zero symbolic strain."""
        U = rigid_field(paraboloid, AXIS).strain_grid(box, 9)
        np.testing.assert_allclose(U.values, 0.0, atol=1e-14)

    def test_assemble(self, paraboloid, box):
        """Test the coefficients of the assembled problem."""
        problem = assemble_scalar_problem(paraboloid, box, zero_strain(box, 9))
        x1, x2 = np.array([0.1]), np.array([-0.2])
        forms = paraboloid.forms(x1, x2)
        np.testing.assert_allclose(problem.f0(x1, x2), -forms.kappa * forms.mean_trace)
        np.testing.assert_allclose(problem.f(x1, x2), 0.0)
        assert problem.X(x1, x2).shape == (1, 2)

    def test_factor(self, paraboloid, box):
        """Test that the factor knob accepts 1 and 2 only."""
        problem = assemble_scalar_problem(paraboloid, box, zero_strain(box, 9), factor=2)
        x = (np.array([0.2]), np.array([0.1]))
        forms = paraboloid.forms(*x)
        np.testing.assert_allclose(problem.f0(*x), -2.0 * forms.kappa * forms.mean_trace)
        with pytest.raises(ConfigError):
            assemble_scalar_problem(paraboloid, box, zero_strain(box, 9), factor=3)


class TestBoundaryOperator:
    """Tests for the boundary operators T1 and T2."""

    def test_sum_and_null(self, paraboloid, box):
        """Test that T1X + T2X = X and both parts are null directions."""
        X = np.array([1.0, 0.3])
        param = np.linspace(0.0, 0.8, 5)
        T1 = boundary_operator_T(paraboloid, box, "bottom", 1, X, param)
        T2 = boundary_operator_T(paraboloid, box, "bottom", 2, X, param)
        np.testing.assert_allclose(T1 + T2, np.broadcast_to(X, T1.shape), atol=1e-14)
        x = box.point(*box.side_params("bottom", param))
        forms = paraboloid.forms(x[..., 0], x[..., 1])
        np.testing.assert_allclose(forms.second(T1, T1), 0.0, atol=1e-12)
        np.testing.assert_allclose(forms.second(T2, T2), 0.0, atol=1e-12)

    def test_saddle_origin(self):
        """Test the split of (1, 1/2) into the coordinate axes of h = x1·x2."""
        region = NoncharRegion.diamond((0.0, 0.0), 0.5, 0.5)
        X = np.array([1.0, 0.5])
        T1 = boundary_operator_T(SurfacePatch.saddle(), region, "bottom", 1, X, 0.0)
        T2 = boundary_operator_T(SurfacePatch.saddle(), region, "bottom", 2, X, 0.0)
        assert {tuple(np.round(T1, 12)), tuple(np.round(T2, 12))} == {(1.0, 0.0), (0.0, 0.5)}

    def test_characteristic_direction(self, paraboloid, box):
        """Test that a null X is rejected."""
        with pytest.raises(NoncharacteristicError):
            boundary_operator_T(paraboloid, box, "left", 1, (1.0, 1.0), np.array([0.4]))


class TestBoundaryData:
    """Tests for characteristic boundary data."""

    def test_bottom_gradient(self, paraboloid, box):
        """Test that q0' and q1 recover the gradient on the bottom edge."""
        _, value, grad = manufactured_rhs(paraboloid, V_EXACT)
        data = BoundaryData.from_solution(paraboloid, box, value, grad)
        t = np.linspace(0.0, 0.8, 6)
        x = box.point(t, np.zeros_like(t))
        np.testing.assert_allclose(
            data.bottom_gradient(paraboloid, box, t), grad(x[..., 0], x[..., 1]), atol=1e-12
        )

    def test_compatible(self, paraboloid, box):
        """Test that data of a smooth function are corner compatible."""
        _, value, grad = manufactured_rhs(paraboloid, V_EXACT)
        report = BoundaryData.from_solution(paraboloid, box, value, grad).require_compatible(
            paraboloid, box
        )
        assert report.holds
        assert [j.name for j in report.junctions] == ["alpha(0,0)", "alpha(a,0)"]

    def test_incompatible(self, paraboloid, box):
        """Test that a perturbed lateral value breaks compatibility."""
        data = BoundaryData.from_expressions("0", "0", "1", "0")
        assert not data.check_compatibility(paraboloid, box).holds
        with pytest.raises(CompatibilityError, match="corner compatibility"):
            data.require_compatible(paraboloid, box)

    def test_zero(self, paraboloid, box):
        """Test that zero data are compatible."""
        assert BoundaryData.zero().check_compatibility(paraboloid, box).holds

    def test_rigid_motion_data(self, paraboloid, box):
        """Test that q0 of a rigid motion is ⟨a, ν⟩ along the bottom edge."""
        data = rigid_motion_data(paraboloid, box, AXIS)
        t = np.linspace(0.0, 0.8, 5)
        x = box.point(t, np.zeros_like(t))
        expected = rigid_field(paraboloid, AXIS).v(x[..., 0], x[..., 1])
        np.testing.assert_allclose(data.q0(t), expected, atol=1e-12)
        assert data.check_compatibility(paraboloid, box).holds

    def test_fit_rigid_axis(self, paraboloid, box):
        """Test that the fitted axis of rigid-motion data is the motion's axis."""
        data = rigid_motion_data(paraboloid, box, AXIS)
        np.testing.assert_allclose(fit_rigid_axis(paraboloid, box, data), AXIS, atol=1e-12)
        np.testing.assert_array_equal(fit_rigid_axis(paraboloid, box, BoundaryData.zero()), 0.0)

    def test_minus(self, paraboloid, box):
        """Test that data minus themselves vanish."""
        data = rigid_motion_data(paraboloid, box, AXIS)
        zero = data.minus(data)
        t = np.linspace(0.0, 0.8, 5)
        for fn in (zero.q0, zero.q1, zero.p1, zero.p2):
            np.testing.assert_array_equal(fn(t), 0.0)
        assert zero.check_compatibility(paraboloid, box).holds


class TestSolveScalar:
    """Tests for the strip solver of the scalar equation."""

    def test_zero(self):
        """Test that zero data and zero strain give v ≡ 0."""
        surface = SurfacePatch.saddle()
        region = NoncharRegion.diamond((-0.35, 0.0), 0.5, 0.5)
        field, solution = solve_displacement(
            surface, region, zero_strain(region, 9), BoundaryData.zero(), SolverOptions(grid=9)
        )
        np.testing.assert_array_equal(solution.v, 0.0)
        np.testing.assert_array_equal(field.y, 0.0)

    @pytest.mark.slow
    def test_manufactured_order(self, paraboloid, box):
        """Test second-order recovery of a manufactured v."""
        rhs, value, grad = manufactured_rhs(paraboloid, V_EXACT)
        data = BoundaryData.from_solution(paraboloid, box, value, grad)
        eoc = EOCRecorder()
        for n in (9, 17, 33):
            sol = solve_scalar(paraboloid, box, rhs, data, SolverOptions(grid=n))
            p = sol.problem.grid.surface_points()
            error = np.max(np.abs(sol.v - value(p[..., 0], p[..., 1])))
            eoc.add_data_point(1.0 / (n - 1), float(error))
        assert 1.5 <= eoc.order_estimate() <= 2.5

    def test_strips_agree(self, paraboloid, box):
        """Test that one strip and three strips agree to solver tolerance."""
        rhs, value, grad = manufactured_rhs(paraboloid, V_EXACT)
        data = BoundaryData.from_solution(paraboloid, box, value, grad)
        one = solve_scalar(paraboloid, box, rhs, data, SolverOptions(grid=17))
        three = solve_scalar(paraboloid, box, rhs, data, SolverOptions(grid=17, strips=3))
        assert len(three.strips) == 3
        assert three.diagnostics["strips"] == 3
        assert float(np.max(np.abs(one.v - three.v))) < 1e-8
        assert float(np.max(np.abs(one.dv - three.dv))) < 1e-8

    def test_too_many_strips(self, paraboloid, box):
        """Test that strips must not outnumber the grid intervals in s."""
        rhs, value, grad = manufactured_rhs(paraboloid, V_EXACT)
        data = BoundaryData.from_solution(paraboloid, box, value, grad)
        with pytest.raises(ConfigError, match="grid intervals"):
            solve_scalar(paraboloid, box, rhs, data, SolverOptions(grid=5, strips=5))

    def test_linearity(self, paraboloid, box):
        """Test that the solution of D1 + 2·D2 is v1 + 2·v2."""
        other = "x1*x2 + 0.5*x1^2 - 0.3*x2"
        options = SolverOptions(grid=17)

        def solve(v):
            rhs, value, grad = manufactured_rhs(paraboloid, v)
            data = BoundaryData.from_solution(paraboloid, box, value, grad)
            return solve_scalar(paraboloid, box, rhs, data, options)

        one, two = solve(V_EXACT), solve(other)
        both = solve(f"({V_EXACT}) + 2*({other})")
        assert float(np.max(np.abs(both.v - (one.v + 2.0 * two.v)))) < 1e-8
        assert float(np.max(np.abs(both.dv - (one.dv + 2.0 * two.dv)))) < 1e-8

    def test_zero_data(self, paraboloid, box):
        """Test that zero right-hand side and zero data give v ≡ 0 without a rigid part."""
        sol = solve_scalar(
            paraboloid, box, lambda a, b: 0 * a, BoundaryData.zero(), SolverOptions(grid=9)
        )
        np.testing.assert_array_equal(sol.v, 0.0)
        np.testing.assert_array_equal(sol.dv, 0.0)
        assert sol.rigid_axis is None
        assert sol.diagnostics["rigid_axis"] is None

    def test_rigid_axis(self, paraboloid, box):
        """Test that the rigid part of the data is split off and reported."""
        data = rigid_motion_data(paraboloid, box, AXIS)
        sol = solve_scalar(paraboloid, box, lambda a, b: 0 * a, data, SolverOptions(grid=9))
        np.testing.assert_allclose(sol.rigid_axis, AXIS, atol=1e-12)
        p = sol.problem.grid.surface_points()
        expected = rigid_field(paraboloid, AXIS).v(p[..., 0], p[..., 1])
        np.testing.assert_allclose(sol.v, expected, atol=1e-12)

    def test_diagnostics(self, paraboloid, box):
        """Test the diagnostics of a scalar solve."""
        rhs, value, grad = manufactured_rhs(paraboloid, V_EXACT)
        data = BoundaryData.from_solution(paraboloid, box, value, grad)
        sol = solve_scalar(paraboloid, box, rhs, data, SolverOptions(grid=9))
        assert sol.diagnostics["charts"] == ["linear"]
        assert sol.diagnostics["iterations"] >= 1
        assert sol.diagnostics["compatibility"]["holds"]
        assert sol.dv.shape == (9, 9, 2)

    def test_characteristic_region(self):
        """Test that a characteristic region is rejected before solving."""
        surface = SurfacePatch.saddle()
        region = NoncharRegion.box((-0.4, -0.4), 0.8, 0.8)
        with pytest.raises(NoncharacteristicError):
            solve_scalar(
                surface, region, lambda a, b: 0 * a, BoundaryData.zero(), SolverOptions(grid=9)
            )

    def test_options(self):
        """Test validation of solver options."""
        with pytest.raises(ConfigError):
            SolverOptions(grid=3)
        with pytest.raises(ConfigError):
            SolverOptions(chart_method="magic")


class TestReconstruction:
    """Tests for the recovery of y from U and v."""

    def test_exact_inputs(self, paraboloid, box, exact):
        """Test that exact v and Dv reproduce y up to quadrature error."""
        U = exact.strain_grid(box, 33)
        p = U.surface_points()
        field = reconstruct_displacement(
            paraboloid, box, U, (exact.v(p[..., 0], p[..., 1]), exact.dv(p[..., 0], p[..., 1]))
        )
        np.testing.assert_array_equal(field.y[0, 0], 0.0)
        np.testing.assert_allclose(field.y, exact.to_field(U).y, atol=1e-3)
        assert field.decomposition_error < 1e-12
        assert field.curl_defect < 1e-2

    def test_exact_field_identities(self, paraboloid, box, exact):
        """Test the residual and the gradient identities on exact samples."""
        U = exact.strain_grid(box, 33)
        field = exact.to_field(U)
        sup, l2 = residual_sym_grad(paraboloid, field, U)
        assert sup < 5e-3
        assert l2 <= sup
        assert gradient_identity_defect(paraboloid, field, U) < 5e-3
        assert normal_derivative_defect(paraboloid, field) < 5e-3

    @pytest.mark.slow
    def test_round_trip(self, paraboloid, box, exact):
        """Test the manufactured displacement round trip."""
        eoc = EOCRecorder()
        for n in (9, 17, 33):
            U = exact.strain_grid(box, n)
            y, _ = solve_displacement(
                paraboloid, box, U, exact.boundary_data(box), SolverOptions(grid=n)
            )
            eoc.add_data_point(1.0 / (n - 1), float(np.max(np.abs(y.y - exact.to_field(U).y))))
            assert y.diagnostics["sup_residual"] < 5e-2
        assert 1.5 <= eoc.order_estimate() <= 2.5

    def test_rigid_motion(self, paraboloid, box):
        """Test that rigid-motion data with U = 0 reproduce the rigid motion to round-off."""
        rigid = rigid_field(paraboloid, AXIS)
        U = zero_strain(box, 17)
        y, _ = solve_displacement(
            paraboloid, box, U, rigid_motion_data(paraboloid, box, AXIS), SolverOptions(grid=17)
        )
        np.testing.assert_allclose(y.y, rigid.to_field(U).y, atol=1e-8)
        assert y.diagnostics["sup_residual"] <= 1e-8

    def test_rows(self, paraboloid, box, exact):
        """Test the row export of a displacement."""
        field = exact.to_field(exact.strain_grid(box, 5))
        rows = field.to_rows()
        assert len(rows) == 25
        assert len(rows[0]) == len(DISPLACEMENT_HEADER)
        assert field.to_dict()["shape"] == [5, 5]
        np.testing.assert_allclose(field.scaled(2.0).y, 2.0 * field.y)


class TestSymbolicDisplacement:
    """Tests for closed-form displacements."""

    def test_needs_three_components(self, paraboloid):
        """Test the component count."""
        with pytest.raises(ConfigError, match="3 components"):
            SymbolicDisplacement(paraboloid, ["x1", "x2"])

    def test_rotation_part(self, paraboloid):
        """Test that v of a rigid motion is ⟨a, ν⟩."""
        rigid = rigid_field(paraboloid, AXIS)
        x1, x2 = np.array([0.1, -0.3]), np.array([0.2, 0.05])
        expected = paraboloid.forms(x1, x2).normal @ np.array(AXIS)
        np.testing.assert_allclose(rigid.v(x1, x2), expected, atol=1e-14)

    def test_strain(self, paraboloid):
        """Test sym∇y of y = (1, 0, x1) on h = (x1² − x2²)/2."""
        y = SymbolicDisplacement(paraboloid, ["1", "0", "x1"])
        U = y.strain(np.array([0.2]), np.array([0.1]))
        np.testing.assert_allclose(U[0], [[0.2, -0.05], [-0.05, 0.0]], atol=1e-14)
