#!/usr/bin/env python3
"""Tests for elastic laws, the A-field and the bending energy."""

import numpy as np
import pytest
from hypershell.config import SweepSpec
from hypershell.energy import (
    RECOVERY_HEADER,
    ElasticLaw,
    StVenantKirchhoff,
    bending_energy,
    bending_tensor,
    build_A_field,
    q2_reduce,
    recovery_energy_sweep,
    robust_check,
)
from hypershell.exceptions import ConfigError, LawError, NotAnIsometryError
from hypershell.geometry import SurfacePatch
from hypershell.isometry import IsometryFamily, rigid_field, sample_isometry, skew
from hypershell.strain import NoncharRegion, SolverOptions, SymbolicDisplacement, zero_strain

AXIS = (1.0, 2.0, 0.5)


@pytest.fixture
def saddle():
    return SurfacePatch.saddle()


@pytest.fixture
def diamond():
    return NoncharRegion.diamond((-0.5, 0.0), 0.7, 0.7)


@pytest.fixture
def grid(diamond):
    return zero_strain(diamond, 17)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


class TestElasticLaw:
    """Tests for elastic laws and their quadratic forms."""

    def test_q3_matches_finite_differences(self, rng):
        """Test the closed-form Q3 against the differenced Hessian."""
        law = StVenantKirchhoff(mu=1.0, lam=0.5)
        generic = ElasticLaw(law.W, name="finite_difference")
        F = rng.normal(size=(16, 3, 3))
        exact = law.Q3(F)
        np.testing.assert_allclose(generic.Q3(F), exact, rtol=1e-6, atol=1e-6)

    def test_axioms(self):
        """Test normalization and frame indifference of the default law."""
        axioms = StVenantKirchhoff().check_axioms()
        assert axioms["normalization"] < 1e-12
        assert axioms["frame_indifference"] < 1e-10

    def test_not_psd(self):
        """Test that a concave law is rejected."""
        law = ElasticLaw(lambda F: -np.sum((F - np.eye(3)) ** 2, axis=(-2, -1)), name="concave")
        with pytest.raises(LawError, match="positive semidefinite"):
            law.Q3(np.eye(3))

    def test_parameters(self):
        """Test validation of the Lamé parameters."""
        with pytest.raises(ConfigError):
            StVenantKirchhoff(mu=0.0)
        with pytest.raises(ConfigError):
            StVenantKirchhoff(lam=-1.0)

    def test_q2_reduction(self, saddle, rng):
        """Test the closed-form Q2 against the generic minimization."""
        law = StVenantKirchhoff(mu=1.0, lam=0.5)
        generic = ElasticLaw(law.W, name="finite_difference")
        forms = saddle.forms(np.array([0.3, -0.4]), np.array([-0.2, 0.1]))
        T = rng.normal(size=(2, 2, 2))
        T = 0.5 * (T + np.swapaxes(T, -1, -2))
        q, chat = law.q2_forms(forms, T)
        q_fd, chat_fd = generic.q2_forms(forms, T)
        np.testing.assert_allclose(q_fd, q, rtol=1e-6)
        np.testing.assert_allclose(chat_fd, chat, atol=1e-6)

    def test_q2_default(self, saddle):
        """Test Q2(T) = 2|sym T|² for λ = 0 at a point with g = Id."""
        value = q2_reduce(StVenantKirchhoff(), saddle, (0.0, 0.0), [[1.0, 0.0], [0.0, 0.0]])
        assert float(value) == pytest.approx(2.0)

    def test_to_dict(self):
        assert StVenantKirchhoff(lam=0.25).to_dict() == {
            "law": "st_venant_kirchhoff",
            "mu": 1.0,
            "lam": 0.25,
        }


class TestAField:
    """Tests for the skew field of an isometry."""

    def test_rigid(self, saddle, grid):
        """Test that a rigid motion has the constant field skew(a)."""
        A = build_A_field(saddle, rigid_field(saddle, AXIS), grid)
        expected = np.broadcast_to(skew(AXIS), A.values.shape)
        np.testing.assert_allclose(A.values, expected, atol=1e-12)
        assert A.reconstruction_defect < 1e-12

    def test_skew_and_reconstruction(self, saddle, grid):
        """Test A + Aᵀ = 0 and ∂_aV = A∂_a r for a non-rigid isometry."""
        V = sample_isometry(saddle).to_field(grid)
        A = build_A_field(saddle, V)
        np.testing.assert_array_equal(A.values + np.swapaxes(A.values, -1, -2), 0.0)
        assert A.reconstruction_defect < 1e-12
        assert A.strain_defect < 1e-12

    def test_not_an_isometry(self, saddle, grid):
        """Test that a stretching displacement is rejected."""
        V = SymbolicDisplacement(saddle, ["x1", "0", "0"])
        with pytest.raises(NotAnIsometryError):
            build_A_field(saddle, V, grid)

    def test_symbolic_needs_grid(self, saddle):
        with pytest.raises(ConfigError, match="grid"):
            build_A_field(saddle, rigid_field(saddle, AXIS))

    def test_rigid_bending_tensor(self, saddle, grid):
        """Test that the bending tensor of a rigid motion vanishes."""
        A = build_A_field(saddle, rigid_field(saddle, AXIS), grid)
        np.testing.assert_allclose(bending_tensor(saddle, A), 0.0, atol=1e-9)


class TestBendingEnergy:
    """Tests for the bending functional."""

    def test_rigid_is_zero(self, saddle, grid):
        """Test that rigid motions cost no bending energy."""
        assert abs(bending_energy(saddle, rigid_field(saddle, AXIS), grid=grid)) < 1e-10

    def test_homogeneity(self, saddle, grid):
        """Test that I(2V) = 4·I(V)."""
        one = bending_energy(saddle, sample_isometry(saddle, 1.0), grid=grid)
        two = bending_energy(saddle, sample_isometry(saddle, 2.0), grid=grid)
        assert one > 0
        assert two == pytest.approx(4.0 * one, rel=1e-9)

    def test_sampled_matches_symbolic(self, saddle, grid):
        """Test that differencing A on the grid agrees with the pointwise derivative."""
        symbolic = bending_energy(saddle, sample_isometry(saddle), grid=grid)
        sampled = bending_energy(saddle, sample_isometry(saddle).to_field(grid))
        assert sampled == pytest.approx(symbolic, rel=5e-2)

    def test_prebuilt_field(self, saddle, grid):
        """Test that a prebuilt A-field gives the same energy."""
        V = sample_isometry(saddle)
        A = build_A_field(saddle, V, grid)
        assert bending_energy(saddle, A) == pytest.approx(bending_energy(saddle, V, grid=grid))


class TestRobustCheck:
    """Tests for the realizability of (A²)_tan."""

    def test_sample(self, saddle, diamond):
        """Test that (A²)_tan of the sample isometry is solved to small residual."""
        report = robust_check(saddle, diamond, sample_isometry(saddle, 0.5), SolverOptions(grid=17))
        assert report.rhs_scale > 0
        assert report.sup_residual <= 5e-2 * max(1.0, report.rhs_scale)
        assert set(report.to_dict()) == {"sup_residual", "l2_residual", "rhs_scale", "curl_defect"}


class TestRecoverySweep:
    """Tests for the recovery-energy sweep."""

    def test_rows(self, saddle, diamond, grid):
        """Test the scaling laws recorded in the rows."""
        V = sample_isometry(saddle, 0.5).to_field(grid)
        family = IsometryFamily(saddle, grid, [V])
        sweep = recovery_energy_sweep(saddle, diamond, V, 1, 3.5, (0.2, 0.1), family=family)
        assert [r.h for r in sweep.rows] == [0.2, 0.1]
        for row in sweep.rows:
            assert row.e_h == pytest.approx(row.h**3.5)
            assert row.eps == pytest.approx(row.h**0.75)
            assert row.energy > 0
            assert row.resolvable
        assert sweep.bending == pytest.approx(bending_energy(saddle, V))
        assert len(sweep.to_rows()[0]) == len(RECOVERY_HEADER)
        assert not sweep.admissible

    def test_admissible(self, saddle, diamond, grid):
        """Test β > 2 + 2/m for a second-order family."""
        V = sample_isometry(saddle, 0.5).to_field(grid)
        family = IsometryFamily(saddle, grid, [V, V.scaled(0.0)])
        sweep = recovery_energy_sweep(saddle, diamond, V, 2, 3.5, (0.2,), family=family)
        assert sweep.admissible
        assert sweep.to_dict()["m"] == 2

    def test_default_beta(self, saddle, diamond, grid):
        """Test the β = 3, m = 2 sweep the config defaults to, at the edge of admissibility."""
        V = sample_isometry(saddle, 0.5).to_field(grid)
        family = IsometryFamily(saddle, grid, [V, V.scaled(0.0)])
        beta = SweepSpec().beta
        assert beta == 3.0
        sweep = recovery_energy_sweep(saddle, diamond, V, 2, beta, (0.2, 0.1), family=family)
        for row in sweep.rows:
            assert row.e_h == pytest.approx(row.h**3)
            assert row.eps == pytest.approx(row.h**0.5)
        assert not sweep.admissible
        assert sweep.to_dict()["beta"] == 3.0

    def test_validation(self, saddle, diamond):
        """Test the β range and the step list."""
        V = sample_isometry(saddle)
        with pytest.raises(ConfigError):
            recovery_energy_sweep(saddle, diamond, V, 2, 2.0, (0.1,))
        with pytest.raises(ConfigError):
            recovery_energy_sweep(saddle, diamond, V, 2, 3.5, (0.1, -0.1))
