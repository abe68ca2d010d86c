#!/usr/bin/env python3
"""
Performance benchmarks for hypershell.

Run with: pytest benchmarks/ --benchmark-only -v
"""

import numpy as np
import pytest

from hypershell.asymptotic import build_chart
from hypershell.geometry import SurfacePatch
from hypershell.goursat import solve_goursat
from hypershell.strain import (
    NoncharRegion,
    SolverOptions,
    rigid_motion_data,
    solve_displacement,
    zero_strain,
)
from hypershell.verify import goursat_regions, manufactured_goursat


@pytest.fixture(scope="module")
def paraboloid():
    return SurfacePatch.hyperbolic_paraboloid()


@pytest.fixture(scope="module")
def traced_surface():
    return SurfacePatch.from_expression("x1*x2 + 0.1*x1^3")


def test_closed_form_chart(benchmark, paraboloid):
    """Benchmark: build a closed-form chart and map 10k points."""
    x = np.random.default_rng(0).uniform(-0.3, 0.3, size=(10_000, 2))

    def run():
        chart = build_chart(paraboloid, (0.0, 0.0), 0.5)
        return chart.forward(x)

    y = benchmark(run)
    assert y.shape == x.shape


def test_traced_chart(benchmark, traced_surface):
    """Benchmark: trace an asymptotic net chart by RK4."""
    chart = benchmark(build_chart, traced_surface, (0.0, 0.0), 0.3, "ode", 128)
    assert chart.method == "ode"


@pytest.mark.parametrize("spacing", [0.05, 0.025])
def test_goursat_sweep(benchmark, spacing):
    """Benchmark: manufactured Goursat solve on the Phi region."""
    case = manufactured_goursat(goursat_regions()["Phi"])
    sol = benchmark(solve_goursat, case.problem, spacing)
    assert sol.sup_error(case.exact) < 1e-2


def test_rigid_strain_solve(benchmark, paraboloid):
    """Benchmark: one strain solve with rigid-motion data on a 17x17 grid."""
    region = NoncharRegion.box((-0.4, -0.4), 0.8, 0.8)
    U = zero_strain(region, 17)
    data = rigid_motion_data(paraboloid, region, (0.3, -0.2, 1.0))
    options = SolverOptions(grid=17)

    y, _ = benchmark(solve_displacement, paraboloid, region, U, data, options)
    assert y.diagnostics["sup_residual"] < 1e-2
