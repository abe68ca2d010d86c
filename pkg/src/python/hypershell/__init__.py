#!/usr/bin/env python3
"""
Linear strain equations, infinitesimal isometries and bending energies on
hyperbolic surfaces.

The strain system sym∇y = U on a noncharacteristic region of a surface with
negative Gauss curvature reduces to one scalar hyperbolic equation for the
normal component v = ⟨y, ν⟩. It is solved by characteristic (Goursat)
integration in asymptotic coordinates, after which y is reconstructed from
v and U.

Example:
    >>> import hypershell as hs
    >>>
    >>> surface = hs.SurfacePatch.hyperbolic_paraboloid()
    >>> region = hs.NoncharRegion.box((-0.4, -0.4), 0.8, 0.8)
    >>> hs.check_noncharacteristic(surface, region).passes
    True
    >>> data = hs.rigid_motion_data(surface, region, (0.3, -0.2, 1.0))
    >>> y, _ = hs.solve_displacement(surface, region, hs.zero_strain(region, 17), data)
    >>> y.diagnostics["sup_residual"] < 1e-2
    True
"""

from __future__ import annotations

from .asymptotic import (
    CHART_METHODS,
    AsymptoticChart,
    build_chart,
    curve_image,
    export_chart,
    normal_form,
    normalize_chart_along_curve,
)
from .config import ProblemConfig, get_runtime_settings, load_config, parse_config
from .curves import CurveData, PlaneCurve
from .energy import (
    ElasticLaw,
    StVenantKirchhoff,
    bending_energy,
    build_A_field,
    q2_reduce,
    recovery_energy_sweep,
    robust_check,
)
from .exceptions import (
    BranchError,
    ChartError,
    CompatibilityError,
    ConfigError,
    ContractionError,
    ConvergenceError,
    CurvatureSignError,
    DegenerateChartError,
    DomainError,
    GeometryError,
    HypershellError,
    IntegrabilityWarning,
    LawError,
    MarginError,
    NoncharacteristicError,
    NotAnIsometryError,
    RadiusTooLargeError,
    SolverError,
)
from .expressions import Expression, parse_expression
from .geometry import (
    FundamentalForms,
    SurfacePatch,
    TensorFieldGrid,
    covariant_derivative,
    fundamental_forms_at,
    gauss_curvature_at,
    lambda_op,
    rotate_Q,
    surface_from_catalog,
)
from .goursat import (
    GoursatProblem,
    RegionDescriptor,
    SolutionGrid,
    check_compatibility_order1,
    solve_goursat,
    trace_diagnostics,
)
from .isometry import (
    IsometryFamily,
    fit_order,
    match_higher_order,
    rigid_field,
    sample_isometry,
    solve_isometry,
)
from .strain import (
    BoundaryData,
    DisplacementField,
    NoncharRegion,
    SolverOptions,
    SymbolicDisplacement,
    boundary_operator_T,
    check_noncharacteristic,
    fit_rigid_axis,
    reconstruct_displacement,
    rigid_motion_data,
    solve_displacement,
    solve_scalar,
    solve_strain,
    strain_coefficients,
    zero_strain,
)
from .verify import run_verify

__version__ = "0.1.0"

__all__ = [
    # Geometry
    "SurfacePatch",
    "FundamentalForms",
    "TensorFieldGrid",
    "surface_from_catalog",
    "fundamental_forms_at",
    "gauss_curvature_at",
    "rotate_Q",
    "covariant_derivative",
    "lambda_op",
    # Asymptotic charts
    "CHART_METHODS",
    "AsymptoticChart",
    "build_chart",
    "curve_image",
    "normalize_chart_along_curve",
    "normal_form",
    "export_chart",
    # Goursat problems
    "PlaneCurve",
    "CurveData",
    "RegionDescriptor",
    "GoursatProblem",
    "SolutionGrid",
    "solve_goursat",
    "check_compatibility_order1",
    "trace_diagnostics",
    # Strain equation
    "NoncharRegion",
    "BoundaryData",
    "SolverOptions",
    "DisplacementField",
    "SymbolicDisplacement",
    "check_noncharacteristic",
    "strain_coefficients",
    "boundary_operator_T",
    "rigid_motion_data",
    "fit_rigid_axis",
    "solve_scalar",
    "solve_strain",
    "solve_displacement",
    "reconstruct_displacement",
    "zero_strain",
    # Isometries
    "IsometryFamily",
    "solve_isometry",
    "match_higher_order",
    "fit_order",
    "rigid_field",
    "sample_isometry",
    # Energy
    "ElasticLaw",
    "StVenantKirchhoff",
    "q2_reduce",
    "build_A_field",
    "bending_energy",
    "robust_check",
    "recovery_energy_sweep",
    # Configs and expressions
    "ProblemConfig",
    "parse_config",
    "load_config",
    "get_runtime_settings",
    "Expression",
    "parse_expression",
    "run_verify",
    # Exceptions
    "HypershellError",
    "ConfigError",
    "GeometryError",
    "DomainError",
    "CurvatureSignError",
    "NoncharacteristicError",
    "MarginError",
    "ChartError",
    "RadiusTooLargeError",
    "BranchError",
    "DegenerateChartError",
    "SolverError",
    "ContractionError",
    "ConvergenceError",
    "CompatibilityError",
    "NotAnIsometryError",
    "LawError",
    "IntegrabilityWarning",
    # Version info
    "__version__",
]
