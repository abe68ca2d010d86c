#!/usr/bin/env python3
"""
Verification suites behind ``hypershell verify``.

Each suite runs manufactured-solution and property checks with fixed
seeds and returns one :class:`VerifyCheck` per property; convergence
orders are estimated with :class:`pytools.convergence.EOCRecorder` over
grid halvings.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from pytools.convergence import EOCRecorder

from .curves import CurveData, PlaneCurve
from .energy import (
    ElasticLaw,
    StVenantKirchhoff,
    bending_energy,
    recovery_energy_sweep,
    robust_check,
)
from .exceptions import ConfigError
from .expressions import parse_expression
from .geometry import (
    SurfacePatch,
    TensorFieldGrid,
    covariant_derivative_field,
    metric_field,
    random_tangent_samples,
)
from .goursat import GoursatProblem, RegionDescriptor, solve_goursat
from .isometry import (
    IsometryFamily,
    fit_order,
    match_higher_order,
    rigid_field,
    sample_isometry,
    solve_isometry,
)
from .protocols import ArrayFn, ScalarField
from .strain import (
    BoundaryData,
    NoncharRegion,
    SolverOptions,
    SymbolicDisplacement,
    check_noncharacteristic,
    gradient_identity_defect,
    manufactured_rhs,
    rigid_motion_data,
    solve_displacement,
    solve_scalar,
    zero_strain,
)

logger = logging.getLogger(__name__)


SUITES = ("geometry", "goursat", "strain", "isometry", "energy")

VERIFY_HEADER = ("suite", "check", "value", "threshold", "passed")

ORDER_RANGE = (1.7, 2.3)
EXACT_FLOOR = 1e-10


@dataclass
class VerifyCheck:
    suite: str
    name: str
    value: float
    threshold: str
    passed: bool
    detail: dict[str, Any] = field(default_factory=dict)

    def as_tuple(self) -> tuple[Any, ...]:
        return (self.suite, self.name, self.value, self.threshold, self.passed)


@dataclass
class VerifyReport:
    checks: list[VerifyCheck]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def failures(self) -> list[VerifyCheck]:
        return [c for c in self.checks if not c.passed]

    def to_rows(self) -> list[tuple[Any, ...]]:
        return [c.as_tuple() for c in self.checks]

    def to_dict(self) -> dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [
                {**dict(zip(VERIFY_HEADER, c.as_tuple())), "detail": c.detail} for c in self.checks
            ],
        }


def _at_most(suite: str, name: str, value: float, limit: float, **detail: Any) -> VerifyCheck:
    return VerifyCheck(suite, name, float(value), f"<= {limit:g}", bool(value <= limit), detail)


def _within(
    suite: str, name: str, value: float, lo: float, hi: float, **detail: Any
) -> VerifyCheck:
    passed = bool(lo <= value <= hi)
    return VerifyCheck(suite, name, float(value), f"in [{lo:g}, {hi:g}]", passed, detail)


def _order(
    suite: str, name: str, eoc: EOCRecorder, lo: float = ORDER_RANGE[0], hi: float = ORDER_RANGE[1]
) -> VerifyCheck:
    """Observed order in [lo, hi], or every error below the exactness floor."""
    errors = [float(e) for _, e in eoc.history]
    order = float(eoc.order_estimate())
    exact = max(errors) < EXACT_FLOOR
    detail = {"errors": errors, "abscissae": [float(h) for h, _ in eoc.history]}
    passed = bool(exact or lo <= order <= hi)
    return VerifyCheck(suite, name, order, f"in [{lo:g}, {hi:g}]", passed, detail)


# Geometry
# ============================================================================


def _geometry_surfaces() -> list[SurfacePatch]:
    return [
        SurfacePatch.saddle(),
        SurfacePatch.hyperbolic_paraboloid(),
        SurfacePatch.separable(),
        SurfacePatch.monkey_saddle(),
    ]


def verify_geometry(seed: int = 0) -> list[VerifyCheck]:
    checks = []
    names = ("frame_determinant", "second_form_rotation", "q_square", "q_skew", "kappa_det")
    worst = dict.fromkeys(names, 0.0)
    for k, surface in enumerate(_geometry_surfaces()):
        points, X = random_tangent_samples(surface, 100, seed + k)
        forms = surface.forms(points[:, 0], points[:, 1])
        QX = np.einsum("...ab,...b->...a", forms.Q_shape, X)
        frame = np.stack([forms.ambient(QX), forms.ambient(X), forms.normal], axis=-1)
        pxx = forms.second(X, X)
        Q = forms.Q
        GQ = forms.G @ Q
        defects = {
            "frame_determinant": np.linalg.det(frame) - pxx,
            "second_form_rotation": forms.second(QX, QX) - forms.kappa * pxx,
            "q_square": Q @ Q + np.eye(2),
            "q_skew": GQ + np.swapaxes(GQ, -1, -2),
            "kappa_det": np.linalg.det(forms.shape_op) - forms.kappa,
        }
        for name, defect in defects.items():
            worst[name] = max(worst[name], float(np.max(np.abs(defect))))
    for name, value in worst.items():
        checks.append(_at_most("geometry", name, value, 1e-8))

    saddle = SurfacePatch.saddle().forms(np.array(0.0), np.array(0.0))
    monkey = SurfacePatch.from_expression(
        "x1^3 - 3*x1*x2^2", (0.5, 1.5, -0.5, 0.5), name="monkey_saddle"
    ).forms(np.array(1.0), np.array(0.0))
    checks.append(
        _at_most("geometry", "kappa_saddle_origin", abs(float(saddle.kappa) + 1.0), 1e-12)
    )
    checks.append(_at_most("geometry", "kappa_monkey_1_0", abs(float(monkey.kappa) + 0.36), 1e-12))

    surface = SurfacePatch.separable()
    eoc = EOCRecorder()
    for n in (9, 17, 33):
        u = np.linspace(-0.5, 0.5, n)
        grid = TensorFieldGrid.sample(lambda x1, x2: np.zeros(np.shape(x1)), u, u)
        Dg = covariant_derivative_field(surface, metric_field(surface, grid))
        eoc.add_data_point(1.0 / (n - 1), float(np.max(np.abs(Dg[1:-1, 1:-1]))))
    checks.append(_order("geometry", "metric_compatibility_order", eoc, 1.7, 4.5))
    return checks


# Goursat
# ============================================================================


@dataclass
class ManufacturedGoursat:
    problem: GoursatProblem
    exact: ScalarField


_W_EXACT = "sin(x1 + 0.5)*exp(0.3*x2) + 0.2*x1*cos(x2)"
_F0 = "0.2"
_X = ("0.1*x2", "-0.1*x1")

# kinds with their own manufactured solution
_W_BY_KIND = {"P1": "sin(1.5*x1*x2) + exp(0.4*x1 - 0.3*x2)"}


def manufactured_goursat(
    region: RegionDescriptor,
    w: str = _W_EXACT,
    f0: str = _F0,
    X: Sequence[str] = _X,
) -> ManufacturedGoursat:
    """Goursat problem whose exact solution is the expression ``w``."""
    ew = parse_expression(w)
    ef0 = parse_expression(f0)
    eX = [parse_expression(s) for s in X]
    wx1, wx2 = ew.diff("x1"), ew.diff("x2")
    wxy = wx1.diff("x2")

    def f(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        lower = ef0(x1, x2) * ew(x1, x2)
        lower = lower + eX[0](x1, x2) * wx1(x1, x2) + eX[1](x1, x2) * wx2(x1, x2)
        return wxy(x1, x2) - lower

    def on(curve: Optional[PlaneCurve], fn: ScalarField) -> Optional[ArrayFn]:
        if curve is None:
            return None
        return lambda t: fn(curve.point(t)[..., 0], curve.point(t)[..., 1])

    gamma_data = None
    if region.gamma is not None:
        gamma_data = CurveData.from_gradient(
            region.gamma,
            lambda p: ew(p[..., 0], p[..., 1]),
            lambda p: np.stack([wx1(p[..., 0], p[..., 1]), wx2(p[..., 0], p[..., 1])], axis=-1),
        )
    beta_trace = wx1 if region.kind in ("P2", "Xi2") else wx2
    hedge = next((s for s in region.lower if s.base == "hedge"), None)
    vedge = next((s for s in region.left if s.base == "vedge"), None)
    problem = GoursatProblem(
        region,
        f=f,
        f0=ef0,
        X=(eX[0], eX[1]),
        gamma_data=gamma_data,
        p=on(region.beta, beta_trace),
        p_hat=on(region.beta_hat, wx1),
        p1=None if hedge is None else (lambda s, lv=hedge.level: ew(s, np.full_like(s, lv))),
        p2=None if vedge is None else (lambda s, lv=vedge.level: ew(np.full_like(s, lv), s)),
        dp1=None if hedge is None else (lambda s, lv=hedge.level: wx1(s, np.full_like(s, lv))),
        dp2=None if vedge is None else (lambda s, lv=vedge.level: wx2(np.full_like(s, lv), s)),
    )
    return ManufacturedGoursat(problem, ew)


def goursat_regions() -> dict[str, RegionDescriptor]:
    """One region of every kind exercised by the manufactured suite."""
    line = PlaneCurve.line
    curved_p1 = PlaneCurve.from_function(
        lambda t: np.stack([t, 0.5 * t + 0.5 * t**2], axis=-1),
        lambda t: np.stack([np.ones_like(t), 0.5 + t], axis=-1),
        1.0,
        name="beta",
    )
    curved_p2 = PlaneCurve.from_function(
        lambda t: np.stack([0.5 * t + 0.5 * t**2, t], axis=-1),
        lambda t: np.stack([0.5 + t, np.ones_like(t)], axis=-1),
        1.0,
        name="beta",
    )
    return {
        "E": RegionDescriptor.e(line((0.0, 0.0), (1.0, -1.0), 1.0, name="gamma")),
        "Rect": RegionDescriptor.rect((0.0, 0.0), 1.0, 1.0),
        "P1": RegionDescriptor.p1(curved_p1),
        "P2": RegionDescriptor.p2(curved_p2),
        "Xi1": RegionDescriptor.xi1(
            line((0.0, 0.0), (1.0, 1.0), 1.0, name="beta"),
            line((0.0, 0.0), (1.0, -1.0), 0.8, name="gamma"),
        ),
        "Phi": RegionDescriptor.phi(
            line((0.0, 0.0), (0.3, 1.0), 1.0, name="beta"),
            line((0.0, 0.0), (1.0, -1.0), 0.6, name="gamma"),
            line((0.6, -0.6), (0.5, 1.0), 1.6, name="beta_hat"),
        ),
    }


def goursat_case(kind: str) -> ManufacturedGoursat:
    """The manufactured problem the suite solves on region kind ``kind``."""
    regions = goursat_regions()
    if kind not in regions:
        raise ConfigError(f"unknown region kind {kind!r}; known: {', '.join(regions)}")
    return manufactured_goursat(regions[kind], _W_BY_KIND.get(kind, _W_EXACT))


def verify_goursat(
    spacings: Sequence[float] = (0.1, 0.05, 0.025, 0.0125),
) -> list[VerifyCheck]:
    checks = []
    worst_ratio = 0.0
    for kind in goursat_regions():
        case = goursat_case(kind)
        eoc = EOCRecorder()
        for h in spacings:
            sol = solve_goursat(case.problem, h)
            eoc.add_data_point(h, sol.sup_error(case.exact))
            worst_ratio = max(worst_ratio, sol.diagnostics.max_ratio)
        logger.debug("goursat %s:\n%s", kind, eoc.pretty_print())
        checks.append(_order("goursat", f"order_{kind}", eoc))
    checks.append(_at_most("goursat", "picard_ratio", worst_ratio, 0.6))
    return checks


# Strain
# ============================================================================

_V_EXACT = "sin(x1 + 0.3)*exp(0.5*x2)"
_Y_EXACT = ("0.1*sin(x1)*x2", "0.2*x1*x2^2", "0.1*cos(x1 + x2)")


def strain_benchmark() -> tuple[SurfacePatch, NoncharRegion]:
    return SurfacePatch.hyperbolic_paraboloid(), NoncharRegion.box((-0.4, -0.4), 0.8, 0.8)


def verify_strain(grids: Sequence[int] = (9, 17, 33)) -> list[VerifyCheck]:
    surface, region = strain_benchmark()
    rhs, value, grad = manufactured_rhs(surface, _V_EXACT)
    data = BoundaryData.from_solution(surface, region, value, grad)
    exact = SymbolicDisplacement(surface, list(_Y_EXACT))
    axis = (0.3, -0.2, 1.0)
    rigid = rigid_field(surface, axis)
    rigid_data = rigid_motion_data(surface, region, axis)

    eoc_v, eoc_y, eoc_res = EOCRecorder(), EOCRecorder(), EOCRecorder()
    rigid_error = 0.0
    identity = 0.0
    for n in grids:
        h = 1.0 / (n - 1)
        options = SolverOptions(grid=n)
        sol = solve_scalar(surface, region, rhs, data, options)
        p = sol.problem.grid.surface_points()
        eoc_v.add_data_point(h, float(np.max(np.abs(sol.v - value(p[..., 0], p[..., 1])))))

        U = exact.strain_grid(region, n)
        y, _ = solve_displacement(surface, region, U, exact.boundary_data(region), options)
        eoc_y.add_data_point(h, float(np.max(np.abs(y.y - exact.to_field(U).y))))
        eoc_res.add_data_point(h, float(y.diagnostics["sup_residual"]))
        identity = gradient_identity_defect(surface, y, U)

        Z = zero_strain(region, n)
        r, _ = solve_displacement(surface, region, Z, rigid_data, options)
        rigid_error = max(rigid_error, float(np.max(np.abs(r.y - rigid.to_field(Z).y))))

    n = grids[-1]
    single = solve_scalar(surface, region, rhs, data, SolverOptions(grid=n, strips=1))
    split = solve_scalar(surface, region, rhs, data, SolverOptions(grid=n, strips=3))
    strip_gap = float(np.max(np.abs(single.v - split.v)))

    checks = [
        _at_most("strain", "strip_agreement", strip_gap, 1e-8),
        _order("strain", "scalar_order", eoc_v, 1.5, 2.5),
        _order("strain", "displacement_order", eoc_y, 1.5, 2.5),
        _order("strain", "residual_order", eoc_res, 1.5, 2.5),
        _at_most("strain", "rigid_exact", rigid_error, 1e-8),
        _at_most("strain", "gradient_identity", identity, 1e-2),
    ]

    classifications = {
        "separable_box": (
            SurfacePatch.separable(),
            NoncharRegion.box((-0.5, -0.5), 1.0, 1.0),
            True,
        ),
        "monkey_box": (
            SurfacePatch.monkey_saddle(),
            NoncharRegion.from_expressions("0.5 + t", "(1 + s)/(0.5 + t)", 1.5, 1.0),
            True,
        ),
        "monkey_annulus": (
            SurfacePatch.monkey_saddle(),
            NoncharRegion.from_expressions(
                "(1.5 + 0.5*s)*cos(0.3 + 0.7*t)", "(1.5 + 0.5*s)*sin(0.3 + 0.7*t)", 1.0, 1.0
            ),
            False,
        ),
    }
    for name, (surf, reg, expected) in classifications.items():
        report = check_noncharacteristic(surf, reg)
        checks.append(
            VerifyCheck(
                "strain",
                f"classify_{name}",
                float(report.passes),
                f"== {float(expected):g}",
                report.passes == expected,
                report.to_dict(),
            )
        )
    return checks


# Isometry and energy
# ============================================================================

EPS_LIST = (0.2, 0.1, 0.05, 0.025)
MATCH_EPS_LIST = (0.5, 0.4, 0.3, 0.2)


def isometry_benchmark() -> tuple[SurfacePatch, NoncharRegion]:
    return SurfacePatch.saddle(), NoncharRegion.diamond((-0.5, 0.0), 0.7, 0.7)


def verify_isometry(grid: int = 33) -> list[VerifyCheck]:
    """Defect orders of the sample isometry solved from its traces, before and after matching."""
    surface, region = isometry_benchmark()
    options = SolverOptions(grid=grid)
    V = solve_isometry(surface, region, sample_isometry(surface).boundary_data(region), options)
    first = fit_order(IsometryFamily(surface, V.grid, [V]), EPS_LIST)
    matched = fit_order(match_higher_order(surface, region, V, 2, options), MATCH_EPS_LIST)
    return [
        _at_most("isometry", "solve_residual", V.diagnostics["sup_residual"], 1e-2),
        _within("isometry", "order_m1", first.slope, 1.7, 2.3, **first.to_dict()),
        _within("isometry", "order_m2", matched.slope, 2.6, 3.4, **matched.to_dict()),
    ]


def verify_energy(grid: int = 17, seed: int = 0, beta: float = 3.0) -> list[VerifyCheck]:
    """Energy checks; the recovery sweep runs at m = 2 and e_h = h^beta."""
    surface, region = isometry_benchmark()
    grid_ = zero_strain(region, grid)
    law = StVenantKirchhoff()
    rigid = bending_energy(surface, rigid_field(surface, (1.0, 2.0, 0.5)), law, grid_)
    one = bending_energy(surface, sample_isometry(surface, 1.0), law, grid_)
    two = bending_energy(surface, sample_isometry(surface, 2.0), law, grid_)

    rng = np.random.default_rng(seed)
    F = rng.normal(size=(32, 3, 3))
    generic = ElasticLaw(law.W, name="finite_difference")
    q_fd = generic.Q3(F)
    q3_error = float(np.max(np.abs(q_fd - law.Q3(F)) / np.maximum(1.0, np.abs(law.Q3(F)))))

    options = SolverOptions(grid=grid)
    robust = robust_check(surface, region, sample_isometry(surface, 0.5), options)
    sweep = recovery_energy_sweep(
        surface,
        region,
        sample_isometry(surface, 0.5),
        2,
        beta,
        (0.2, 0.1, 0.05, 0.025),
        law,
        options=options,
    )
    final = sweep.final_ratio
    return [
        _at_most("energy", "rigid_energy", abs(rigid), 1e-10),
        _at_most("energy", "homogeneity", abs(two - 4.0 * one) / max(abs(one), 1e-300), 1e-9),
        _at_most("energy", "q3_finite_difference", q3_error, 1e-6),
        _at_most(
            "energy",
            "robust_residual",
            robust.sup_residual,
            5e-2 * max(1.0, robust.rhs_scale),
            **robust.to_dict(),
        ),
        VerifyCheck(
            "energy",
            "recovery_ratio",
            float("nan") if final is None else abs(final - 1.0),
            "<= 0.15",
            final is not None and abs(final - 1.0) <= 0.15 and sweep.converging(),
            sweep.to_dict(),
        ),
    ]


_RUNNERS: dict[str, Callable[[], list[VerifyCheck]]] = {
    "geometry": verify_geometry,
    "goursat": verify_goursat,
    "strain": verify_strain,
    "isometry": verify_isometry,
    "energy": verify_energy,
}


def run_verify(suite: str = "all") -> VerifyReport:
    """
    Run one suite or ``all`` of them.

    Raises:
        ConfigError: If the suite name is unknown
    """
    if suite != "all" and suite not in _RUNNERS:
        raise ConfigError(f"unknown suite {suite!r}; known: {', '.join(SUITES)}, all")
    names = list(SUITES) if suite == "all" else [suite]
    checks: list[VerifyCheck] = []
    for name in names:
        start = time.perf_counter()
        result = _RUNNERS[name]()
        logger.info("suite %s: %d checks in %.1fs", name, len(result), time.perf_counter() - start)
        checks.extend(result)
    return VerifyReport(checks)
