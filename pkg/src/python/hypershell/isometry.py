#!/usr/bin/env python3
"""
Infinitesimal isometries and their higher-order matching.

An infinitesimal isometry is a displacement V with sym∇V = 0. Matching
upgrades it to a family u_ε = r + εV + Σ_{j≥2} εʲw_j whose metric defect
∇ᵀu_ε∇u_ε − g is O(ε^{m+1}), by solving

    sym∇w_i = −½ Σ_{j=1}^{i−1} sym(∇ᵀw_j ∇w_{i−j}),   i = 2, …, m,

with homogeneous boundary data.

Example:
    >>> from hypershell.geometry import SurfacePatch
    >>> from hypershell.isometry import IsometryFamily, fit_order, sample_isometry
    >>> from hypershell.strain import NoncharRegion, zero_strain
    >>> surface = SurfacePatch.saddle()
    >>> region = NoncharRegion.diamond((-0.5, 0.0), 0.7, 0.7)
    >>> V = sample_isometry(surface).to_field(zero_strain(region, 33))
    >>> fit = fit_order(IsometryFamily(surface, V.grid, [V]), [0.2, 0.1, 0.05])
    >>> round(fit.slope)
    2
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Optional, Sequence, Union

import numpy as np
import sympy as smp
from scipy.linalg import expm

from .exceptions import ConfigError
from .expressions import X1, X2
from .geometry import SurfacePatch, TensorFieldGrid
from .strain import (
    BoundaryData,
    DisplacementField,
    NoncharRegion,
    SolverOptions,
    SymbolicDisplacement,
    solve_displacement,
    zero_strain,
)
from .validators import validate_int, validate_list_float, validate_point

logger = logging.getLogger(__name__)

DEFECT_METHODS = ("gradient", "fd")

_FLOOR_FACTOR = 10.0
_MAX_ORDER = 4

DEFECT_HEADER = ("eps", "defect", "used")


def skew(a: Any) -> np.ndarray:
    """Matrix of x ↦ a×x."""
    a = validate_point(a, "a", dim=3)
    return np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])


def solve_isometry(
    surface: SurfacePatch,
    region: NoncharRegion,
    data: Optional[BoundaryData] = None,
    options: Optional[SolverOptions] = None,
) -> DisplacementField:
    """Strain solve with U ≡ 0; the field's diagnostics carry its residuals."""
    options = options or SolverOptions()
    U = zero_strain(region, options.grid)
    V, _ = solve_displacement(surface, region, U, data, options)
    logger.info(
        "solved isometry on %s: sup residual %.3e", region.name, V.diagnostics["sup_residual"]
    )
    return V


def _interior_sup(a: np.ndarray) -> float:
    return float(np.max(np.abs(a[1:-1, 1:-1]), initial=0.0))


def metric_defect_of_gradient(
    surface: SurfacePatch, grid: TensorFieldGrid, gradient: np.ndarray
) -> float:
    """sup over interior nodes of |∇ᵀu∇u − g| for a sampled gradient (n1, n2, 3, 2)."""
    forms = grid.forms(surface)
    M = np.einsum("...ia,...ib->...ab", gradient, gradient)
    return _interior_sup(M - forms.G)


def reference_tangents(surface: SurfacePatch, grid: TensorFieldGrid) -> np.ndarray:
    """Differenced tangents D_h r of the inclusion map, (n1, n2, 3, 2)."""
    p = grid.surface_points()
    return grid.partial(surface.position(p[..., 0], p[..., 1]))


def metric_defect(surface: SurfacePatch, grid: TensorFieldGrid, positions: np.ndarray) -> float:
    """
    sup over interior nodes of |D_hᵀu D_hu − D_hᵀr D_hr| in the chart basis.

    Both metrics are differenced with the same stencil, so a rigid motion of
    the reference surface has a defect at rounding level.

    Args:
        surface: Reference surface
        grid: Region grid carrying the sample points
        positions: Deformed positions u(x) at the nodes, (n1, n2, 3)
    """
    du = grid.partial(np.asarray(positions, dtype=float))
    dr = reference_tangents(surface, grid)
    M = np.einsum("...ia,...ib->...ab", du, du) - np.einsum("...ia,...ib->...ab", dr, dr)
    return _interior_sup(M)


@dataclass
class IsometryFamily:
    """u_ε = r + Σ_{j=1}^{m} εʲ w_j on a region grid.

    Attributes:
        surface: Reference surface
        grid: Region grid shared by all fields
        fields: w_1 = V, w_2, …, w_m
        stage_residuals: sup residual of each correction solve
    """

    surface: SurfacePatch
    grid: TensorFieldGrid
    fields: list[DisplacementField]
    stage_residuals: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.fields:
            raise ConfigError("an isometry family needs at least its first-order field")
        for w in self.fields:
            if w.shape != self.grid.shape:
                raise ConfigError(f"family field on grid {w.shape}, expected {self.grid.shape}")

    @property
    def order(self) -> int:
        return len(self.fields)

    def position(self, eps: float) -> np.ndarray:
        p = self.grid.surface_points()
        out = self.surface.position(p[..., 0], p[..., 1]).copy()
        for j, w in enumerate(self.fields, start=1):
            out += eps**j * w.y
        return out

    def gradient(self, eps: float) -> np.ndarray:
        """∂_a u_ε from the fields' gradients, (n1, n2, 3, 2)."""
        out = self.grid.forms(self.surface).tangents.copy()
        for j, w in enumerate(self.fields, start=1):
            out += eps**j * w.gradient
        return out

    def defect(self, eps: float, method: str = "fd") -> float:
        """
        Metric defect at ε.

        ``fd`` differences the reconstructed positions; ``gradient`` uses the
        gradients the strain solves return alongside them.
        """
        _check_method(method)
        if method == "gradient":
            return metric_defect_of_gradient(self.surface, self.grid, self.gradient(eps))
        return metric_defect(self.surface, self.grid, self.position(eps))

    def _gradients(self, method: str) -> list[np.ndarray]:
        """∇w_j for j = 0, …, m with w_0 the inclusion."""
        _check_method(method)
        if method == "gradient":
            return [self.grid.forms(self.surface).tangents] + [w.gradient for w in self.fields]
        dr = reference_tangents(self.surface, self.grid)
        return [dr] + [self.grid.partial(w.y) for w in self.fields]

    def stage_identity(self, i: int, method: str = "fd") -> float:
        """sup |Σ_{j=0}^{i} sym(∇ᵀw_j∇w_{i−j})| with w_0 the inclusion."""
        i = validate_int(i, "i", 1, self.order)
        grads = self._gradients(method)
        total = sum(np.einsum("...ka,...kb->...ab", grads[j], grads[i - j]) for j in range(i + 1))
        assert isinstance(total, np.ndarray)
        return _interior_sup(0.5 * (total + np.swapaxes(total, -1, -2)))

    def consistency(self, eps: float, method: str = "fd") -> float:
        """
        Σ_{k≤m} εᵏ·stage_identity(k): the part of the defect at ε that the
        matching equations cancel exactly and the discretization does not.
        """
        return float(
            sum(eps**k * self.stage_identity(k, method) for k in range(1, self.order + 1))
        )

    def truncated(self, m: int) -> IsometryFamily:
        m = validate_int(m, "m", 1, self.order)
        residuals = self.stage_residuals[: m - 1]
        return IsometryFamily(self.surface, self.grid, self.fields[:m], residuals)


def _check_method(method: str) -> None:
    if method not in DEFECT_METHODS:
        raise ConfigError(f"method must be one of {DEFECT_METHODS}, got {method!r}")


def _as_field(
    V: Union[DisplacementField, SymbolicDisplacement], region: NoncharRegion, n: int
) -> DisplacementField:
    if isinstance(V, SymbolicDisplacement):
        return V.to_field(zero_strain(region, n))
    return V


def match_higher_order(
    surface: SurfacePatch,
    region: NoncharRegion,
    V: Union[DisplacementField, SymbolicDisplacement],
    m: int,
    options: Optional[SolverOptions] = None,
) -> IsometryFamily:
    """
    Match a first-order isometry to order m (1 ≤ m ≤ 4).

    Each stage solves the strain problem with right-hand side
    U_i = −½ Σ_{j=1}^{i−1} sym(∇ᵀw_j∇w_{i−j}) and homogeneous data on the
    grid of V.

    Raises:
        SolverError: If a stage solve fails
        GeometryError: If the region is not noncharacteristic
    """
    m = validate_int(m, "m", 1, _MAX_ORDER)
    options = options or SolverOptions()
    first = _as_field(V, region, options.grid)
    grid = first.grid
    fields = [first]
    residuals: list[float] = []
    for i in range(2, m + 1):
        U = np.zeros(grid.shape + (2, 2))
        for j in range(1, i):
            left, right = fields[j - 1].gradient, fields[i - j - 1].gradient
            U -= 0.5 * np.einsum("...ka,...kb->...ab", left, right)
        U = 0.5 * (U + np.swapaxes(U, -1, -2))
        Ugrid = grid.with_values(U, "form", symmetric=True)
        w, _ = solve_displacement(surface, region, Ugrid, BoundaryData.zero(), options)
        residuals.append(float(w.diagnostics["sup_residual"]))
        logger.info(
            "matching stage %d: sup|U| %.3e, residual %.3e",
            i,
            float(np.max(np.abs(U))),
            residuals[-1],
        )
        fields.append(w)
    return IsometryFamily(surface, grid, fields, residuals)


def rotation_floor(
    family: IsometryFamily,
    eps: float,
    method: str = "fd",
    axis: Any = (0.3, -0.2, 1.0),
) -> float:
    """Metric defect of the exactly rigid family exp(εÂ)r on the same grid."""
    _check_method(method)
    R = expm(eps * skew(axis))
    if method == "gradient":
        grad = np.einsum("ij,...ja->...ia", R, family.grid.forms(family.surface).tangents)
        return metric_defect_of_gradient(family.surface, family.grid, grad)
    p = family.grid.surface_points()
    positions = family.surface.position(p[..., 0], p[..., 1]) @ R.T
    return metric_defect(family.surface, family.grid, positions)


@dataclass
class OrderFit:
    """Least-squares slope of log(defect) against log(ε)."""

    slope: float
    eps: list[float]
    defects: list[float]
    used: list[bool]
    floor: float
    floors: list[float] = field(default_factory=list)
    method: str = "fd"

    @property
    def censored(self) -> list[float]:
        return [e for e, u in zip(self.eps, self.used) if not u]

    @property
    def inconclusive(self) -> bool:
        return sum(self.used) < 2

    def to_rows(self) -> list[tuple[float, float, bool]]:
        return list(zip(self.eps, self.defects, self.used))

    def to_dict(self) -> dict[str, Any]:
        return {
            "slope": None if self.inconclusive else self.slope,
            "inconclusive": self.inconclusive,
            "method": self.method,
            "floor": self.floor,
            "floors": self.floors,
            "censored": self.censored,
            "eps": self.eps,
            "defects": self.defects,
        }


def fit_order(
    family: IsometryFamily,
    eps_list: Sequence[float],
    floor: Optional[float] = None,
    method: str = "fd",
) -> OrderFit:
    """
    Fit the metric-defect order of a family.

    A point is censored when its defect is not above its floor. A given
    ``floor`` applies to every ε. Otherwise the floor at ε is ten times the
    larger of the rigid family's defect at the largest ε and the family's
    own consistency error at ε.
    """
    eps = validate_list_float(eps_list, "eps_list")
    if any(e <= 0 for e in eps):
        raise ConfigError(f"eps_list entries must be positive, got {eps}")
    _check_method(method)
    if floor is None:
        floor = _FLOOR_FACTOR * rotation_floor(family, max(eps), method)
        floors = [max(floor, _FLOOR_FACTOR * family.consistency(e, method)) for e in eps]
    else:
        floors = [float(floor)] * len(eps)
    defects = [family.defect(e, method) for e in eps]
    used = [d > f for d, f in zip(defects, floors)]
    x = np.log([e for e, u in zip(eps, used) if u])
    y = np.log([d for d, u in zip(defects, used) if u])
    slope = float(np.polyfit(x, y, 1)[0]) if x.size >= 2 else math.nan
    fit = OrderFit(slope, eps, defects, used, float(floor), floors, method)
    logger.info(
        "fitted %s defect order %.3f over %d of %d points",
        method,
        slope,
        int(sum(used)),
        len(eps),
    )
    return fit


def rigid_field(
    surface: SurfacePatch, a: Any = (0.0, 0.0, 1.0), c: Any = (0.0, 0.0, 0.0)
) -> SymbolicDisplacement:
    """Infinitesimal rigid motion y = a×r + c."""
    a = validate_point(a, "a", dim=3)
    c = validate_point(c, "c", dim=3)
    if surface.height is None:
        raise ConfigError(f"surface {surface.name!r} has no symbolic height")
    r = smp.Matrix([X1, X2, surface.height])
    y = smp.Matrix([float(v) for v in a]).cross(r) + smp.Matrix([float(v) for v in c])
    return SymbolicDisplacement(surface, list(y), name="rigid")


def sample_isometry(surface: SurfacePatch, scale: float = 1.0) -> SymbolicDisplacement:
    """Polynomial non-rigid infinitesimal isometry of h = x1·x2.

    V = scale·(−x1³x2 − x2⁴/2, −x1⁴/2 − x1x2³, x1³ + x2³).
    """
    if surface.height is None or smp.simplify(surface.height - X1 * X2) != 0:
        raise ConfigError("the sample isometry is defined on the saddle h = x1*x2 only")
    k = smp.Float(scale)
    components = [
        k * (-(X1**3) * X2 - X2**4 / 2),
        k * (-(X1**4) / 2 - X1 * X2**3),
        k * (X1**3 + X2**3),
    ]
    return SymbolicDisplacement(surface, components, name="sample")
