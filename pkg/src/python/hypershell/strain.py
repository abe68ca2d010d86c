#!/usr/bin/env python3
"""
The linear strain equation sym∇y = U on a noncharacteristic region.

A region is the image of an embedding α: [0, a] × [0, b] → domain whose
t-curves are noncharacteristic and whose lateral s-curves meet them
Π-orthogonally. Writing the gradient of a displacement as

    ∇_α y = ι_αU − v·Qα + ⟨u, α⟩ν

the equation reduces to one scalar equation for the rotation part v:

    ⟨D²v, Q*Π⟩ = P(U) − factor·κ·tr_gΠ·v + X(v),   X = (∇ν)⁻¹Dκ,

after which u = Q(∇ν)⁻¹(K − Dv) with K = Q[Λ(U) − D tr_gU], and y is
recovered by integrating ∇y along grid lines.

The scalar equation is solved in s-strips. Each strip gets an asymptotic
chart normalized along its lower edge, so the strip becomes a Φ region of
the Goursat solver; the lower data of a strip are the trace of the strip
below it.

Example:
    >>> from hypershell.geometry import SurfacePatch
    >>> from hypershell.strain import BoundaryData, NoncharRegion, solve_displacement, zero_strain
    >>> surface = SurfacePatch.saddle()
    >>> region = NoncharRegion.diamond((-0.35, 0.0), 0.5, 0.5)
    >>> field, _ = solve_displacement(surface, region, zero_strain(region, 17), BoundaryData.zero())
    >>> float(abs(field.y).max())
    0.0
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np
import sympy as smp
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from .asymptotic import (
    CHART_METHODS,
    AsymptoticChart,
    build_chart,
    curve_image,
    has_closed_form,
    normal_form,
    normalize_chart_along_curve,
)
from .curves import CurveData, PlaneCurve, tangential_derivative
from .exceptions import (
    ChartError,
    CompatibilityError,
    ConfigError,
    CurvatureSignError,
    DomainError,
    GeometryError,
    IntegrabilityWarning,
    NoncharacteristicError,
    RadiusTooLargeError,
)
from .expressions import X1, X2, Expression, parse_expression, parse_vector
from .geometry import (
    FundamentalForms,
    SurfacePatch,
    TensorFieldGrid,
    covariant_derivative_field,
    lambda_field,
)
from .goursat import (
    CompatibilityReport,
    JunctionCheck,
    RegionDescriptor,
    GoursatProblem,
    SolutionGrid,
    solve_goursat,
)
from .protocols import ArrayFn, ScalarField
from .validators import (
    CORNER_TOL,
    KAPPA_MIN,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
    NONCHAR_TOL,
    validate_choice,
    validate_int,
    validate_point,
    validate_positive,
)

logger = logging.getLogger(__name__)


SIDES = ("bottom", "top", "left", "right")

_INVERSE_NODES = 65
_CHECK_NODES = 33
_EDGE_SAMPLES = 33
_CURVE_SAMPLES = 129
_CLIP_MARGIN = 0.05
_CURL_FACTOR = 100.0
_NULL_TOL = 1e-6
_RADIUS_PAD = 1.1
_NET_PADS = (1.6, 1.25)
_RIGID_SAMPLES = 17
_EDGE_NORMALS = {"bottom": (1, -1.0), "top": (1, 1.0), "left": (0, -1.0), "right": (0, 1.0)}

DISPLACEMENT_HEADER = (
    "t", "s", "x1", "x2", "y1", "y2", "y3", "W1", "W2", "w_normal", "v", "u1", "u2",
)


# Regions
# ============================================================================


class NoncharRegion:
    """Embedding α(t, s) of [0, a] × [0, b] into the surface parameters.

    Args:
        alpha: Maps (t, s) arrays to points of shape (..., 2)
        jacobian: Maps (t, s) to [∂α/∂t, ∂α/∂s] as (..., 2, 2) indexed [a, k]
        a: Length of the t-interval
        b: Length of the s-interval
        name: Label used in reports
        source: JSON-ready description recorded in reports
    """

    def __init__(
        self,
        alpha: Callable[[np.ndarray, np.ndarray], np.ndarray],
        jacobian: Callable[[np.ndarray, np.ndarray], np.ndarray],
        a: float,
        b: float,
        name: str = "region",
        source: Optional[dict[str, Any]] = None,
    ) -> None:
        self._alpha = alpha
        self._jacobian = jacobian
        self.a = validate_positive(a, "a")
        self.b = validate_positive(b, "b")
        self.name = name
        self.source: dict[str, Any] = dict(source or {})
        self._tree: Optional[cKDTree] = None
        self._tree_nodes: Optional[np.ndarray] = None

    def __repr__(self) -> str:
        return f"NoncharRegion({self.name!r}, a={self.a}, b={self.b})"

    @classmethod
    def box(cls, origin: Any = (0.0, 0.0), a: float = 1.0, b: float = 1.0) -> NoncharRegion:
        """Axis-parallel box α(t, s) = origin + (t, s)."""
        o = validate_point(origin, "origin")

        def alpha(t: np.ndarray, s: np.ndarray) -> np.ndarray:
            t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
            return np.stack([o[0] + t, o[1] + s], axis=-1)

        def jac(t: np.ndarray, s: np.ndarray) -> np.ndarray:
            shape = np.broadcast(np.asarray(t), np.asarray(s)).shape
            return np.broadcast_to(np.eye(2), shape + (2, 2)).copy()

        return cls(alpha, jac, a, b, "box", {"kind": "box", "origin": o.tolist(), "a": a, "b": b})

    @classmethod
    def diamond(cls, corner: Any = (0.0, 0.0), a: float = 1.0, b: float = 1.0) -> NoncharRegion:
        """Box rotated by 45°: α(t, s) = corner + t·(1, −1)/√2 + s·(1, 1)/√2."""
        c = validate_point(corner, "corner")
        M = np.array([[1.0, 1.0], [-1.0, 1.0]]) / math.sqrt(2)

        def alpha(t: np.ndarray, s: np.ndarray) -> np.ndarray:
            t, s = np.broadcast_arrays(np.asarray(t, float), np.asarray(s, float))
            return c + np.stack([t, s], axis=-1) @ M.T

        def jac(t: np.ndarray, s: np.ndarray) -> np.ndarray:
            shape = np.broadcast(np.asarray(t), np.asarray(s)).shape
            return np.broadcast_to(M, shape + (2, 2)).copy()

        spec = {"kind": "diamond", "origin": c.tolist(), "a": a, "b": b}
        return cls(alpha, jac, a, b, "diamond", spec)

    @classmethod
    def from_expressions(
        cls, x1: Any, x2: Any, a: float, b: float, name: str = "expression"
    ) -> NoncharRegion:
        """Region α(t, s) = (x1(t, s), x2(t, s)) given as expression strings."""
        e1, e2 = parse_vector([x1, x2], ("t", "s"))
        parts = [[e.diff("t"), e.diff("s")] for e in (e1, e2)]

        def alpha(t: np.ndarray, s: np.ndarray) -> np.ndarray:
            return np.stack([e1(t, s), e2(t, s)], axis=-1)

        def jac(t: np.ndarray, s: np.ndarray) -> np.ndarray:
            rows = [np.stack([p[0](t, s), p[1](t, s)], axis=-1) for p in parts]
            return np.stack(rows, axis=-2)

        source = {"kind": "expression", "alpha": [e1.source, e2.source], "a": a, "b": b}
        return cls(alpha, jac, a, b, name, source)

    # Evaluation
    # ------------------------------------------------------------------

    def point(self, t: Any, s: Any) -> np.ndarray:
        return np.asarray(self._alpha(np.asarray(t, float), np.asarray(s, float)), dtype=float)

    def jac(self, t: Any, s: Any) -> np.ndarray:
        return np.asarray(self._jacobian(np.asarray(t, float), np.asarray(s, float)), dtype=float)

    def embedding(self, t: np.ndarray, s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return self.point(t, s), self.jac(t, s)

    def axes(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        n = validate_int(n, "grid", 3)
        return np.linspace(0.0, self.a, n), np.linspace(0.0, self.b, n)

    def sample(
        self,
        fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        n: int,
        kind: str = "scalar",
        symmetric: bool = False,
    ) -> TensorFieldGrid:
        """Sample a field of the surface parameters on an n×n (t, s) grid."""
        t, s = self.axes(n)
        return TensorFieldGrid.sample(fn, t, s, kind, embedding=self.embedding, symmetric=symmetric)

    def side_params(self, side: str, param: Any) -> tuple[np.ndarray, np.ndarray]:
        """(t, s) of the edge point with edge parameter ``param``."""
        validate_choice(side, "side", SIDES)
        p = np.asarray(param, dtype=float)
        if side == "bottom":
            return p, np.zeros_like(p)
        if side == "top":
            return p, np.full_like(p, self.b)
        if side == "left":
            return np.zeros_like(p), p
        return np.full_like(p, self.a), p

    def t_curve(self, s0: float) -> PlaneCurve:
        return PlaneCurve.from_function(
            lambda t: self.point(t, np.full_like(t, s0)),
            lambda t: self.jac(t, np.full_like(t, s0))[..., :, 0],
            self.a,
            name=f"t-curve s={s0:g}",
        )

    def s_curve(self, t0: float, s0: float, s1: float) -> PlaneCurve:
        return PlaneCurve.from_function(
            lambda r: self.point(np.full_like(r, t0), s0 + r),
            lambda r: self.jac(np.full_like(r, t0), s0 + r)[..., :, 1],
            s1 - s0,
            name=f"s-curve t={t0:g}",
        )

    def boundary_samples(
        self, n: int = _EDGE_SAMPLES, s0: float = 0.0, s1: Optional[float] = None
    ) -> np.ndarray:
        """Points on the four edges of α([0, a] × [s0, s1])."""
        s1 = self.b if s1 is None else s1
        t = np.linspace(0.0, self.a, n)
        s = np.linspace(s0, s1, n)
        return np.concatenate(
            [
                self.point(t, np.full_like(t, s0)),
                self.point(t, np.full_like(t, s1)),
                self.point(np.zeros_like(s), s),
                self.point(np.full_like(s, self.a), s),
            ]
        )

    def inverse(self, x: Any, strict: bool = True) -> np.ndarray:
        """
        (t, s) with α(t, s) = x, by Newton's method from the nearest sample.

        Args:
            x: Points (..., 2)
            strict: Raise on non-convergence instead of returning NaN

        Raises:
            GeometryError: If ``strict`` and Newton does not converge
        """
        pts = np.asarray(x, dtype=float)
        shape = pts.shape[:-1]
        flat = pts.reshape(-1, 2)
        if self._tree is None:
            t, s = np.meshgrid(*self.axes(_INVERSE_NODES), indexing="ij")
            self._tree_nodes = np.stack([t, s], axis=-1).reshape(-1, 2)
            self._tree = cKDTree(self.point(t, s).reshape(-1, 2))
        assert self._tree_nodes is not None
        _, idx = self._tree.query(flat)
        ts = self._tree_nodes[idx].copy()
        tol = NEWTON_TOL * max(1.0, float(np.max(np.abs(flat), initial=0.0)))
        done = np.zeros(len(flat), dtype=bool)
        with np.errstate(all="ignore"):
            for _ in range(NEWTON_MAX_ITER):
                res = self.point(ts[:, 0], ts[:, 1]) - flat
                done = np.max(np.abs(res), axis=-1) <= tol
                if np.all(done):
                    break
                J = self.jac(ts[:, 0], ts[:, 1])
                step = np.linalg.solve(J, res[..., None])[..., 0]
                ts = np.where(done[:, None], ts, ts - step)
        if not np.all(done):
            if strict:
                raise GeometryError(
                    f"region map of {self.name!r} cannot be inverted at some points"
                )
            ts[~done] = np.nan
        return ts.reshape(shape + (2,))

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "a": self.a, "b": self.b, **self.source}


@dataclass
class NoncharCheck:
    name: str
    margin: float
    holds: bool
    point: tuple[float, float]


@dataclass
class NoncharReport:
    """Outcome of :func:`check_noncharacteristic` with worst-node margins."""

    region: str
    checks: list[NoncharCheck]

    @property
    def passes(self) -> bool:
        return all(c.holds for c in self.checks)

    def failed(self) -> list[NoncharCheck]:
        return [c for c in self.checks if not c.holds]

    def to_dict(self) -> dict[str, Any]:
        return {
            "region": self.region,
            "passes": self.passes,
            "checks": [
                {"name": c.name, "margin": c.margin, "holds": c.holds, "point": list(c.point)}
                for c in self.checks
            ],
        }

    def require(self) -> None:
        """Raise the matching geometry error if a check failed."""
        bad = self.failed()
        if not bad:
            return
        first = bad[0]
        detail = {
            "checks": [c.name for c in bad],
            "point": list(first.point),
            "margin": first.margin,
        }
        if first.name == "inside_domain":
            raise DomainError(f"region {self.region!r} leaves the surface domain", **detail)
        if first.name == "hyperbolic":
            raise CurvatureSignError(
                f"surface is not hyperbolic on region {self.region!r}", **detail
            )
        raise NoncharacteristicError(
            f"region {self.region!r} is not noncharacteristic: {', '.join(c.name for c in bad)}",
            **detail,
        )


def _worst(name: str, margin: np.ndarray, points: np.ndarray, threshold: float) -> NoncharCheck:
    k = int(np.argmin(margin))
    m = float(margin.ravel()[k])
    p = points.reshape(-1, 2)[k]
    return NoncharCheck(name, m, m >= threshold, (float(p[0]), float(p[1])))


def check_noncharacteristic(
    surface: SurfacePatch, region: NoncharRegion, n: int = _CHECK_NODES
) -> NoncharReport:
    """
    Validate a region on an n×n grid of (t, s) nodes.

    Checks, each with its worst-node margin:

    * ``inside_domain``: α maps into the surface domain
    * ``hyperbolic``: κ < 0 on the region
    * ``t_curves``: Π(α_t, α_t) keeps one sign with |·| ≥ 1e-8
    * ``lateral_s``: |Π(α_s, α_s)| ≥ 1e-8 on t ∈ {0, a}
    * ``lateral_orthogonal``: |Π(α_t, α_s)| ≤ 1e-8 on t ∈ {0, a}

    Never raises; call :meth:`NoncharReport.require` to turn failures
    into errors.
    """
    T, S = np.meshgrid(*region.axes(n), indexing="ij")
    x = region.point(T, S)
    J = region.jac(T, S)
    d = surface.domain
    room = np.minimum.reduce(
        [x[..., 0] - d.x1_min, d.x1_max - x[..., 0], x[..., 1] - d.x2_min, d.x2_max - x[..., 1]]
    )
    checks = [_worst("inside_domain", room, x, -1e-12)]
    with np.errstate(all="ignore"):
        forms = surface.forms(x[..., 0], x[..., 1])
        checks.append(_worst("hyperbolic", -forms.kappa, x, KAPPA_MIN))
        at, as_ = J[..., :, 0], J[..., :, 1]
        pitt = forms.second(at, at)
        sign = 1.0 if float(np.median(pitt)) >= 0 else -1.0
        checks.append(_worst("t_curves", sign * pitt, x, NONCHAR_TOL))
        lateral = (0, -1)
        piss = np.abs(forms.second(as_, as_))[lateral, :]
        checks.append(_worst("lateral_s", piss, x[lateral, :], NONCHAR_TOL))
        pits = np.abs(forms.second(at, as_))[lateral, :]
        checks.append(_worst("lateral_orthogonal", NONCHAR_TOL - pits, x[lateral, :], 0.0))
    report = NoncharReport(region.name, checks)
    logger.debug("noncharacteristic check of %s: %s", region.name, report.to_dict())
    return report


# Scalar problem
# ============================================================================


def strain_coefficients(surface: SurfacePatch, U: TensorFieldGrid) -> tuple[np.ndarray, np.ndarray]:
    """
    P(U) and K = Q[Λ(U) − D tr_gU] at every node of a sampled strain.

    P(U) = ⟨sym DK, Q*Π⟩ − ⟨K, (∇ν)⁻¹Dκ⟩ − κ·tr_g U(Q∇ν·, ·).

    Raises:
        ConfigError: If U is not a rank-2 form
        CurvatureSignError: If |κ| < 1e-10 at some node
    """
    if U.kind != "form":
        raise ConfigError(f"strain must be a rank-2 form, got {U.kind}")
    forms = U.forms(surface)
    if np.any(np.abs(forms.kappa) < KAPPA_MIN):
        raise CurvatureSignError("shape operator is singular (|kappa| < 1e-10) on the strain grid")
    lam = lambda_field(surface, U)
    tr = np.einsum("...ij,...ij->...", forms.G_inv, U.values)
    K = np.einsum("...ij,...j->...i", forms.Q, lam - forms.raise_(U.partial(tr)))
    DK = covariant_derivative_field(surface, U.with_values(K, "vector"))
    low = np.einsum("...ia,...al->...il", forms.G, DK)
    sym = 0.5 * (low + np.swapaxes(low, -1, -2))
    X = _x_field(forms)
    AU = np.einsum("...ai,...aj->...ij", forms.Q_shape, U.values)
    trAU = np.einsum("...ij,...ij->...", forms.G_inv, AU)
    P = forms.pair_q_star_pi(sym) - forms.inner(K, X) - forms.kappa * trAU
    return P, K


def _x_field(forms: FundamentalForms) -> np.ndarray:
    return np.linalg.solve(forms.shape_op, forms.grad_kappa[..., None])[..., 0]


def _grid_interpolant(
    region: NoncharRegion, grid: TensorFieldGrid, values: np.ndarray
) -> ScalarField:
    interp = RegularGridInterpolator(
        (grid.u1, grid.u2), values, method="linear", bounds_error=False, fill_value=None
    )

    def fn(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        x1, x2 = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float))
        ts = region.inverse(np.stack([x1, x2], axis=-1), strict=False)
        return interp(ts.reshape(-1, 2)).reshape(x1.shape)

    return fn


@dataclass
class ScalarProblem:
    """⟨D²v, Q*Π⟩ = f0·v + X(v) + f on a region, with its boundary data.

    Attributes:
        surface: Graph surface
        region: Noncharacteristic region
        data: Boundary data (q0, q1, p1, p2)
        grid: Region grid on which v is reported
        rhs: f as a function of the surface parameters
        factor: Multiplier in f0 = −factor·κ·tr_gΠ (1 or 2)
        P: P(U) on ``grid`` when the problem comes from a strain
        K: Q[Λ(U) − D tr_gU] on ``grid`` when the problem comes from a strain
    """

    surface: SurfacePatch
    region: NoncharRegion
    data: BoundaryData
    grid: TensorFieldGrid
    rhs: ScalarField
    factor: int = 1
    P: Optional[np.ndarray] = None
    K: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        validate_choice(self.factor, "factor", (1, 2))

    def f(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return np.asarray(self.rhs(x1, x2), dtype=float)

    def f0(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        forms = self.surface.forms(x1, x2)
        return -self.factor * forms.kappa * forms.mean_trace

    def X(self, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return _x_field(self.surface.forms(x1, x2))


def assemble_scalar_problem(
    surface: SurfacePatch,
    region: NoncharRegion,
    U: TensorFieldGrid,
    data: Optional[BoundaryData] = None,
    factor: int = 1,
) -> ScalarProblem:
    """
    Scalar problem of a sampled strain: f = P(U), f0 = −factor·κ·tr_gΠ,
    X = (∇ν)⁻¹Dκ.

    ``U`` must be sampled on a grid of ``region`` (see
    :meth:`NoncharRegion.sample`); P(U) is interpolated bilinearly in
    (t, s) between its nodes.
    """
    if U.points is None:
        raise ConfigError("strain grid must be sampled on the region (use NoncharRegion.sample)")
    P, K = strain_coefficients(surface, U)
    logger.info(
        "assembled scalar problem on %s: sup|P(U)| = %.3e", region.name, float(np.max(np.abs(P)))
    )
    return ScalarProblem(
        surface,
        region,
        data if data is not None else BoundaryData.zero(),
        U.with_values(P, "scalar"),
        _grid_interpolant(region, U, P),
        factor,
        P,
        K,
    )


def manufactured_rhs(
    surface: SurfacePatch, v: Any, factor: int = 1
) -> tuple[ScalarField, ScalarField, Callable[[np.ndarray, np.ndarray], np.ndarray]]:
    """
    Right-hand side f = ⟨D²v, Q*Π⟩ − f0·v − X(v) of a known v.

    Returns:
        (f, v, dv) as callables of the surface parameters; dv returns the
        covector (∂1v, ∂2v)
    """
    e = v if isinstance(v, Expression) else parse_expression(v, ("x1", "x2"))
    d1, d2 = e.diff("x1"), e.diff("x2")
    hess = [[e.diff("x1", 2), d1.diff("x2")], [d2.diff("x1"), e.diff("x2", 2)]]

    def grad(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return np.stack([d1(x1, x2), d2(x1, x2)], axis=-1)

    def rhs(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        forms = surface.forms(x1, x2)
        dv = grad(x1, x2)
        H = np.stack([np.stack([h(x1, x2) for h in row], axis=-1) for row in hess], axis=-2)
        D2 = H - np.einsum("...cab,...c->...ab", forms.christoffel, dv)
        f0 = -factor * forms.kappa * forms.mean_trace
        Xv = np.einsum("...a,...a->...", _x_field(forms), dv)
        return forms.pair_q_star_pi(D2) - f0 * e(x1, x2) - Xv

    return rhs, e, grad


# Boundary operators and data
# ============================================================================


def _boundary_T(
    forms: FundamentalForms, J: np.ndarray, side: str, X: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """(T1X, T2X) at edge points with region Jacobian J."""
    tau = J[..., :, 0] if side in ("bottom", "top") else J[..., :, 1]
    c = np.einsum("...ab,...b->...a", forms.Pi, tau)
    Y = np.stack([-c[..., 1], c[..., 0]], axis=-1)
    coeff = np.linalg.solve(J, Y[..., None])[..., 0]
    comp, outward = _EDGE_NORMALS[side]
    k = coeff[..., comp]
    if np.any(np.abs(k) <= NONCHAR_TOL * np.linalg.norm(Y, axis=-1)):
        raise NoncharacteristicError(
            f"{side} edge is characteristic; its noncharacteristic normal is tangent", side=side
        )
    mu = Y * (np.sign(k) * outward)[..., None]
    pxx = forms.second(X, X)
    if np.any(np.abs(pxx) < NONCHAR_TOL):
        raise NoncharacteristicError("boundary operator applied to a characteristic direction")
    chi = np.sign(mu[..., 0] * X[..., 1] - mu[..., 1] * X[..., 0])
    rho = np.sign(pxx) / np.sqrt(-forms.kappa)
    QX = np.einsum("...ab,...b->...a", forms.Q_shape, X)
    half = 0.5 * (chi * rho)[..., None] * QX
    return 0.5 * X - half, 0.5 * X + half


def boundary_operator_T(
    surface: SurfacePatch, region: NoncharRegion, side: str, i: int, X: Any, param: Any
) -> np.ndarray:
    """
    Boundary operator T_iX = ½[X + (−1)^i χ(μ, X) ϱ(X) Q∇νX] on an edge.

    μ is the noncharacteristic normal (Π(μ, τ) = 0 for the edge tangent τ)
    pointing out of the region, χ = sign det(μ, X) and ϱ(X) =
    sign Π(X, X)/√(−κ). T1X and T2X are the two null components of X.

    Args:
        surface: Graph surface
        region: Region whose edge carries the point
        side: ``bottom``, ``top``, ``left`` or ``right``
        i: 1 or 2
        X: Tangent vector(s) (..., 2) in the chart basis
        param: Edge parameter (t on bottom/top, s on left/right)

    Raises:
        NoncharacteristicError: If Π(X, X) = 0 or the edge is characteristic
    """
    validate_choice(i, "i", (1, 2))
    t, s = region.side_params(side, param)
    x = region.point(t, s)
    forms = surface.forms(x[..., 0], x[..., 1])
    X = np.broadcast_to(np.asarray(X, dtype=float), x.shape)
    return _boundary_T(forms, region.jac(t, s), side, X)[i - 1]


def _edge(surface: SurfacePatch, region: NoncharRegion, side: str, param: Any) -> tuple[
    np.ndarray, np.ndarray, FundamentalForms
]:
    t, s = region.side_params(side, param)
    x = region.point(t, s)
    return x, region.jac(t, s), surface.forms(x[..., 0], x[..., 1])


def _unit(forms: FundamentalForms, a: np.ndarray) -> np.ndarray:
    return a / np.sqrt(forms.inner(a, a))[..., None]


def _bottom_direction(forms: FundamentalForms, J: np.ndarray) -> np.ndarray:
    """(T2 − T1)α̂_t on the bottom edge."""
    T1, T2 = _boundary_T(forms, J, "bottom", _unit(forms, J[..., :, 0]))
    return T2 - T1


def _lateral_direction(forms: FundamentalForms, J: np.ndarray, side: str) -> np.ndarray:
    """T2α_s on a lateral edge."""
    return _boundary_T(forms, J, side, J[..., :, 1])[1]


def _zero_fn(t: np.ndarray) -> np.ndarray:
    return np.zeros_like(np.asarray(t, dtype=float))


def _sampled(fn: ArrayFn, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.broadcast_to(np.asarray(fn(x), dtype=float), x.shape)


@dataclass
class BoundaryData:
    """Characteristic boundary data of the scalar problem.

    On the bottom edge: q0(t) = v(α(t, 0)) and
    q1(t) = (1/√2)⟨Dv, (T2 − T1)α̂_t⟩ with α̂_t the unit tangent. On the
    lateral edges: p1(s) = ⟨Dv, T2α_s⟩ at t = 0 and p2(s) at t = a.
    ``dq0`` is the derivative of q0 (differenced when omitted).
    """

    q0: ArrayFn
    q1: ArrayFn
    p1: ArrayFn
    p2: ArrayFn
    dq0: Optional[ArrayFn] = None

    @classmethod
    def zero(cls) -> BoundaryData:
        return cls(_zero_fn, _zero_fn, _zero_fn, _zero_fn, _zero_fn)

    @classmethod
    def from_expressions(cls, q0: Any, q1: Any, p1: Any, p2: Any) -> BoundaryData:
        """q0, q1 as expressions in t; p1, p2 as expressions in s."""
        e_q0, e_q1 = parse_vector([q0, q1], ("t",))
        e_p1, e_p2 = parse_vector([p1, p2], ("s",))
        return cls(e_q0, e_q1, e_p1, e_p2, e_q0.diff("t"))

    @classmethod
    def from_solution(
        cls,
        surface: SurfacePatch,
        region: NoncharRegion,
        value: ScalarField,
        gradient: Callable[[np.ndarray, np.ndarray], np.ndarray],
    ) -> BoundaryData:
        """Data of a known smooth v; ``gradient`` returns (∂1v, ∂2v)."""

        def grad_on(
            side: str, param: np.ndarray
        ) -> tuple[np.ndarray, np.ndarray, FundamentalForms]:
            x, J, forms = _edge(surface, region, side, param)
            return np.asarray(gradient(x[..., 0], x[..., 1]), dtype=float), J, forms

        def q0(t: np.ndarray) -> np.ndarray:
            x = region.point(t, np.zeros_like(t))
            return np.asarray(value(x[..., 0], x[..., 1]), dtype=float)

        def dq0(t: np.ndarray) -> np.ndarray:
            g, J, _ = grad_on("bottom", t)
            return np.sum(g * J[..., :, 0], axis=-1)

        def q1(t: np.ndarray) -> np.ndarray:
            g, J, forms = grad_on("bottom", t)
            return np.sum(g * _bottom_direction(forms, J), axis=-1) / math.sqrt(2)

        def lateral(side: str) -> ArrayFn:
            def p(s: np.ndarray) -> np.ndarray:
                g, J, forms = grad_on(side, s)
                return np.sum(g * _lateral_direction(forms, J, side), axis=-1)

            return p

        return cls(q0, q1, lateral("left"), lateral("right"), dq0)

    def minus(self, other: BoundaryData) -> BoundaryData:
        """Data of the difference of two solutions."""

        def diff(a: ArrayFn, b: ArrayFn) -> ArrayFn:
            def fn(x: np.ndarray) -> np.ndarray:
                return _sampled(a, x) - _sampled(b, x)

            return fn

        dq0 = None
        if self.dq0 is not None and other.dq0 is not None:
            dq0 = diff(self.dq0, other.dq0)
        return BoundaryData(
            diff(self.q0, other.q0),
            diff(self.q1, other.q1),
            diff(self.p1, other.p1),
            diff(self.p2, other.p2),
            dq0,
        )

    def q0_derivative(self, region: NoncharRegion, t: Any) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.dq0 is not None:
            return np.asarray(self.dq0(t), dtype=float)
        return tangential_derivative(self.q0, t, region.a)

    def bottom_gradient(self, surface: SurfacePatch, region: NoncharRegion, t: Any) -> np.ndarray:
        """(∂1v, ∂2v) on the bottom edge recovered from q0' and q1."""
        t = np.asarray(t, dtype=float)
        _, J, forms = _edge(surface, region, "bottom", t)
        rows = np.stack([J[..., :, 0], _bottom_direction(forms, J)], axis=-2)
        rhs = np.stack(
            [self.q0_derivative(region, t), math.sqrt(2) * np.asarray(self.q1(t), dtype=float)],
            axis=-1,
        )
        return np.linalg.solve(rows, rhs[..., None])[..., 0]

    def check_compatibility(
        self, surface: SurfacePatch, region: NoncharRegion
    ) -> CompatibilityReport:
        """Order-1 compatibility at α(0, 0) and α(a, 0)."""
        checks = []
        corners = (("alpha(0,0)", 0.0, "left", self.p1), ("alpha(a,0)", region.a, "right", self.p2))
        for name, t0, side, p in corners:
            dv = self.bottom_gradient(surface, region, np.array([t0]))[0]
            x, J, forms = _edge(surface, region, side, np.array([0.0]))
            d = _lateral_direction(forms, J, side)[0]
            predicted = float(dv @ d)
            given = float(np.asarray(p(np.array([0.0])), dtype=float)[0])
            scale = max(1.0, abs(given), float(np.linalg.norm(dv) * np.linalg.norm(d)))
            residual = predicted - given
            point = (float(x[0, 0]), float(x[0, 1]))
            checks.append(JunctionCheck(name, point, residual, abs(residual) <= CORNER_TOL * scale))
        return CompatibilityReport(checks)

    def require_compatible(
        self, surface: SurfacePatch, region: NoncharRegion
    ) -> CompatibilityReport:
        """
        Raises:
            CompatibilityError: If a corner fails the order-1 condition
        """
        report = self.check_compatibility(surface, region)
        if not report.holds:
            raise CompatibilityError(
                "boundary data violate order-1 corner compatibility "
                f"(residual {report.max_residual:.3e})",
                **report.to_dict(),
            )
        return report


def rotation_part(
    surface: SurfacePatch, x: np.ndarray, axis: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """v = ⟨a, ν⟩ of the rigid motion a×r + c and its covector Dv at points x."""
    x = np.asarray(x, dtype=float)
    forms = surface.forms(x[..., 0], x[..., 1])
    dnu = np.einsum("...ic,...ca->...ia", forms.tangents, forms.shape_op)
    return forms.normal @ axis, np.einsum("...ia,i->...a", dnu, axis)


def rigid_motion_data(surface: SurfacePatch, region: NoncharRegion, a: Any) -> BoundaryData:
    """Data of the infinitesimal rigid motion y = a×r + c, for which v = ⟨a, ν⟩."""
    axis = validate_point(a, "a", dim=3)

    def value(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return rotation_part(surface, np.stack(np.broadcast_arrays(x1, x2), axis=-1), axis)[0]

    def gradient(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return rotation_part(surface, np.stack(np.broadcast_arrays(x1, x2), axis=-1), axis)[1]

    return BoundaryData.from_solution(surface, region, value, gradient)


def fit_rigid_axis(
    surface: SurfacePatch, region: NoncharRegion, data: BoundaryData, samples: int = _RIGID_SAMPLES
) -> np.ndarray:
    """
    Axis a of the rigid motion whose data are closest to ``data``.

    Least squares over samples of q0, q1 on the bottom edge and p1, p2 on
    the lateral edges. The fit is linear in the data and exact when they
    are the data of a rigid motion.
    """
    t = np.linspace(0.0, region.a, samples)
    s = np.linspace(0.0, region.b, samples)

    def stacked(d: BoundaryData) -> np.ndarray:
        return np.concatenate(
            [_sampled(d.q0, t), _sampled(d.q1, t), _sampled(d.p1, s), _sampled(d.p2, s)]
        )

    basis = [stacked(rigid_motion_data(surface, region, e)) for e in np.eye(3)]
    axis, *_ = np.linalg.lstsq(np.stack(basis, axis=-1), stacked(data), rcond=None)
    return axis


# Strip solves
# ============================================================================


@dataclass
class SolverOptions:
    """Discretization settings of the strain solver.

    Attributes:
        grid: Nodes per axis of the (t, s) grid of generated fields
        strips: Number of s-strips
        lattice: Goursat lattice nodes along the lower edge of a strip
            (defaults to the t-nodes of the region grid)
        chart_method: ``auto``, ``closed`` or ``ode``
        chart_steps: RK4 steps per radius for traced charts
        factor: Multiplier in f0 = −factor·κ·tr_gΠ
        threads: Worker threads for Goursat waves
    """

    grid: int = 33
    strips: int = 1
    lattice: Optional[int] = None
    chart_method: str = "auto"
    chart_steps: int = 256
    factor: int = 1
    threads: Optional[int] = None

    def __post_init__(self) -> None:
        self.grid = validate_int(self.grid, "grid", 5)
        self.strips = validate_int(self.strips, "strips", 1)
        if self.lattice is not None:
            self.lattice = validate_int(self.lattice, "lattice", 5)
        validate_choice(self.chart_method, "chart_method", CHART_METHODS)
        self.chart_steps = validate_int(self.chart_steps, "chart_steps", 4)
        validate_choice(self.factor, "factor", (1, 2))


@dataclass
class StripSolution:
    """Goursat solution of one s-strip in its normalized chart."""

    s0: float
    s1: float
    chart: AsymptoticChart
    solution: SolutionGrid

    def evaluate(self, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """v and (∂1v, ∂2v) at surface points of the strip.

        Raises:
            GeometryError: If a point lies outside the solved lattice
        """
        z = self.chart.forward(x)
        region = self.solution.region
        assert region is not None
        lo, hi = region.x1_range
        h = self.solution.spacing
        inside = region.contains(np.clip(z[..., 0], lo, hi), z[..., 1], tol=h)
        inside &= (z[..., 0] >= lo - h) & (z[..., 0] <= hi + h)
        if not np.all(inside):
            raise GeometryError(
                f"strip s in [{self.s0:g}, {self.s1:g}] is not covered by its characteristic "
                "region; increase solver.strips"
            )
        v = self.solution.interpolate(z, "w")
        p, q = self.solution.interpolate(z, "p"), self.solution.interpolate(z, "q")
        dz = np.stack([p, q], axis=-1)
        dv = np.einsum("...k,...ka->...a", dz, self.chart.jacobian_inverse(z))
        return v, dv

    def to_dict(self) -> dict[str, Any]:
        return {
            "s0": self.s0,
            "s1": self.s1,
            "chart": self.chart.to_dict(),
            "solution": self.solution.to_dict(),
        }


@dataclass
class ScalarSolution:
    """Solution v of the scalar problem with its derivative on the region grid.

    The strips carry v − ⟨a, ν⟩ where a is ``rigid_axis``; the rotation
    part of a rigid motion is added back in closed form.
    """

    problem: ScalarProblem
    strips: list[StripSolution]
    v: np.ndarray
    dv: np.ndarray
    diagnostics: dict[str, Any] = field(default_factory=dict)
    rigid_axis: Optional[np.ndarray] = None

    @property
    def grid(self) -> TensorFieldGrid:
        return self.problem.grid.with_values(self.v, "scalar")

    def evaluate(self, x: Any) -> tuple[np.ndarray, np.ndarray]:
        """v and its covector at surface points of the region."""
        x = np.asarray(x, dtype=float)
        ts = self.problem.region.inverse(x)
        edges = np.array([st.s0 for st in self.strips] + [self.strips[-1].s1])
        k = np.clip(np.searchsorted(edges, ts[..., 1], side="left") - 1, 0, len(self.strips) - 1)
        v = np.empty(x.shape[:-1])
        dv = np.empty(x.shape)
        for i, strip in enumerate(self.strips):
            sel = k == i
            if np.any(sel):
                v[sel], dv[sel] = strip.evaluate(x[sel])
        if self.rigid_axis is not None:
            rv, rdv = rotation_part(self.problem.surface, x, self.rigid_axis)
            v, dv = v + rv, dv + rdv
        return v, dv

    def on_grid(self, grid: TensorFieldGrid) -> tuple[np.ndarray, np.ndarray]:
        if grid is self.problem.grid or (
            grid.shape == self.problem.grid.shape
            and np.array_equal(grid.u1, self.problem.grid.u1)
            and np.array_equal(grid.u2, self.problem.grid.u2)
        ):
            return self.v, self.dv
        return self.evaluate(grid.surface_points())

    def to_dict(self) -> dict[str, Any]:
        return {
            "diagnostics": self.diagnostics,
            "rigid_axis": None if self.rigid_axis is None else self.rigid_axis.tolist(),
            "strips": [s.to_dict() for s in self.strips],
        }


def _strip_chart(
    problem: ScalarProblem,
    s0: float,
    s1: float,
    gamma: PlaneCurve,
    beta: PlaneCurve,
    options: SolverOptions,
) -> AsymptoticChart:
    surface, region = problem.surface, problem.region
    center = region.point(0.5 * region.a, 0.5 * (s0 + s1))
    pts = region.boundary_samples(_EDGE_SAMPLES, s0, s1)
    extent = float(np.max(np.abs(pts - center)))
    closed = options.chart_method != "ode" and has_closed_form(surface)
    if closed:
        d = surface.domain
        x1, x2 = center[0], center[1]
        room = min(x1 - d.x1_min, d.x1_max - x1, x2 - d.x2_min, d.x2_max - x2)
        if room <= 0:
            raise DomainError(
                f"strip center {tuple(center)} outside the domain", point=center.tolist()
            )
        radii = [min(_RADIUS_PAD * extent, 0.999 * room)]
    else:
        radii = [pad * extent for pad in _NET_PADS]

    base: Optional[AsymptoticChart] = None
    for radius in radii:
        try:
            base = build_chart(
                surface, center, radius, method=options.chart_method, steps=options.chart_steps
            )
            break
        except RadiusTooLargeError:
            if radius == radii[-1]:
                raise
            logger.debug("chart radius %.3g too large at %s, retrying", radius, tuple(center))
    assert base is not None
    image = curve_image(base, gamma)
    if image.noncharacteristic and image.signs[0] * image.signs[1] > 0:
        base = base.reflected()
    chart = normalize_chart_along_curve(base, gamma, beta)
    try:
        z = chart.forward(pts)
    except (ChartError, DomainError) as e:
        raise RadiusTooLargeError(
            f"chart at {tuple(center)} does not cover the strip s in [{s0:g}, {s1:g}]; "
            "increase solver.strips",
            s0=s0,
            s1=s1,
        ) from e
    if not np.all(chart.covers(z)):
        raise RadiusTooLargeError(
            f"chart at {tuple(center)} does not cover the strip s in [{s0:g}, {s1:g}]; "
            "increase solver.strips",
            s0=s0,
            s1=s1,
        )
    return chart


def _gamma_data(
    problem: ScalarProblem, chart: AsymptoticChart, s0: float, prev: Optional[StripSolution]
) -> CurveData:
    surface, region, data = problem.surface, problem.region, problem.data

    def trace(t: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        if prev is None:
            v = np.asarray(data.q0(t), dtype=float)
            dv = data.bottom_gradient(surface, region, t)
        else:
            v, dv = prev.evaluate(region.point(t, np.full_like(t, s0)))
        z = np.stack([t, -t], axis=-1)
        dz = np.einsum("...a,...ak->...k", dv, chart.jacobian(z))
        return v, dz

    return CurveData(
        value=lambda t: trace(t)[0],
        transverse=lambda t: -np.sum(trace(t)[1], axis=-1),
        tangential=lambda t: trace(t)[1][..., 0] - trace(t)[1][..., 1],
    )


def _lateral_trace(
    problem: ScalarProblem, chart: AsymptoticChart, side: str, s0: float, component: int
) -> ArrayFn:
    """w_z2 on the left edge (component 1) or w_z1 on the right edge (component 0)."""
    surface, region = problem.surface, problem.region
    given = problem.data.p1 if side == "left" else problem.data.p2

    def trace(r: np.ndarray) -> np.ndarray:
        s = s0 + np.asarray(r, dtype=float)
        x, J, forms = _edge(surface, region, side, s)
        d = _lateral_direction(forms, J, side)
        comps = np.einsum("...ka,...a->...k", chart.jacobian_inverse(chart.forward(x)), d)
        c, other = comps[..., component], comps[..., 1 - component]
        if np.any(np.abs(other) > _NULL_TOL * np.abs(c)):
            raise ChartError(
                f"lateral direction on the {side} edge is not along chart direction "
                f"{component + 1}",
                side=side,
            )
        return np.asarray(given(s), dtype=float) / c

    return trace


def _strip_clip(
    chart: AsymptoticChart, region: NoncharRegion, s_max: float
) -> Callable[[np.ndarray, np.ndarray], np.ndarray]:
    def clip(z1: np.ndarray, z2: np.ndarray) -> np.ndarray:
        z = np.stack([z1, z2], axis=-1)
        keep = chart.covers(z)
        idx = np.nonzero(keep)
        if idx[0].size:
            ts = region.inverse(chart.inverse(z[idx]), strict=False)
            with np.errstate(invalid="ignore"):
                keep[idx] = np.all(np.isfinite(ts), axis=-1) & (ts[..., 1] <= s_max)
        return keep

    return clip


def _solve_strip(
    problem: ScalarProblem,
    s0: float,
    s1: float,
    prev: Optional[StripSolution],
    options: SolverOptions,
) -> StripSolution:
    region = problem.region
    a = region.a
    gamma_x = region.t_curve(s0)
    beta_x = region.s_curve(0.0, s0, s1)
    chart = _strip_chart(problem, s0, s1, gamma_x, beta_x, options)

    r = np.linspace(0.0, s1 - s0, _CURVE_SAMPLES)
    bz = chart.forward(beta_x.point(r))
    bz[0] = (0.0, 0.0)
    bhz = chart.forward(region.s_curve(a, s0, s1).point(r))
    bhz[0] = (a, -a)
    zregion = RegionDescriptor.phi(
        PlaneCurve.from_samples(r, bz, "beta"),
        PlaneCurve.line((0.0, 0.0), (1.0, -1.0), a, name="gamma"),
        PlaneCurve.from_samples(r, bhz, "beta_hat"),
    )

    form = normal_form(problem.surface, chart, f0=problem.f0, X=problem.X, f=problem.f)
    f_hat, f0_hat, X_hat = form.fields()
    gp = GoursatProblem(
        zregion,
        f=f_hat,
        f0=f0_hat,
        X=X_hat,
        gamma_data=_gamma_data(problem, chart, s0, prev),
        p=_lateral_trace(problem, chart, "left", s0, 1),
        p_hat=_lateral_trace(problem, chart, "right", s0, 0),
        clip=_strip_clip(chart, region, s1 + _CLIP_MARGIN * (s1 - s0)),
    )
    # z1 = t along γ, so region grid lines through γ land on lattice nodes
    nodes = options.lattice or problem.grid.shape[0]
    sol = solve_goursat(gp, a / (nodes - 1), threads=options.threads)
    logger.debug(
        "strip [%g, %g]: %s chart, lattice %dx%d, %d Picard iterations",
        s0, s1, chart.method, sol.x1.size, sol.x2.size, sol.diagnostics.iterations,
    )
    return StripSolution(s0, s1, chart, sol)


def _strip_edges(grid: TensorFieldGrid, strips: int) -> np.ndarray:
    """Strip boundaries on rows of the region grid."""
    s = grid.u2
    if strips > s.size - 1:
        raise ConfigError(f"strips = {strips} exceeds the {s.size - 1} grid intervals in s")
    rows = np.round(np.linspace(0, s.size - 1, strips + 1)).astype(int)
    return s[rows]


def _solve_problem(problem: ScalarProblem, options: SolverOptions) -> ScalarSolution:
    surface, region = problem.surface, problem.region
    check_noncharacteristic(surface, region).require()
    compat = problem.data.require_compatible(surface, region)

    # ⟨a, ν⟩ solves the homogeneous equation only for factor 1
    axis: Optional[np.ndarray] = None
    reduced = problem
    if problem.factor == 1:
        axis = fit_rigid_axis(surface, region, problem.data)
        if np.any(axis != 0.0):
            rigid = rigid_motion_data(surface, region, axis)
            reduced = replace(problem, data=problem.data.minus(rigid))
        else:
            axis = None

    edges = _strip_edges(problem.grid, options.strips)
    strips: list[StripSolution] = []
    prev: Optional[StripSolution] = None
    for s0, s1 in zip(edges[:-1], edges[1:]):
        prev = _solve_strip(reduced, float(s0), float(s1), prev, options)
        strips.append(prev)
    solution = ScalarSolution(problem, strips, np.empty(0), np.empty(0), rigid_axis=axis)
    solution.v, solution.dv = solution.evaluate(problem.grid.surface_points())
    diags = [s.solution.diagnostics for s in strips]
    solution.diagnostics = {
        "strips": len(strips),
        "charts": sorted({s.chart.root_method for s in strips}),
        "rigid_axis": None if axis is None else axis.tolist(),
        "iterations": sum(d.iterations for d in diags),
        "max_ratio": max(d.max_ratio for d in diags),
        "fd_residual": max(d.fd_residual for d in diags),
        "seam_residual": max(d.seam_residual for d in diags),
        "compatibility": compat.to_dict(),
    }
    logger.info(
        "solved scalar problem on %s in %d strip(s), %d Picard iterations",
        region.name, len(strips), solution.diagnostics["iterations"],
    )
    return solution


def solve_scalar(
    surface: SurfacePatch,
    region: NoncharRegion,
    rhs: ScalarField,
    data: BoundaryData,
    options: Optional[SolverOptions] = None,
) -> ScalarSolution:
    """
    Solve ⟨D²v, Q*Π⟩ = f0·v + X(v) + f for an arbitrary right-hand side.

    Args:
        surface: Hyperbolic graph surface
        region: Noncharacteristic region
        rhs: f as a function of the surface parameters
        data: Boundary data (q0, q1, p1, p2)
        options: Solver settings

    Raises:
        NoncharacteristicError: If the region fails the noncharacteristic check
        CompatibilityError: If the data fail order-1 corner compatibility
        ChartError: If a strip cannot be covered by an asymptotic chart
        SolverError: If a Goursat sweep fails
    """
    options = options or SolverOptions()
    grid = region.sample(lambda x1, x2: np.zeros(np.shape(x1)), options.grid)
    problem = ScalarProblem(surface, region, data, grid, rhs, options.factor)
    return _solve_problem(problem, options)


def solve_strain(
    surface: SurfacePatch,
    region: NoncharRegion,
    U: TensorFieldGrid,
    data: Optional[BoundaryData] = None,
    options: Optional[SolverOptions] = None,
) -> ScalarSolution:
    """
    Solve the scalar problem of sym∇y = U with right-hand side P(U).

    v is reported on the nodes of U's grid; diagnostics carry Picard
    iterations, the finite-difference residual of the normal equation and
    the seam residual of every strip.
    """
    options = options or SolverOptions()
    problem = assemble_scalar_problem(surface, region, U, data, options.factor)
    return _solve_problem(problem, options)


# Displacements
# ============================================================================


@dataclass
class DisplacementField:
    """Displacement y on a region grid with its decomposition.

    Attributes:
        grid: Region grid (u1 = t, u2 = s)
        y: Ambient displacement, (n1, n2, 3)
        W: Tangential part, vector components (n1, n2, 2)
        w_normal: Normal part ⟨y, ν⟩
        v: Rotation part p(y)
        u: Normal derivative vector, ⟨∇_α y, ν⟩ = ⟨u, α⟩
        gradient: ∂_a y as ambient vectors, (n1, n2, 3, 2)
        curl_defect: sup of the integrability residual of the gradient
        decomposition_error: sup |W + w_normal·ν − y|
    """

    grid: TensorFieldGrid
    y: np.ndarray
    W: np.ndarray
    w_normal: np.ndarray
    v: np.ndarray
    u: np.ndarray
    gradient: np.ndarray
    curl_defect: float = 0.0
    decomposition_error: float = 0.0
    diagnostics: dict[str, Any] = field(default_factory=dict)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape

    def scaled(self, factor: float) -> DisplacementField:
        return DisplacementField(
            self.grid,
            factor * self.y,
            factor * self.W,
            factor * self.w_normal,
            factor * self.v,
            factor * self.u,
            factor * self.gradient,
            abs(factor) * self.curl_defect,
            abs(factor) * self.decomposition_error,
            dict(self.diagnostics),
        )

    def to_rows(self) -> list[tuple[float, ...]]:
        """Rows in :data:`DISPLACEMENT_HEADER` order."""
        p = self.grid.surface_points()
        rows = []
        for i, t in enumerate(self.grid.u1):
            for j, s in enumerate(self.grid.u2):
                rows.append(
                    (
                        float(t), float(s), float(p[i, j, 0]), float(p[i, j, 1]),
                        *(float(c) for c in self.y[i, j]),
                        *(float(c) for c in self.W[i, j]),
                        float(self.w_normal[i, j]), float(self.v[i, j]),
                        *(float(c) for c in self.u[i, j]),
                    )
                )
        return rows

    def to_dict(self) -> dict[str, Any]:
        return {
            "shape": list(self.shape),
            "sup_y": float(np.max(np.abs(self.y))),
            "sup_v": float(np.max(np.abs(self.v))),
            "curl_defect": self.curl_defect,
            "decomposition_error": self.decomposition_error,
            "diagnostics": self.diagnostics,
        }


def _decompose(forms: FundamentalForms, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    w = np.einsum("...i,...i->...", y, forms.normal)
    W = forms.raise_(np.einsum("...ia,...i->...a", forms.tangents, y))
    back = forms.ambient(W) + w[..., None] * forms.normal
    return W, w, float(np.max(np.abs(back - y), initial=0.0))


def _gradient_field(
    forms: FundamentalForms, U: np.ndarray, v: np.ndarray, u: np.ndarray
) -> np.ndarray:
    """∂_a y = ι_aU − v·Q∂_a + ⟨u, ∂_a⟩ν as ambient vectors, (..., 3, 2)."""
    tangential = np.einsum("...ij,...ja->...ia", forms.G_inv, U) - v[..., None, None] * forms.Q
    amb = np.einsum("...ic,...ca->...ia", forms.tangents, tangential)
    ul = forms.lower(u)
    return amb + forms.normal[..., :, None] * ul[..., None, :]


def _ambient_map(forms: FundamentalForms, grad: np.ndarray, u: np.ndarray) -> np.ndarray:
    """B with B∂_a r = ∂_a y and Bν = −u, (..., 3, 3); B = a×· for a rigid motion."""
    dual = np.einsum("...ic,...ca->...ia", forms.tangents, forms.G_inv)
    B = np.einsum("...ia,...ja->...ij", grad, dual)
    return B - np.einsum("...i,...j->...ij", forms.ambient(u), forms.normal)


def _path_increments(B: np.ndarray, r: np.ndarray, axis: int) -> np.ndarray:
    """½(B_k + B_{k+1})(r_{k+1} − r_k) along one grid axis, with a leading zero."""
    B = np.moveaxis(B, axis, 0)
    r = np.moveaxis(r, axis, 0)
    steps = 0.5 * np.einsum("k...ij,k...j->k...i", B[1:] + B[:-1], r[1:] - r[:-1])
    out = np.concatenate([np.zeros_like(steps[:1]), np.cumsum(steps, axis=0)], axis=0)
    return np.moveaxis(out, 0, axis)


def reconstruct_displacement(
    surface: SurfacePatch,
    region: NoncharRegion,
    U: TensorFieldGrid,
    v: Union[ScalarSolution, tuple[np.ndarray, np.ndarray]],
) -> DisplacementField:
    """
    Recover y from U and the solved v.

    u = Q(∇ν)⁻¹(K − Dv). With B the ambient linear map carrying ∂_a r to
    ∂_a y, y is integrated by y_{k+1} = y_k + ½(B_k + B_{k+1})(r_{k+1} − r_k)
    along s = 0 and then along every s-line, anchored at y(α(0, 0)) = 0.
    The rule is trapezoidal in general and exact for rigid motions.

    Args:
        surface: Graph surface
        region: Region of U's grid
        U: Strain on a region grid
        v: Scalar solution, or (v, dv) node arrays on U's grid

    Warns:
        IntegrabilityWarning: If the curl defect exceeds 100·Δ²·scale
    """
    if isinstance(v, ScalarSolution):
        vals, dv = v.on_grid(U)
        K = v.problem.K if v.problem.grid is U and v.problem.K is not None else None
    else:
        vals, dv = (np.asarray(a, dtype=float) for a in v)
        K = None
    if K is None:
        K = strain_coefficients(surface, U)[1]
    forms = U.forms(surface)
    Sinv = np.linalg.inv(forms.shape_op)
    u = np.einsum("...ij,...jk,...k->...i", forms.Q, Sinv, K - forms.raise_(dv))
    grad = _gradient_field(forms, U.values, vals, u)

    J = U.jacobian if U.jacobian is not None else np.broadcast_to(np.eye(2), U.shape + (2, 2))
    Bt = np.einsum("...ia,...a->...i", grad, J[..., :, 0])
    Bs = np.einsum("...ia,...a->...i", grad, J[..., :, 1])
    t, s = U.u1, U.u2
    p = U.surface_points()
    r = surface.position(p[..., 0], p[..., 1])
    B = _ambient_map(forms, grad, u)
    base = _path_increments(B[:, :1], r[:, :1], axis=0)
    y = base + _path_increments(B, r, axis=1)

    curl = np.gradient(Bt, s, axis=1, edge_order=2) - np.gradient(Bs, t, axis=0, edge_order=2)
    curl_defect = float(np.max(np.abs(curl)))
    h = max(U.spacing)
    scale = max(1.0, float(np.max(np.abs(grad))))
    if curl_defect > _CURL_FACTOR * h * h * scale:
        message = (
            f"gradient field is not integrable to grid accuracy (curl defect {curl_defect:.3e})"
        )
        logger.warning(message)
        warnings.warn(message, IntegrabilityWarning, stacklevel=2)

    W, w, err = _decompose(forms, y)
    logger.debug("reconstructed displacement on %s: curl defect %.3e", region.name, curl_defect)
    return DisplacementField(U, y, W, w, np.asarray(vals), u, grad, curl_defect, err)


def _interior(a: np.ndarray) -> np.ndarray:
    return a[1:-1, 1:-1]


def _area_weights(grid: TensorFieldGrid, forms: FundamentalForms) -> np.ndarray:
    if grid.jacobian is None:
        return forms.sqrt_det_G
    return forms.sqrt_det_G * np.abs(np.linalg.det(grid.jacobian))


def integrate(grid: TensorFieldGrid, values: np.ndarray, weights: np.ndarray) -> float:
    """∫ values dg over the region grid by the tensor-product trapezoidal rule."""
    inner = trapezoid(values * weights, grid.u2, axis=1)
    return float(trapezoid(inner, grid.u1, axis=0))


def _norm2_form(forms: FundamentalForms, T: np.ndarray) -> np.ndarray:
    return np.einsum("...ac,...bd,...ab,...cd->...", forms.G_inv, forms.G_inv, T, T)


def residual_sym_grad(
    surface: SurfacePatch, y: DisplacementField, U: Optional[TensorFieldGrid] = None
) -> tuple[float, float]:
    """
    (sup, L²) norms of sym∇y − U over interior nodes.

    ∂_a r and ∂_a y are differenced with the same stencil, so a sampled
    rigid motion has zero residual up to rounding; sup is componentwise in
    the chart basis, L² uses the metric norm.
    """
    grid = y.grid
    forms = grid.forms(surface)
    p = grid.surface_points()
    dr = grid.partial(surface.position(p[..., 0], p[..., 1]))
    dy = grid.partial(y.y)
    M = np.einsum("...ia,...ib->...ab", dr, dy)
    R = 0.5 * (M + np.swapaxes(M, -1, -2))
    if U is not None:
        R = R - U.values
    sup = float(np.max(np.abs(_interior(R)), initial=0.0))
    weights = _area_weights(grid, forms)
    dens = np.zeros(grid.shape)
    dens[1:-1, 1:-1] = _interior(_norm2_form(forms, R))
    return sup, math.sqrt(max(integrate(grid, dens, weights), 0.0))


def gradient_identity_defect(
    surface: SurfacePatch, y: DisplacementField, U: TensorFieldGrid
) -> float:
    """sup over interior nodes of | |∇y|² − (|U|² + 2v² + |u|²) | with ∇y differenced."""
    forms = y.grid.forms(surface)
    dy = y.grid.partial(y.y)
    grad2 = np.einsum("...ab,...ia,...ib->...", forms.G_inv, dy, dy)
    rhs = _norm2_form(forms, U.values) + 2.0 * y.v**2 + forms.inner(y.u, y.u)
    return float(np.max(np.abs(_interior(grad2 - rhs)), initial=0.0))


def normal_derivative_defect(surface: SurfacePatch, y: DisplacementField) -> float:
    """sup over interior nodes of |Dw − (ι_WΠ + u)| with Dw differenced."""
    forms = y.grid.forms(surface)
    dw = y.grid.partial(y.w_normal)
    expected = np.einsum("...ab,...a->...b", forms.Pi, y.W) + forms.lower(y.u)
    return float(np.max(np.abs(_interior(dw - expected)), initial=0.0))


def zero_strain(region: NoncharRegion, n: int) -> TensorFieldGrid:
    """U ≡ 0 on an n×n region grid."""
    return region.sample(lambda x1, x2: np.zeros(np.shape(x1) + (2, 2)), n, "form", symmetric=True)


def solve_displacement(
    surface: SurfacePatch,
    region: NoncharRegion,
    U: TensorFieldGrid,
    data: Optional[BoundaryData] = None,
    options: Optional[SolverOptions] = None,
) -> tuple[DisplacementField, ScalarSolution]:
    """
    Solve sym∇y = U: the scalar problem, then the reconstruction.

    The returned field's diagnostics hold the solver diagnostics and the
    sup/L² residuals of sym∇y − U.
    """
    solution = solve_strain(surface, region, U, data, options)
    y = reconstruct_displacement(surface, region, U, solution)
    sup, l2 = residual_sym_grad(surface, y, U)
    y.diagnostics = {
        **solution.diagnostics,
        "sup_residual": sup,
        "l2_residual": l2,
        "curl_defect": y.curl_defect,
    }
    return y, solution


# Closed-form displacements
# ============================================================================


class SymbolicDisplacement:
    """Displacement y(x) = (y1, y2, y3) given symbolically on a graph surface.

    Strain, rotation part v = (⟨∂1y, ∂2r⟩ − ⟨∂2y, ∂1r⟩)/(2√det G) and its
    gradient are differentiated exactly. Used for manufactured strains,
    rigid motions and closed-form isometries.
    """

    def __init__(self, surface: SurfacePatch, components: Sequence[Any], name: str = "y") -> None:
        if surface.height is None:
            raise ConfigError(f"surface {surface.name!r} has no symbolic height")
        if len(components) != 3:
            raise ConfigError(f"displacement needs 3 components, got {len(components)}")
        exprs = [
            c.expr if isinstance(c, Expression)
            else parse_expression(c).expr if isinstance(c, str)
            else smp.sympify(c)
            for c in components
        ]
        self.surface = surface
        self.name = name
        self.sources = [str(e) for e in exprs]
        h = surface.height
        xs = (X1, X2)
        r = (X1, X2, h)
        dr = [[smp.diff(ri, xa) for xa in xs] for ri in r]
        dy = [[smp.diff(yi, xa) for xa in xs] for yi in exprs]
        M = [[sum(dy[i][b] * dr[i][a] for i in range(3)) for b in range(2)] for a in range(2)]
        W = smp.sqrt(1 + smp.diff(h, X1) ** 2 + smp.diff(h, X2) ** 2)
        v = (M[1][0] - M[0][1]) / (2 * W)
        self._y = [Expression(e) for e in exprs]
        self._grad = [[Expression(dy[i][a]) for a in range(2)] for i in range(3)]
        self._U = [[Expression((M[a][b] + M[b][a]) / 2) for b in range(2)] for a in range(2)]
        self._v = Expression(v)
        self._dv = [Expression(smp.diff(v, xa)) for xa in xs]

    def __repr__(self) -> str:
        return f"SymbolicDisplacement({self.name!r}, {self.sources})"

    def position(self, x1: Any, x2: Any) -> np.ndarray:
        return np.stack([e(x1, x2) for e in self._y], axis=-1)

    def gradient(self, x1: Any, x2: Any) -> np.ndarray:
        """∂_a y_i, shape (..., 3, 2)."""
        rows = [np.stack([e(x1, x2) for e in row], axis=-1) for row in self._grad]
        return np.stack(rows, axis=-2)

    def strain(self, x1: Any, x2: Any) -> np.ndarray:
        """sym∇y in the chart basis, shape (..., 2, 2)."""
        return np.stack([np.stack([e(x1, x2) for e in row], axis=-1) for row in self._U], axis=-2)

    def v(self, x1: Any, x2: Any) -> np.ndarray:
        return self._v(x1, x2)

    def dv(self, x1: Any, x2: Any) -> np.ndarray:
        return np.stack([e(x1, x2) for e in self._dv], axis=-1)

    def strain_grid(self, region: NoncharRegion, n: int) -> TensorFieldGrid:
        return region.sample(self.strain, n, "form", symmetric=True)

    def boundary_data(self, region: NoncharRegion) -> BoundaryData:
        return BoundaryData.from_solution(self.surface, region, self.v, self.dv)

    def to_field(self, grid: TensorFieldGrid) -> DisplacementField:
        """Exact samples on a grid, anchored at the first node."""
        p = grid.surface_points()
        forms = grid.forms(self.surface)
        y = self.position(p[..., 0], p[..., 1])
        y = y - y[0, 0]
        grad = self.gradient(p[..., 0], p[..., 1])
        u = forms.raise_(np.einsum("...i,...ia->...a", forms.normal, grad))
        W, w, err = _decompose(forms, y)
        return DisplacementField(grid, y, W, w, self.v(p[..., 0], p[..., 1]), u, grad, 0.0, err)
