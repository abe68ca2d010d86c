#!/usr/bin/env python3
"""
Differential geometry of graph surfaces r(x) = (x1, x2, h(x1, x2)).

Heights are supplied analytically so that Π, κ and Dκ are exact; only
sampled tensor fields (strains, scalars) are finite-differenced. All
components are stored in the chart basis ∂x1, ∂x2: vectors with upper
indices, forms with lower indices.

Example:
    >>> from hypershell.geometry import SurfacePatch, gauss_curvature_at
    >>> surface = SurfacePatch.saddle()
    >>> kappa, d_kappa = gauss_curvature_at(surface, (0.0, 0.0))
    >>> kappa
    -1.0
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Mapping, Sequence

import numpy as np
import sympy as smp

from .exceptions import ConfigError, CurvatureSignError, DomainError, MarginError
from .expressions import X1, X2, Expression, parse_expression
from .validators import SYMMETRY_TOL, validate_point

logger = logging.getLogger(__name__)

_DOMAIN_TOL = 1e-12
_VALIDATION_NODES = 33


@dataclass(frozen=True)
class Rectangle:
    """Axis-parallel rectangle [x1_min, x1_max] × [x2_min, x2_max]."""

    x1_min: float
    x1_max: float
    x2_min: float
    x2_max: float

    def __post_init__(self) -> None:
        if not (self.x1_min < self.x1_max and self.x2_min < self.x2_max):
            raise ConfigError(f"degenerate rectangle {self.as_tuple()}")

    @classmethod
    def from_sequence(cls, values: Sequence[float]) -> Rectangle:
        if len(values) != 4:
            raise ConfigError(f"domain needs 4 numbers, got {len(values)}")
        return cls(*(float(v) for v in values))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x1_min, self.x1_max, self.x2_min, self.x2_max)

    def contains(self, x1: Any, x2: Any, tol: float = _DOMAIN_TOL) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return (
            (x1 >= self.x1_min - tol)
            & (x1 <= self.x1_max + tol)
            & (x2 >= self.x2_min - tol)
            & (x2 <= self.x2_max + tol)
        )

    def sample(self, n: int = _VALIDATION_NODES) -> tuple[np.ndarray, np.ndarray]:
        g1, g2 = np.meshgrid(
            np.linspace(self.x1_min, self.x1_max, n),
            np.linspace(self.x2_min, self.x2_max, n),
            indexing="ij",
        )
        return g1, g2


@dataclass(frozen=True)
class HeightJet:
    """Partial derivatives of h through order 3, evaluated on arrays.

    ``h12``/``h21`` and ``h112``/``h211``, ``h122``/``h221`` are the same
    derivatives taken in different orders; construction checks they agree.
    """

    h: np.ndarray
    h1: np.ndarray
    h2: np.ndarray
    h11: np.ndarray
    h12: np.ndarray
    h21: np.ndarray
    h22: np.ndarray
    h111: np.ndarray
    h112: np.ndarray
    h211: np.ndarray
    h122: np.ndarray
    h221: np.ndarray
    h222: np.ndarray

    def hessian(self) -> np.ndarray:
        return _mat2(self.h11, self.h12, self.h12, self.h22)


JetFunction = Callable[[np.ndarray, np.ndarray], HeightJet]

_JET_ORDERS: dict[str, tuple[Any, ...]] = {
    "h": (),
    "h1": (X1,),
    "h2": (X2,),
    "h11": (X1, X1),
    "h12": (X1, X2),
    "h21": (X2, X1),
    "h22": (X2, X2),
    "h111": (X1, X1, X1),
    "h112": (X1, X1, X2),
    "h211": (X2, X1, X1),
    "h122": (X1, X2, X2),
    "h221": (X2, X2, X1),
    "h222": (X2, X2, X2),
}


def _mat2(a: Any, b: Any, c: Any, d: Any) -> np.ndarray:
    """Stack entries into (..., 2, 2) matrices [[a, b], [c, d]]."""
    a, b, c, d = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (a, b, c, d)))
    return np.stack([np.stack([a, b], axis=-1), np.stack([c, d], axis=-1)], axis=-2)


def _sympy_jet(expr: smp.Expr) -> JetFunction:
    derivatives: dict[str, Expression] = {}
    for name, order in _JET_ORDERS.items():
        d = expr
        for var in order:
            d = smp.diff(d, var)
        derivatives[name] = Expression(d, ("x1", "x2"))

    def jet(x1: np.ndarray, x2: np.ndarray) -> HeightJet:
        return HeightJet(**{name: fn(x1, x2) for name, fn in derivatives.items()})

    return jet


class SurfacePatch:
    """Analytic graph surface over a parameter rectangle.

    Attributes:
        name: Catalog name (``saddle``, ``hyperbolic_paraboloid``, ``separable``,
            ``monkey_saddle``, ``polynomial`` or ``graph``)
        params: Catalog parameters used to build the patch
        domain: Parameter rectangle
        height: Symbolic height, when known
    """

    orientation = 1

    def __init__(
        self,
        name: str,
        jet: JetFunction,
        domain: Rectangle,
        *,
        params: Mapping[str, Any] | None = None,
        height: smp.Expr | None = None,
        validate: bool = True,
    ) -> None:
        self.name = name
        self.domain = domain
        self.params: dict[str, Any] = dict(params or {})
        self.height = height
        self._jet = jet
        self.separable_parts: tuple[Expression, Expression] | None = None
        if validate:
            self.validate()

    def __repr__(self) -> str:
        return f"SurfacePatch({self.name!r}, domain={self.domain.as_tuple()})"

    # Catalog
    # ------------------------------------------------------------------

    @classmethod
    def from_expression(
        cls,
        source: Any,
        domain: Rectangle | Sequence[float] = (-1.0, 1.0, -1.0, 1.0),
        *,
        name: str = "graph",
        params: Mapping[str, Any] | None = None,
        validate: bool = True,
    ) -> SurfacePatch:
        """Build a surface from a height expression in ``x1, x2``.

        Args:
            source: Expression string or sympy expression
            domain: Parameter rectangle
            name: Catalog name recorded on the patch
            params: Catalog parameters recorded on the patch
            validate: Check hyperbolicity and mixed-partial symmetry

        Raises:
            ConfigError: If the expression cannot be parsed
            CurvatureSignError: If κ ≥ 0 somewhere on the validation grid
        """
        if isinstance(source, smp.Expr):
            expr = source
        else:
            expr = parse_expression(source, ("x1", "x2")).expr
        if not isinstance(domain, Rectangle):
            domain = Rectangle.from_sequence(domain)
        merged = {"h": str(expr), **dict(params or {})}
        return cls(name, _sympy_jet(expr), domain, params=merged, height=expr, validate=validate)

    @classmethod
    def saddle(cls, domain: Sequence[float] = (-1.0, 1.0, -1.0, 1.0)) -> SurfacePatch:
        """h = x1·x2."""
        return cls.from_expression(X1 * X2, domain, name="saddle", params={})

    @classmethod
    def hyperbolic_paraboloid(
        cls, domain: Sequence[float] = (-1.0, 1.0, -1.0, 1.0)
    ) -> SurfacePatch:
        """h = (x1² − x2²)/2."""
        expr = (X1**2 - X2**2) / 2
        return cls.from_expression(expr, domain, name="hyperbolic_paraboloid", params={})

    @classmethod
    def monkey_saddle(cls, domain: Sequence[float] = (0.4, 2.2, 0.4, 4.2)) -> SurfacePatch:
        """h = x1³ − 3·x1·x2², away from the flat point at the origin."""
        expr = X1**3 - 3 * X1 * X2**2
        return cls.from_expression(expr, domain, name="monkey_saddle", params={})

    @classmethod
    def separable(
        cls,
        h1: str = "x1^2/2 + x1^4/12",
        h2: str = "-x2^2/2 - x2^4/12",
        domain: Sequence[float] = (-1.0, 1.0, -1.0, 1.0),
    ) -> SurfacePatch:
        """h = h1(x1) + h2(x2) with h1''·h2'' < 0."""
        e1 = parse_expression(h1, ("x1", "x2"))
        e2 = parse_expression(h2, ("x1", "x2"))
        if X2 in e1.expr.free_symbols or X1 in e2.expr.free_symbols:
            raise ConfigError("separable parts must depend on x1 and x2 respectively")
        surface = cls.from_expression(
            e1.expr + e2.expr, domain, name="separable", params={"h1": h1, "h2": h2}
        )
        surface.separable_parts = (Expression(e1.expr, ("x1",)), Expression(e2.expr, ("x2",)))
        return surface

    @classmethod
    def polynomial(
        cls, source: str, domain: Sequence[float] = (-1.0, 1.0, -1.0, 1.0)
    ) -> SurfacePatch:
        """Polynomial height of total degree at most 6."""
        expr = parse_expression(source, ("x1", "x2")).expr
        try:
            degree = smp.Poly(expr, X1, X2).total_degree()
        except smp.PolynomialError as e:
            raise ConfigError(f"{source!r} is not a polynomial in x1, x2") from e
        if degree > POLYNOMIAL_MAX_DEGREE:
            raise ConfigError(f"polynomial degree must be <= {POLYNOMIAL_MAX_DEGREE}, got {degree}")
        return cls.from_expression(expr, domain, name="polynomial", params={"h": source})

    # Evaluation
    # ------------------------------------------------------------------

    def jet(self, x1: Any, x2: Any) -> HeightJet:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return self._jet(x1, x2)

    def contains(self, x1: Any, x2: Any) -> np.ndarray:
        return self.domain.contains(x1, x2)

    def require_inside(self, x1: Any, x2: Any) -> None:
        p1, p2 = np.broadcast_arrays(
            np.atleast_1d(np.asarray(x1, dtype=float)), np.atleast_1d(np.asarray(x2, dtype=float))
        )
        inside = self.contains(p1, p2)
        if not np.all(inside):
            k = int(np.argmin(inside.ravel()))
            point = (float(p1.ravel()[k]), float(p2.ravel()[k]))
            raise DomainError(
                f"point {point} outside parameter domain {self.domain.as_tuple()}",
                point=point,
            )

    def position(self, x1: Any, x2: Any) -> np.ndarray:
        """Embedded point r(x), shape (..., 3)."""
        j = self.jet(x1, x2)
        x1, x2, h = np.broadcast_arrays(np.asarray(x1, float), np.asarray(x2, float), j.h)
        return np.stack([x1, x2, h], axis=-1)

    def forms(self, x1: Any, x2: Any) -> FundamentalForms:
        """Vectorized fundamental forms (no domain check)."""
        return FundamentalForms.from_jet(self.jet(x1, x2))

    def validate(self, n: int = _VALIDATION_NODES) -> None:
        """Check hyperbolicity and mixed-partial symmetry on an n×n grid."""
        g1, g2 = self.domain.sample(n)
        j = self.jet(g1, g2)
        for a, b in (("h12", "h21"), ("h112", "h211"), ("h122", "h221")):
            diff = np.max(np.abs(getattr(j, a) - getattr(j, b)))
            if diff > SYMMETRY_TOL:
                raise ConfigError(f"mixed partials {a} and {b} disagree by {diff:.3e}")
        kappa = FundamentalForms.from_jet(j).kappa
        worst = np.unravel_index(np.argmax(kappa), kappa.shape)
        if not np.all(kappa < 0.0):
            point = (float(g1[worst]), float(g2[worst]))
            raise CurvatureSignError(
                f"surface {self.name!r} is not hyperbolic: kappa={kappa[worst]:.3e} at {point}",
                point=point,
                kappa=float(kappa[worst]),
            )
        logger.debug("surface %s hyperbolic, max kappa %.3e", self.name, float(kappa[worst]))


@dataclass(frozen=True)
class FundamentalForms:
    """First and second fundamental forms and derived quantities.

    Array shapes carry arbitrary leading dimensions. ``christoffel[..., c, a, b]``
    is Γ^c_ab; ``shape_op[..., c, a]`` maps ∂a to (∇ν)∂a = S^c_a ∂c;
    ``tangents[..., :, a]`` is the embedded vector ∂a r.
    """

    G: np.ndarray
    G_inv: np.ndarray
    Pi: np.ndarray
    christoffel: np.ndarray
    shape_op: np.ndarray
    normal: np.ndarray
    tangents: np.ndarray
    kappa: np.ndarray
    d_kappa: np.ndarray
    grad_kappa: np.ndarray
    det_G: np.ndarray

    @classmethod
    def from_jet(cls, j: HeightJet) -> FundamentalForms:
        h1, h2 = np.broadcast_arrays(j.h1, j.h2)
        w2 = 1.0 + h1**2 + h2**2
        w = np.sqrt(w2)
        G = _mat2(1.0 + h1**2, h1 * h2, h1 * h2, 1.0 + h2**2)
        G_inv = _mat2(1.0 + h2**2, -h1 * h2, -h1 * h2, 1.0 + h1**2) / w2[..., None, None]
        hess = j.hessian()
        Pi = -hess / w[..., None, None]
        grad = np.stack([h1, h2], axis=-1)
        christoffel = grad[..., :, None, None] * hess[..., None, :, :] / w2[..., None, None, None]
        shape_op = G_inv @ Pi
        normal = np.stack([-h1, -h2, np.ones_like(h1)], axis=-1) / w[..., None]
        zeros = np.zeros_like(h1)
        ones = np.ones_like(h1)
        tangents = np.stack(
            [np.stack([ones, zeros], -1), np.stack([zeros, ones], -1), np.stack([h1, h2], -1)],
            axis=-2,
        )
        numer = j.h11 * j.h22 - j.h12**2
        kappa = numer / w2**2
        # ∂a of numerator and of W⁴
        dnum1 = j.h111 * j.h22 + j.h11 * j.h122 - 2.0 * j.h12 * j.h112
        dnum2 = j.h112 * j.h22 + j.h11 * j.h222 - 2.0 * j.h12 * j.h122
        dw2_1 = 2.0 * (h1 * j.h11 + h2 * j.h12)
        dw2_2 = 2.0 * (h1 * j.h12 + h2 * j.h22)
        dk1 = dnum1 / w2**2 - 2.0 * numer * dw2_1 / w2**3
        dk2 = dnum2 / w2**2 - 2.0 * numer * dw2_2 / w2**3
        d_kappa = np.stack(np.broadcast_arrays(dk1, dk2), axis=-1)
        grad_kappa = np.einsum("...ab,...b->...a", G_inv, d_kappa)
        return cls(
            G=G,
            G_inv=G_inv,
            Pi=Pi,
            christoffel=christoffel,
            shape_op=shape_op,
            normal=normal,
            tangents=tangents,
            kappa=np.broadcast_to(kappa, h1.shape).copy(),
            d_kappa=d_kappa,
            grad_kappa=grad_kappa,
            det_G=w2,
        )

    @property
    def sqrt_det_G(self) -> np.ndarray:
        return np.sqrt(self.det_G)

    @property
    def Q(self) -> np.ndarray:
        """Clockwise rotation by π/2 acting on vector components."""
        G = self.G
        return _mat2(G[..., 0, 1], G[..., 1, 1], -G[..., 0, 0], -G[..., 0, 1]) / self.sqrt_det_G[
            ..., None, None
        ]

    @property
    def mean_trace(self) -> np.ndarray:
        """tr_g Π."""
        return np.trace(self.shape_op, axis1=-2, axis2=-1)

    @property
    def Q_shape(self) -> np.ndarray:
        """Matrix of Q∇ν on vector components."""
        return self.Q @ self.shape_op

    def inner(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.einsum("...i,...ij,...j->...", a, self.G, b)

    def second(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Π(a, b)."""
        return np.einsum("...i,...ij,...j->...", a, self.Pi, b)

    def lower(self, a: np.ndarray) -> np.ndarray:
        return np.einsum("...ij,...j->...i", self.G, a)

    def raise_(self, a: np.ndarray) -> np.ndarray:
        return np.einsum("...ij,...j->...i", self.G_inv, a)

    def ambient(self, a: np.ndarray) -> np.ndarray:
        """Embedded 3-vector of the tangent vector with components ``a``."""
        return np.einsum("...ia,...a->...i", self.tangents, a)

    def pair_q_star_pi(self, T: np.ndarray) -> np.ndarray:
        """⟨T, Q*Π⟩ for a covariant symmetric 2-tensor T."""
        P = self.Pi
        cross = T[..., 0, 0] * P[..., 1, 1] + T[..., 1, 1] * P[..., 0, 0]
        return (cross - 2.0 * T[..., 0, 1] * P[..., 0, 1]) / self.det_G


def _point(x: Any) -> tuple[float, float]:
    p = validate_point(x, "x")
    return float(p[0]), float(p[1])


def fundamental_forms_at(surface: SurfacePatch, x: Any) -> FundamentalForms:
    """
    Fundamental forms of ``surface`` at a single parameter point.

    Args:
        surface: Graph surface
        x: Point (x1, x2) in the parameter domain

    Returns:
        Scalar-shaped :class:`FundamentalForms` (G, G⁻¹, Π, Γ, shape operator, ν)

    Raises:
        DomainError: If x lies outside the parameter domain

    Examples:
        >>> forms = fundamental_forms_at(SurfacePatch.saddle(), (0.0, 0.0))
        >>> forms.Pi
        array([[-0., -1.],
               [-1., -0.]])
    """
    x1, x2 = _point(x)
    surface.require_inside(x1, x2)
    return surface.forms(x1, x2)


def gauss_curvature_at(surface: SurfacePatch, x: Any) -> tuple[float, np.ndarray]:
    """Gauss curvature κ and its gradient Dκ (vector components) at x."""
    forms = fundamental_forms_at(surface, x)
    return float(forms.kappa), forms.grad_kappa


def rotate_Q(surface: SurfacePatch, x: Any, alpha: Any) -> np.ndarray:
    """Rotate the tangent vector ``alpha`` clockwise by π/2 at x."""
    forms = fundamental_forms_at(surface, x)
    return forms.Q @ validate_point(alpha, "alpha")


# Sampled tensor fields
# ============================================================================

_KINDS = {"scalar": 0, "vector": 1, "covector": 1, "form": 2}


@dataclass(frozen=True)
class TensorFieldGrid:
    """Tensor field sampled on a structured (u1, u2) grid.

    When ``points`` and ``jacobian`` are given the grid is an embedded
    parametrization u ↦ x(u) of part of the surface domain; otherwise the
    grid coordinates are the surface parameters. Components are always in
    the chart basis ∂x1, ∂x2.

    Attributes:
        u1: Strictly increasing first-axis coordinates
        u2: Strictly increasing second-axis coordinates
        values: Array of shape (n1, n2) + (2,) * rank
        kind: ``scalar``, ``vector``, ``covector`` or ``form``
        points: Surface parameters at each node, shape (n1, n2, 2)
        jacobian: ∂x_a/∂u_k at each node, shape (n1, n2, 2, 2) indexed [a, k]
        symmetric: Whether a rank-2 field must be symmetric
    """

    u1: np.ndarray
    u2: np.ndarray
    values: np.ndarray
    kind: str = "scalar"
    points: np.ndarray | None = None
    jacobian: np.ndarray | None = None
    symmetric: bool = False
    _meta: dict[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ConfigError(f"unknown tensor kind {self.kind!r}")
        for name, axis in (("u1", self.u1), ("u2", self.u2)):
            if axis.ndim != 1 or axis.size < 3 or np.any(np.diff(axis) <= 0):
                raise ConfigError(f"{name} must be strictly increasing with >= 3 nodes")
        expected = (self.u1.size, self.u2.size) + (2,) * self.rank
        if self.values.shape != expected:
            raise ConfigError(f"values shape {self.values.shape} != {expected}")
        if (self.points is None) != (self.jacobian is None):
            raise ConfigError("points and jacobian must be given together")
        if self.symmetric and self.rank == 2:
            asym = np.max(np.abs(self.values - np.swapaxes(self.values, -1, -2)), initial=0.0)
            if asym > SYMMETRY_TOL * max(1.0, float(np.max(np.abs(self.values), initial=0.0))):
                raise ConfigError(f"rank-2 field flagged symmetric is not (defect {asym:.3e})")

    @property
    def rank(self) -> int:
        return _KINDS[self.kind]

    @property
    def shape(self) -> tuple[int, int]:
        return (self.u1.size, self.u2.size)

    @property
    def spacing(self) -> tuple[float, float]:
        return float(np.max(np.diff(self.u1))), float(np.max(np.diff(self.u2)))

    @classmethod
    def sample(
        cls,
        fn: Callable[[np.ndarray, np.ndarray], np.ndarray],
        u1: Any,
        u2: Any,
        kind: str = "scalar",
        *,
        embedding: Callable[[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]] | None = None,
        symmetric: bool = False,
    ) -> TensorFieldGrid:
        """Sample ``fn`` (a function of surface parameters) on a grid.

        ``embedding(U1, U2)`` returns ``(points, jacobian)``; ``fn`` then
        receives the surface parameters of every node.
        """
        u1 = np.asarray(u1, dtype=float)
        u2 = np.asarray(u2, dtype=float)
        g1, g2 = np.meshgrid(u1, u2, indexing="ij")
        points = jacobian = None
        if embedding is not None:
            points, jacobian = embedding(g1, g2)
            g1, g2 = points[..., 0], points[..., 1]
        values = np.asarray(fn(g1, g2), dtype=float)
        return cls(u1, u2, values, kind, points, jacobian, symmetric)

    def with_values(
        self, values: np.ndarray, kind: str, symmetric: bool = False
    ) -> TensorFieldGrid:
        """New field on the same grid and embedding."""
        return replace(self, values=np.asarray(values, dtype=float), kind=kind, symmetric=symmetric)

    def surface_points(self) -> np.ndarray:
        if self.points is not None:
            return self.points
        g1, g2 = np.meshgrid(self.u1, self.u2, indexing="ij")
        return np.stack([g1, g2], axis=-1)

    def forms(self, surface: SurfacePatch) -> FundamentalForms:
        """Fundamental forms at every node (cached per surface)."""
        cached = self._meta.get("forms")
        if cached is not None and cached[0] is surface:
            return cached[1]
        p = self.surface_points()
        forms = surface.forms(p[..., 0], p[..., 1])
        self._meta["forms"] = (surface, forms)
        return forms

    def inverse_jacobian(self) -> np.ndarray:
        """∂u_k/∂x_a, shape (n1, n2, 2, 2) indexed [k, a]."""
        if self.jacobian is None:
            return np.broadcast_to(np.eye(2), self.shape + (2, 2))
        return np.linalg.inv(self.jacobian)

    def partial(self, values: np.ndarray | None = None) -> np.ndarray:
        """Partial derivatives in surface coordinates, appended as last axis.

        Second-order central differences inside, second-order one-sided at
        the grid edge.
        """
        v = self.values if values is None else values
        d1, d2 = np.gradient(v, self.u1, self.u2, axis=(0, 1), edge_order=2)
        du = np.stack([d1, d2], axis=-1)
        inv = self.inverse_jacobian()
        extra = v.ndim - 2
        inv = inv.reshape(self.shape + (1,) * extra + (2, 2))
        return np.einsum("...k,...ka->...a", du, inv)

    def locate(self, x: Any) -> tuple[np.ndarray, np.ndarray]:
        """Bracketing node indices and weights for grid coordinates x."""
        p = validate_point(x, "x")
        idx = []
        wts = []
        for coord, axis in zip(p, (self.u1, self.u2)):
            span = axis[-1] - axis[0]
            if coord < axis[0] - 1e-12 * span or coord > axis[-1] + 1e-12 * span:
                raise MarginError(f"point {tuple(p)} outside sampling grid", point=tuple(p))
            i = int(np.clip(np.searchsorted(axis, coord) - 1, 0, axis.size - 2))
            t = (coord - axis[i]) / (axis[i + 1] - axis[i])
            idx.append(i)
            wts.append(float(np.clip(t, 0.0, 1.0)))
        return np.asarray(idx), np.asarray(wts)

    def at(self, x: Any, values: np.ndarray | None = None) -> np.ndarray:
        """Bilinear interpolation of (possibly derived) values at grid coords x."""
        v = self.values if values is None else values
        (i, j), (s, t) = self.locate(x)
        return (
            (1 - s) * (1 - t) * v[i, j]
            + s * (1 - t) * v[i + 1, j]
            + (1 - s) * t * v[i, j + 1]
            + s * t * v[i + 1, j + 1]
        )

    def touches_edge(self, x: Any) -> bool:
        (i, j), _ = self.locate(x)
        n1, n2 = self.shape
        return bool(i == 0 or j == 0 or i + 1 >= n1 - 1 or j + 1 >= n2 - 1)


@dataclass(frozen=True)
class CovariantDerivative:
    """Covariant derivative values with a flag for one-sided stencils.

    The derivative direction is the last axis: ``values[..., l]`` is D_l T.
    """

    values: np.ndarray
    one_sided: bool


def covariant_derivative_field(surface: SurfacePatch, T: TensorFieldGrid) -> np.ndarray:
    """Covariant derivative of a sampled field on its whole grid.

    Returns an array of shape (n1, n2) + (2,) * (rank + 1), last axis the
    derivative direction.
    """
    d = T.partial()
    if T.rank == 0:
        return d
    gamma = T.forms(surface).christoffel  # [c, a, b] = Γ^c_ab
    v = T.values
    if T.kind == "vector":
        return d + np.einsum("...ilm,...m->...il", gamma, v)
    if T.kind == "covector":
        return d - np.einsum("...mli,...m->...il", gamma, v)
    # (D_l U)_ij = ∂_l U_ij − Γ^m_li U_mj − Γ^m_lj U_im
    return (
        d
        - np.einsum("...mli,...mj->...ijl", gamma, v)
        - np.einsum("...mlj,...im->...ijl", gamma, v)
    )


def covariant_derivative(surface: SurfacePatch, T: TensorFieldGrid, x: Any) -> CovariantDerivative:
    """
    Covariant derivative of a sampled field at grid coordinates x.

    Args:
        surface: Graph surface carrying the connection
        T: Sampled scalar, vector, covector or symmetric 2-tensor field
        x: Grid coordinates of the evaluation point

    Returns:
        :class:`CovariantDerivative`; ``one_sided`` is set when the stencil
        touched the grid edge

    Raises:
        MarginError: If x lies outside the grid
    """
    field_values = covariant_derivative_field(surface, T)
    return CovariantDerivative(T.at(x, field_values), T.touches_edge(x))


def lambda_field(surface: SurfacePatch, U: TensorFieldGrid) -> np.ndarray:
    """Λ(U) at every node as vector components, shape (n1, n2, 2).

    Λ_k = G^{il} (D_l U)_{ki}, then raised with G⁻¹.
    """
    if U.kind != "form":
        raise ConfigError(f"lambda_op needs a rank-2 form, got {U.kind}")
    forms = U.forms(surface)
    DU = covariant_derivative_field(surface, U)
    low = np.einsum("...il,...kil->...k", forms.G_inv, DU)
    return forms.raise_(low)


def lambda_op(surface: SurfacePatch, U: TensorFieldGrid, x: Any) -> np.ndarray:
    """
    Λ(U) at grid coordinates x, defined by ⟨Λ(U), α⟩ = tr_g ι_α DU.

    Raises:
        MarginError: If the central stencil around x leaves the grid
    """
    if U.touches_edge(x):
        raise MarginError(f"lambda_op at {tuple(np.asarray(x, float))} needs one node of margin")
    return np.asarray(U.at(x, lambda_field(surface, U)))


def metric_field(surface: SurfacePatch, grid: TensorFieldGrid) -> TensorFieldGrid:
    """The metric g sampled as a form on the nodes of ``grid``."""
    return grid.with_values(grid.forms(surface).G, "form", symmetric=True)


def random_tangent_samples(
    surface: SurfacePatch, n: int, seed: int = 0
) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic random points in the domain and random tangent vectors."""
    rng = np.random.default_rng(seed)
    d = surface.domain
    points = np.column_stack(
        [rng.uniform(d.x1_min, d.x1_max, n), rng.uniform(d.x2_min, d.x2_max, n)]
    )
    vectors = rng.normal(size=(n, 2))
    return points, vectors


POLYNOMIAL_MAX_DEGREE = 6

CATALOG: dict[str, Callable[..., SurfacePatch]] = {
    "saddle": SurfacePatch.saddle,
    "hyperbolic_paraboloid": SurfacePatch.hyperbolic_paraboloid,
    "separable": SurfacePatch.separable,
    "monkey_saddle": SurfacePatch.monkey_saddle,
    "polynomial": SurfacePatch.polynomial,
    "graph": SurfacePatch.from_expression,
}


def surface_from_catalog(
    name: str, params: Mapping[str, Any] | None = None, domain: Sequence[float] | None = None
) -> SurfacePatch:
    """Build a catalog surface by name.

    ``polynomial`` and ``graph`` take ``h`` in ``params``; ``separable``
    takes ``h1`` and ``h2``.
    """
    if name not in CATALOG:
        raise ConfigError(f"unknown surface {name!r}; known: {sorted(CATALOG)}")
    kwargs: dict[str, Any] = dict(params or {})
    if domain is not None:
        kwargs["domain"] = tuple(domain)
    try:
        if name in ("polynomial", "graph"):
            if "h" not in kwargs:
                raise ConfigError(f"surface {name!r} needs params.h")
            source = kwargs.pop("h")
            return CATALOG[name](source, **kwargs)
        return CATALOG[name](**kwargs)
    except TypeError as e:
        raise ConfigError(f"bad parameters for surface {name!r}: {e}") from e
