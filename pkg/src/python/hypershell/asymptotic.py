#!/usr/bin/env python3
"""
Asymptotic coordinate systems on hyperbolic graph patches.

An asymptotic chart has coordinate lines along the two null directions of
the second fundamental form, so Π(∂y1, ∂y1) = Π(∂y2, ∂y2) = 0. In such a
chart the scalar strain equation takes the normal form

    w_y1y2 = f̂ + f̂0·w + X̂(w)

solved by :mod:`hypershell.goursat`.

Closed forms cover the catalog surfaces (linear charts for x1·x2 and
(x1² − x2²)/2, a holomorphic chart for the monkey saddle, quadrature charts
for separable heights); every other surface gets a chart traced with a
fourth-order Runge-Kutta integrator along both direction fields.

Example:
    >>> from hypershell.geometry import SurfacePatch
    >>> from hypershell.asymptotic import build_chart
    >>> chart = build_chart(SurfacePatch.saddle(), (0.2, -0.1), 0.3)
    >>> chart.method
    'linear'
    >>> chart.forward((0.2, -0.1)).tolist()
    [0.0, 0.0]
"""

from __future__ import annotations

import abc
import cmath
import logging
import math
from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline, RectBivariateSpline
from scipy.spatial import cKDTree

from .curves import PlaneCurve
from .exceptions import (
    BranchError,
    ChartError,
    CurvatureSignError,
    DegenerateChartError,
    DomainError,
    NoncharacteristicError,
    RadiusTooLargeError,
)
from .geometry import FundamentalForms, Rectangle, SurfacePatch, fundamental_forms_at
from .protocols import ChartProtocol, ScalarField
from .validators import (
    DEGENERATE_PI,
    INVERSE_TOL,
    JACOBIAN_MIN,
    NEWTON_MAX_ITER,
    NEWTON_TOL,
    NONCHAR_TOL,
    TOL_ASYM_REL,
    validate_choice,
    validate_int,
    validate_point,
    validate_positive,
)

logger = logging.getLogger(__name__)

CHART_METHODS = ("auto", "ode", "closed")

_TIE_TOL = 1e-12
_VALIDATION_NODES = 9
_NET_HALF = 16
_TABLE_NODES = 257
_BRANCH_COS = 0.5


# Null directions
# ============================================================================


def _canonical(v: np.ndarray) -> np.ndarray:
    flip = (v[..., 0] < -_TIE_TOL) | ((np.abs(v[..., 0]) <= _TIE_TOL) & (v[..., 1] < 0))
    return np.where(flip[..., None], -v, v)


def null_directions(forms: FundamentalForms) -> tuple[np.ndarray, np.ndarray]:
    """
    Unit null directions (ξ⁺, ξ⁻) of Π, vectorized over leading axes.

    Π is diagonalized in a g-orthonormal frame; with eigenvalues λ₋ < 0 < λ₊
    the null vectors are √λ₊·e₋ ± √(−λ₋)·e₊. Each direction is signed to
    have a positive first component (positive second on ties) and ξ⁺ is
    the one with the larger first component.

    Raises:
        CurvatureSignError: If Π is not indefinite somewhere
    """
    L = np.linalg.cholesky(forms.G)
    Linv = np.linalg.inv(L)
    M = Linv @ forms.Pi @ np.swapaxes(Linv, -1, -2)
    vals, vecs = np.linalg.eigh(M)
    lam_neg, lam_pos = vals[..., 0], vals[..., 1]
    if np.any(lam_neg >= 0.0) or np.any(lam_pos <= 0.0):
        raise CurvatureSignError("second fundamental form is not indefinite (kappa >= 0)")
    a = np.sqrt(lam_pos)[..., None]
    b = np.sqrt(-lam_neg)[..., None]
    norm = np.sqrt(lam_pos - lam_neg)[..., None]
    e_neg, e_pos = vecs[..., :, 0], vecs[..., :, 1]
    c1 = (a * e_neg + b * e_pos) / norm
    c2 = (a * e_neg - b * e_pos) / norm
    xi1 = _canonical(np.einsum("...ba,...b->...a", Linv, c1))
    xi2 = _canonical(np.einsum("...ba,...b->...a", Linv, c2))
    d0 = xi1[..., 0] - xi2[..., 0]
    first = (d0 > _TIE_TOL) | ((np.abs(d0) <= _TIE_TOL) & (xi1[..., 1] > xi2[..., 1]))
    plus = np.where(first[..., None], xi1, xi2)
    minus = np.where(first[..., None], xi2, xi1)
    return plus, minus


def asymptotic_directions_at(surface: SurfacePatch, x: Any) -> tuple[np.ndarray, np.ndarray]:
    """
    Asymptotic directions (ξ⁺, ξ⁻) at a point, unit length in g.

    Raises:
        CurvatureSignError: If κ(x) ≥ 0
        DomainError: If x lies outside the parameter domain

    Examples:
        >>> xp, xm = asymptotic_directions_at(SurfacePatch.hyperbolic_paraboloid(), (0, 0))
        >>> np.round(xp * np.sqrt(2), 12).tolist(), np.round(xm * np.sqrt(2), 12).tolist()
        ([1.0, 1.0], [1.0, -1.0])
    """
    forms = fundamental_forms_at(surface, x)
    if not float(forms.kappa) < 0.0:
        raise CurvatureSignError(
            f"asymptotic directions need kappa < 0, got {float(forms.kappa):.3e}",
            point=tuple(float(v) for v in np.asarray(x, float)),
            kappa=float(forms.kappa),
        )
    return null_directions(forms)


def _pick(xa: np.ndarray, xb: np.ndarray, ref: np.ndarray) -> np.ndarray:
    """The signed null direction closest to ``ref``; branch flips raise."""
    r = ref / np.linalg.norm(ref, axis=-1, keepdims=True)
    ca = np.sum(xa * r, axis=-1) / np.linalg.norm(xa, axis=-1)
    cb = np.sum(xb * r, axis=-1) / np.linalg.norm(xb, axis=-1)
    use_a = np.abs(ca) >= np.abs(cb)
    best = np.maximum(np.abs(ca), np.abs(cb))
    other = np.minimum(np.abs(ca), np.abs(cb))
    if np.any(best < _BRANCH_COS) or np.any(other > 0.999 * best):
        raise BranchError("asymptotic direction field changed branch along a traced curve")
    return np.where(use_a[..., None], xa * np.sign(ca)[..., None], xb * np.sign(cb)[..., None])


# Charts
# ============================================================================


class AsymptoticChart(abc.ABC):
    """Asymptotic coordinate system y = ψ(x) on a patch of a surface.

    Subclasses implement :meth:`forward`, :meth:`inverse`, :meth:`jacobian`
    (∂x/∂y, indexed [a, k]) and :meth:`mixed` (∂²x/∂y1∂y2).
    """

    method = "abstract"

    def __init__(self, surface: SurfacePatch, center: Any, radius: float, patch: Rectangle) -> None:
        self.surface = surface
        self.center = validate_point(center, "center")
        self.radius = float(radius)
        self.patch = patch

    @abc.abstractmethod
    def forward(self, x: Any) -> np.ndarray:
        ...

    @abc.abstractmethod
    def inverse(self, y: Any) -> np.ndarray:
        ...

    @abc.abstractmethod
    def jacobian(self, y: Any) -> np.ndarray:
        ...

    @abc.abstractmethod
    def mixed(self, y: Any) -> np.ndarray:
        ...

    @property
    def root_method(self) -> str:
        """Method of the underlying chart, through any reparametrizations."""
        return self.method

    def jacobian_inverse(self, y: Any) -> np.ndarray:
        """∂y_k/∂x_a, indexed [k, a]."""
        return np.linalg.inv(self.jacobian(y))

    def covers(self, y: Any) -> np.ndarray:
        """Mask of chart points whose preimage is defined and inside the domain."""
        y = _as_points(y)
        with np.errstate(all="ignore"):
            x = self.inverse(y)
        ok = np.all(np.isfinite(x), axis=-1)
        x = np.where(ok[..., None], x, self.center)
        return ok & self.surface.contains(x[..., 0], x[..., 1])

    @property
    def sign_tag(self) -> int:
        """Sign of Π(∂y1, ∂y2) at the chart origin."""
        y0 = self.forward(self.center)
        J = self.jacobian(y0)
        forms = self.surface.forms(self.center[0], self.center[1])
        return int(np.sign(forms.second(J[:, 0], J[:, 1])))

    def validation_points(self, n: int) -> np.ndarray:
        g1, g2 = self.patch.sample(n)
        return self.forward(np.stack([g1, g2], axis=-1))

    def validate(self, n: int = _VALIDATION_NODES) -> None:
        """
        Check the chart invariants on validation nodes.

        Raises:
            ChartError: If a coordinate direction is not null for Π, the
                Jacobian is singular, or ψ∘ψ⁻¹ differs from the identity
        """
        y = self.validation_points(n)
        x = self.inverse(y)
        back = self.forward(x)
        err = float(np.max(np.abs(back - y)))
        if err > INVERSE_TOL * max(1.0, float(np.max(np.abs(y)))):
            raise ChartError(f"{self.method} chart: psi(psi^-1(y)) differs from y by {err:.3e}")
        J = self.jacobian(y)
        det = np.linalg.det(J)
        if np.min(np.abs(det)) < JACOBIAN_MIN:
            smallest = float(np.min(np.abs(det)))
            raise ChartError(
                f"{self.method} chart: singular Jacobian (|det| {smallest:.3e})", det=smallest
            )
        forms = self.surface.forms(x[..., 0], x[..., 1])
        scale = float(np.max(np.abs(forms.Pi))) * float(np.max(np.sum(J**2, axis=-2)))
        for k in range(2):
            defect = float(np.max(np.abs(forms.second(J[..., :, k], J[..., :, k]))))
            if defect > TOL_ASYM_REL * scale:
                raise ChartError(
                    f"{self.method} chart: Pi(dy{k + 1}, dy{k + 1}) = {defect:.3e} "
                    "exceeds tolerance",
                    defect=defect,
                )
        logger.debug("%s chart at %s validated (inverse error %.2e)", self.method, self.center, err)

    def reflected(self) -> ReparametrizedChart:
        """Same chart with y2 replaced by −y2."""
        maps = (MonotoneMap.linear(0.0, 1.0), MonotoneMap.linear(0.0, -1.0))
        return ReparametrizedChart(self, maps, (0, 1))

    def to_dict(self) -> dict[str, Any]:
        return {
            "method": self.method,
            "surface": self.surface.name,
            "center": self.center.tolist(),
            "radius": self.radius,
            "patch": list(self.patch.as_tuple()),
            "sign_tag": self.sign_tag,
        }


def _as_points(x: Any) -> np.ndarray:
    p = np.asarray(x, dtype=float)
    if p.shape[-1:] != (2,):
        raise ChartError(f"expected points with a trailing axis of length 2, got shape {p.shape}")
    return p


def _box_patch(surface: SurfacePatch, center: np.ndarray, radius: float) -> Rectangle:
    x1, x2 = center[0], center[1]
    patch = Rectangle(x1 - radius, x1 + radius, x2 - radius, x2 + radius)
    d = surface.domain
    if (
        patch.x1_min < d.x1_min
        or patch.x1_max > d.x1_max
        or patch.x2_min < d.x2_min
        or patch.x2_max > d.x2_max
    ):
        raise RadiusTooLargeError(
            f"ball of radius {radius} around {tuple(center)} leaves the domain {d.as_tuple()}",
            radius=radius,
        )
    return patch


class LinearChart(AsymptoticChart):
    """x = c + M·y for surfaces with constant asymptotic directions."""

    method = "linear"

    def __init__(
        self, surface: SurfacePatch, center: Any, radius: float, directions: np.ndarray
    ) -> None:
        c = validate_point(center, "center")
        super().__init__(surface, c, radius, _box_patch(surface, c, radius))
        self.M = np.asarray(directions, dtype=float)
        self.M_inv = np.linalg.inv(self.M)

    def forward(self, x: Any) -> np.ndarray:
        return np.einsum("ka,...a->...k", self.M_inv, _as_points(x) - self.center)

    def inverse(self, y: Any) -> np.ndarray:
        return self.center + np.einsum("ak,...k->...a", self.M, _as_points(y))

    def jacobian(self, y: Any) -> np.ndarray:
        y = _as_points(y)
        return np.broadcast_to(self.M, y.shape[:-1] + (2, 2)).copy()

    def mixed(self, y: Any) -> np.ndarray:
        return np.zeros_like(_as_points(y))


_OMEGA = cmath.exp(0.25j * math.pi)


class HolomorphicChart(AsymptoticChart):
    """Chart for h = Re(zⁿ), z = x1 + i·x2 (the monkey saddle is n = 3).

    With W' = √F'' the map W = ∫√F''(z) dz turns the null cone of the
    Hessian into the lines at ±45°: y1 = (Re W + Im W)/√2,
    y2 = (Re W − Im W)/√2.
    """

    method = "holomorphic"

    def __init__(self, surface: SurfacePatch, center: Any, radius: float, degree: int = 3) -> None:
        c = validate_point(center, "center")
        patch = _box_patch(surface, c, radius)
        if patch.x1_min <= 0.0:
            raise BranchError("holomorphic chart needs the patch in the half-plane x1 > 0")
        super().__init__(surface, c, radius, patch)
        self.degree = validate_int(degree, "degree", 3)
        n = self.degree
        self._root = math.sqrt(n * (n - 1))
        self._w0 = self._W(complex(c[0], c[1]))

    def _W(self, z: Any) -> Any:
        n = self.degree
        return self._root * np.power(z, n / 2) / (n / 2)

    def _dW(self, z: Any) -> Any:
        return self._root * np.power(z, (self.degree - 2) / 2)

    def _d2W(self, z: Any) -> Any:
        return self._root * (self.degree - 2) / 2 * np.power(z, (self.degree - 4) / 2)

    @staticmethod
    def _z(x: np.ndarray) -> np.ndarray:
        return x[..., 0] + 1j * x[..., 1]

    def forward(self, x: Any) -> np.ndarray:
        W = self._W(self._z(_as_points(x))) - self._w0
        return np.stack([(W.real + W.imag), (W.real - W.imag)], axis=-1) / math.sqrt(2)

    def inverse(self, y: Any) -> np.ndarray:
        y = _as_points(y)
        W = self._w0 + _OMEGA * y[..., 0] + np.conj(_OMEGA) * y[..., 1]
        n = self.degree
        z = np.power(W * (n / 2) / self._root, 2.0 / n)
        return np.stack([z.real, z.imag], axis=-1)

    def jacobian(self, y: Any) -> np.ndarray:
        x = self.inverse(y)
        dz = 1.0 / self._dW(self._z(x))
        c1 = _OMEGA * dz
        c2 = np.conj(_OMEGA) * dz
        rows = [np.stack([c1.real, c2.real], -1), np.stack([c1.imag, c2.imag], -1)]
        return np.stack(rows, axis=-2)

    def mixed(self, y: Any) -> np.ndarray:
        z = self._z(self.inverse(y))
        m = -self._d2W(z) / self._dW(z) ** 3
        return np.stack([m.real, m.imag], axis=-1)


class MonotoneMap:
    """Strictly monotone map of the line: Hermite spline inside its table,
    linear continuation outside."""

    def __init__(self, u: Any, v: Any, dv: Any) -> None:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        dv = np.asarray(dv, dtype=float)
        if u[0] > u[-1]:
            u, v, dv = u[::-1], v[::-1], dv[::-1]
        if np.any(np.diff(u) <= 0) or np.any(dv == 0) or not (np.all(dv > 0) or np.all(dv < 0)):
            raise NoncharacteristicError("reparametrization table is not strictly monotone")
        self.u, self.v, self.dv = u, v, dv
        self._spline = CubicHermiteSpline(u, v, dv)
        self._deriv = self._spline.derivative()

    @classmethod
    def linear(cls, offset: float, slope: float) -> MonotoneMap:
        u = np.array([-1.0, 0.0, 1.0])
        return cls(u, offset + slope * u, np.full(3, slope))

    def __call__(self, u: Any) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self._spline(np.clip(u, self.u[0], self.u[-1]))
        out = np.where(u < self.u[0], self.v[0] + self.dv[0] * (u - self.u[0]), out)
        return np.where(u > self.u[-1], self.v[-1] + self.dv[-1] * (u - self.u[-1]), out)

    def derivative(self, u: Any) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        out = self._deriv(np.clip(u, self.u[0], self.u[-1]))
        out = np.where(u < self.u[0], self.dv[0], out)
        return np.where(u > self.u[-1], self.dv[-1], out)

    def inverted(self) -> MonotoneMap:
        return MonotoneMap(self.v, self.u, 1.0 / self.dv)

    def negated(self) -> MonotoneMap:
        return MonotoneMap(self.u, -self.v, -self.dv)


class ReparametrizedChart(AsymptoticChart):
    """Chart z_k = φ_k(y_{src[k]}) over a base chart.

    Component-wise reparametrizations (possibly swapping the coordinates)
    keep a chart asymptotic.
    """

    method = "reparametrized"

    def __init__(
        self, base: AsymptoticChart, maps: tuple[MonotoneMap, MonotoneMap], src: tuple[int, int]
    ) -> None:
        if sorted(src) != [0, 1]:
            raise ChartError(f"src must be a permutation of (0, 1), got {src}")
        super().__init__(base.surface, base.center, base.radius, base.patch)
        self.base = base
        self.maps = maps
        self.inv_maps = (maps[0].inverted(), maps[1].inverted())
        self.src = src

    def forward(self, x: Any) -> np.ndarray:
        y = self.base.forward(x)
        return np.stack([self.maps[k](y[..., self.src[k]]) for k in range(2)], axis=-1)

    def _base_coords(self, z: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        y = np.empty_like(z)
        dy = np.empty_like(z)
        for k in range(2):
            y[..., self.src[k]] = self.inv_maps[k](z[..., k])
            dy[..., k] = self.inv_maps[k].derivative(z[..., k])
        return y, dy

    def inverse(self, z: Any) -> np.ndarray:
        y, _ = self._base_coords(_as_points(z))
        return self.base.inverse(y)

    def covers(self, z: Any) -> np.ndarray:
        y, _ = self._base_coords(_as_points(z))
        return self.base.covers(y)

    def jacobian(self, z: Any) -> np.ndarray:
        y, dy = self._base_coords(_as_points(z))
        Jy = self.base.jacobian(y)
        cols = [Jy[..., :, self.src[k]] * dy[..., k, None] for k in range(2)]
        return np.stack(cols, axis=-1)

    def mixed(self, z: Any) -> np.ndarray:
        y, dy = self._base_coords(_as_points(z))
        return self.base.mixed(y) * (dy[..., 0] * dy[..., 1])[..., None]

    def validation_points(self, n: int) -> np.ndarray:
        y = self.base.validation_points(n)
        return np.stack([self.maps[k](y[..., self.src[k]]) for k in range(2)], axis=-1)

    @property
    def root_method(self) -> str:
        return self.base.root_method

    def to_dict(self) -> dict[str, Any]:
        out = self.base.to_dict()
        out.update(
            {
                "method": self.method,
                "base_method": self.base.root_method,
                "swapped": self.src != (0, 1),
            }
        )
        return out


class SeparableChart(AsymptoticChart):
    """Chart for h = h1(x1) + h2(x2) with h1''·h2'' < 0.

    With A' = √|h1''| and B' = √|h2''| the coordinates are
    y1 = (A + B)/√2 and y2 = (A − B)/√2.
    """

    method = "separable"

    def __init__(self, surface: SurfacePatch, center: Any, radius: float) -> None:
        c = validate_point(center, "center")
        super().__init__(surface, c, radius, _box_patch(surface, c, radius))
        if surface.separable_parts is None:
            raise ChartError(f"surface {surface.name!r} is not separable")
        h1, h2 = surface.separable_parts
        d = surface.domain
        self._A = self._table(h1.diff("x1", 2), h1.diff("x1", 3), c[0], d.x1_min, d.x1_max)
        self._B = self._table(h2.diff("x2", 2), h2.diff("x2", 3), c[1], d.x2_min, d.x2_max)

    @staticmethod
    def _table(
        second: Callable[[Any], np.ndarray],
        third: Callable[[Any], np.ndarray],
        origin: float,
        lo: float,
        hi: float,
    ) -> tuple[MonotoneMap, MonotoneMap, Callable[[Any], np.ndarray], Callable[[Any], np.ndarray]]:
        u = np.linspace(lo, hi, _TABLE_NODES)
        h2 = second(u)
        if np.any(np.abs(h2) < DEGENERATE_PI) or not (np.all(h2 > 0) or np.all(h2 < 0)):
            raise DegenerateChartError("separable height part has a vanishing second derivative")

        def speed(s: Any) -> np.ndarray:
            return np.sqrt(np.abs(second(np.asarray(s, dtype=float))))

        def accel(s: Any) -> np.ndarray:
            s = np.asarray(s, dtype=float)
            return np.sign(second(s)) * third(s) / (2.0 * speed(s))

        pieces = [quad(lambda s: float(speed(s)), a, b)[0] for a, b in zip(u[:-1], u[1:])]
        A = np.concatenate([[0.0], np.cumsum(pieces)])
        A -= float(MonotoneMap(u, A, speed(u))(origin))
        fwd = MonotoneMap(u, A, speed(u))
        return fwd, fwd.inverted(), speed, accel

    def forward(self, x: Any) -> np.ndarray:
        x = _as_points(x)
        A = self._A[0](x[..., 0])
        B = self._B[0](x[..., 1])
        return np.stack([A + B, A - B], axis=-1) / math.sqrt(2)

    def inverse(self, y: Any) -> np.ndarray:
        y = _as_points(y)
        A = (y[..., 0] + y[..., 1]) / math.sqrt(2)
        B = (y[..., 0] - y[..., 1]) / math.sqrt(2)
        return np.stack([self._A[1](A), self._B[1](B)], axis=-1)

    def jacobian(self, y: Any) -> np.ndarray:
        x = self.inverse(y)
        a = 1.0 / (math.sqrt(2) * self._A[2](x[..., 0]))
        b = 1.0 / (math.sqrt(2) * self._B[2](x[..., 1]))
        return np.stack([np.stack([a, a], -1), np.stack([b, -b], -1)], axis=-2)

    def mixed(self, y: Any) -> np.ndarray:
        x = self.inverse(y)
        a1, a2 = self._A[2](x[..., 0]), self._A[3](x[..., 0])
        b1, b2 = self._B[2](x[..., 1]), self._B[3](x[..., 1])
        return np.stack([-a2 / (2 * a1**3), b2 / (2 * b1**3)], axis=-1)


class NetChart(AsymptoticChart):
    """Chart traced along both asymptotic direction fields.

    The net x(y) is built on a (2K+1)² grid of g-arclength labels: the axes
    are the integral curves of ξ⁺ and ξ⁻ through the center, and every other
    node is the intersection of the ξ⁺ curve through its y1-neighbour with
    the ξ⁻ curve through its y2-neighbour. Curves are traced with classical
    RK4 at step radius/steps; nodes of one anti-diagonal are computed
    together. The inverse map is a bicubic spline of the net, the forward
    map is damped Newton on it, and Jacobian columns are projected onto the
    exact null directions.
    """

    method = "ode"

    def __init__(
        self,
        surface: SurfacePatch,
        center: Any,
        radius: float,
        steps: int = 256,
        net: int = _NET_HALF,
    ) -> None:
        c = validate_point(center, "center")
        self.steps = validate_int(steps, "steps", 4)
        K = validate_int(net, "net", 2)
        self.net = K
        self._sub = max(1, math.ceil(self.steps / K))
        delta = radius / K
        super().__init__(surface, c, radius, surface.domain)
        X, P, M = self._trace_net(c, K, delta)
        lo, hi = X.reshape(-1, 2).min(axis=0), X.reshape(-1, 2).max(axis=0)
        self.patch = Rectangle(float(lo[0]), float(hi[0]), float(lo[1]), float(hi[1]))
        self.labels = np.linspace(-radius, radius, 2 * K + 1)
        self.nodes = X
        self._splines = [
            RectBivariateSpline(self.labels, self.labels, X[..., a], kx=3, ky=3, s=0)
            for a in range(2)
        ]
        grid = np.stack(np.meshgrid(self.labels, self.labels, indexing="ij"), axis=-1)
        self._grid = grid.reshape(-1, 2)
        self._tree = cKDTree(X.reshape(-1, 2))
        logger.debug(
            "ode chart: %dx%d net, %d RK4 substeps per edge", 2 * K + 1, 2 * K + 1, self._sub
        )

    # Tracing
    # ------------------------------------------------------------------

    def _field(self, x: np.ndarray, ref: np.ndarray) -> np.ndarray:
        if not np.all(self.surface.contains(x[..., 0], x[..., 1])):
            raise RadiusTooLargeError(
                f"asymptotic curve left the domain while tracing a chart of radius {self.radius}",
                radius=self.radius,
            )
        xa, xb = null_directions(self.surface.forms(x[..., 0], x[..., 1]))
        return _pick(xa, xb, ref)

    def _trace(
        self, x0: np.ndarray, ref: np.ndarray, length: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        x = x0.copy()
        d = ref
        h = (np.asarray(length, dtype=float) / self._sub)[..., None]
        for _ in range(self._sub):
            k1 = self._field(x, d)
            k2 = self._field(x + 0.5 * h * k1, k1)
            k3 = self._field(x + 0.5 * h * k2, k2)
            k4 = self._field(x + h * k3, k3)
            x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            d = k4
        return x, self._field(x, d)

    def _trace_net(
        self, c: np.ndarray, K: int, delta: float
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        n = 2 * K + 1
        X = np.full((n, n, 2), np.nan)
        P = np.full((n, n, 2), np.nan)  # ξ⁺ oriented towards growing y1
        M = np.full((n, n, 2), np.nan)  # ξ⁻ oriented towards growing y2
        S = np.zeros((n, n))
        T = np.zeros((n, n))
        xp, xm = asymptotic_directions_at(self.surface, c)
        X[K, K], P[K, K], M[K, K] = c, xp, xm
        step = np.array([delta])

        for s in (1, -1):
            for i in range(1, K + 1):
                prev, cur = K + s * (i - 1), K + s * i
                x, d = self._trace(X[prev, K][None], s * P[prev, K][None], step)
                X[cur, K], P[cur, K], S[cur, K] = x[0], s * d[0], delta
                M[cur, K] = self._field(x, M[prev, K][None])[0]
                x, d = self._trace(X[K, prev][None], s * M[K, prev][None], step)
                X[K, cur], M[K, cur], T[K, cur] = x[0], s * d[0], delta
                P[K, cur] = self._field(x, P[K, prev][None])[0]

        for s1 in (1, -1):
            for s2 in (1, -1):
                for k in range(2, 2 * K + 1):
                    i = np.arange(max(1, k - K), min(K, k - 1) + 1)
                    j = k - i
                    I, J = K + s1 * i, K + s2 * j
                    Ia, Jb = K + s1 * (i - 1), K + s2 * (j - 1)
                    A, refA = X[Ia, J], s1 * P[Ia, J]
                    B, refB = X[I, Jb], s2 * M[I, Jb]
                    sigma, tau = S[I, Jb].copy(), T[Ia, J].copy()
                    for _ in range(2):
                        Ep, dp = self._trace(A, refA, sigma)
                        Em, dm = self._trace(B, refB, tau)
                        mat = np.stack([dp, -dm], axis=-1)
                        corr = np.linalg.solve(mat, (Em - Ep)[..., None])[..., 0]
                        sigma = sigma + corr[:, 0]
                        tau = tau + corr[:, 1]
                    X[I, J] = 0.5 * (Ep + corr[:, :1] * dp + Em + corr[:, 1:] * dm)
                    S[I, J], T[I, J] = sigma, tau
                    P[I, J], M[I, J] = s1 * dp, s2 * dm
        return X, P, M

    # Chart maps
    # ------------------------------------------------------------------

    def _check_labels(self, y: np.ndarray) -> None:
        r = self.radius * (1.0 + 1e-9)
        if np.any(np.abs(y) > r):
            raise DomainError(
                f"chart coordinates outside the traced net [-{self.radius}, {self.radius}]^2"
            )

    def inverse(self, y: Any) -> np.ndarray:
        y = _as_points(y)
        self._check_labels(y)
        return np.stack([s.ev(y[..., 0], y[..., 1]) for s in self._splines], axis=-1)

    def covers(self, y: Any) -> np.ndarray:
        y = _as_points(y)
        return np.all(np.abs(y) <= self.radius, axis=-1)

    def _raw_jacobian(self, y: np.ndarray) -> np.ndarray:
        cols = [
            np.stack([s.ev(y[..., 0], y[..., 1], dx=1 - k, dy=k) for s in self._splines], axis=-1)
            for k in range(2)
        ]
        return np.stack(cols, axis=-1)

    def jacobian(self, y: Any) -> np.ndarray:
        y = _as_points(y)
        self._check_labels(y)
        raw = self._raw_jacobian(y)
        x = self.inverse(y)
        xa, xb = null_directions(self.surface.forms(x[..., 0], x[..., 1]))
        cols = []
        for k in range(2):
            col = raw[..., :, k]
            u = _pick(xa, xb, col)
            weight = np.sum(col * u, axis=-1, keepdims=True) / np.sum(u * u, axis=-1, keepdims=True)
            cols.append(weight * u)
        return np.stack(cols, axis=-1)

    def mixed(self, y: Any) -> np.ndarray:
        y = _as_points(y)
        self._check_labels(y)
        return np.stack([s.ev(y[..., 0], y[..., 1], dx=1, dy=1) for s in self._splines], axis=-1)

    def forward(self, x: Any) -> np.ndarray:
        x = _as_points(x)
        shape = x.shape
        pts = x.reshape(-1, 2)
        _, idx = self._tree.query(pts)
        y = self._grid[idx].copy()
        r = self.radius
        for _ in range(NEWTON_MAX_ITER):
            res = self.inverse(y) - pts
            norm = np.linalg.norm(res, axis=-1)
            if np.max(norm, initial=0.0) <= NEWTON_TOL:
                return y.reshape(shape)
            step = np.linalg.solve(self._raw_jacobian(y), res[..., None])[..., 0]
            lam = np.ones(len(y))
            for _ in range(8):
                trial = np.clip(y - lam[:, None] * step, -r, r)
                worse = np.linalg.norm(self.inverse(trial) - pts, axis=-1) > norm
                if not np.any(worse):
                    break
                lam = np.where(worse, 0.5 * lam, lam)
            y = np.clip(y - lam[:, None] * step, -r, r)
        raise ChartError(
            "Newton inversion of the traced chart did not converge", tolerance=NEWTON_TOL
        )

    def validation_points(self, n: int) -> np.ndarray:
        u = np.linspace(-self.radius, self.radius, n) * 0.9
        return np.stack(np.meshgrid(u, u, indexing="ij"), axis=-1)

    def to_dict(self) -> dict[str, Any]:
        out = super().to_dict()
        out.update({"steps": self.steps, "net": self.net})
        return out


_LINEAR_DIRECTIONS = {
    "saddle": np.eye(2),
    "hyperbolic_paraboloid": np.array([[1.0, 1.0], [1.0, -1.0]]) / math.sqrt(2),
}


def _closed_factory(
    surface: SurfacePatch, c: np.ndarray, radius: float
) -> Optional[Callable[[], AsymptoticChart]]:
    if surface.name in _LINEAR_DIRECTIONS:
        return lambda: LinearChart(surface, c, radius, _LINEAR_DIRECTIONS[surface.name])
    if surface.name == "monkey_saddle":
        return lambda: HolomorphicChart(surface, c, radius, 3)
    if surface.separable_parts is not None:
        return lambda: SeparableChart(surface, c, radius)
    return None


def has_closed_form(surface: SurfacePatch) -> bool:
    """Whether ``build_chart`` can use a closed-form chart for this surface."""
    return _closed_factory(surface, np.zeros(2), 1.0) is not None


def build_chart(
    surface: SurfacePatch,
    center: Any,
    radius: float,
    method: str = "auto",
    steps: int = 256,
) -> AsymptoticChart:
    """
    Build an asymptotic chart around ``center`` with ψ(center) = (0, 0).

    Args:
        surface: Hyperbolic graph surface
        center: Chart origin in surface parameters
        radius: Half-size of the patch (g-arclength for traced charts)
        method: ``auto`` (closed form when the catalog has one), ``closed`` or ``ode``
        steps: RK4 steps per radius for traced charts

    Returns:
        Validated chart

    Raises:
        RadiusTooLargeError: If the patch leaves the parameter domain
        BranchError: If a direction field flips branch while tracing
        ChartError: If ``closed`` is requested for a surface without one,
            or a chart invariant fails
    """
    validate_choice(method, "method", CHART_METHODS)
    c = validate_point(center, "center")
    radius = validate_positive(radius, "radius")
    asymptotic_directions_at(surface, c)

    chart: AsymptoticChart
    closed = _closed_factory(surface, c, radius)
    if method == "closed" and closed is None:
        raise ChartError(f"no closed-form chart for surface {surface.name!r}")
    if method != "ode" and closed is not None:
        chart = closed()
    else:
        chart = NetChart(surface, c, radius, steps=steps)
    chart.validate()
    logger.info(
        "built %s chart on %s at %s, radius %g", chart.method, surface.name, tuple(c), radius
    )
    return chart


# Curves in charts
# ============================================================================


@dataclass
class CharCurveImage:
    """Image of a surface curve in chart coordinates."""

    t: np.ndarray
    points: np.ndarray
    tangents: np.ndarray
    signs: tuple[int, int]

    @property
    def noncharacteristic(self) -> bool:
        return self.signs[0] != 0 and self.signs[1] != 0


def curve_image(chart: AsymptoticChart, curve: PlaneCurve, samples: int = 513) -> CharCurveImage:
    """Sample a surface curve in chart coordinates with its tangent signs."""
    t = curve.samples(samples)
    y = chart.forward(curve.point(t))
    dy = np.einsum("...ka,...a->...k", chart.jacobian_inverse(y), curve.derivative(t))
    scale = max(1.0, float(np.max(np.abs(dy))))
    signs = []
    for k in range(2):
        if np.all(dy[:, k] > NONCHAR_TOL * scale):
            signs.append(1)
        elif np.all(dy[:, k] < -NONCHAR_TOL * scale):
            signs.append(-1)
        else:
            signs.append(0)
    return CharCurveImage(t, y, dy, (signs[0], signs[1]))


def normalize_chart_along_curve(
    chart: AsymptoticChart,
    gamma: PlaneCurve,
    beta: PlaneCurve | None = None,
    samples: int = 513,
) -> ReparametrizedChart:
    """
    Reparametrize a chart so that ψ(γ(t)) = (t, −t).

    The reparametrization is φ(y) = (γ1⁻¹(y1), −γ2⁻¹(y2)); when a transversal
    curve β from γ(0) is given and its tangent would point into z1 < 0, the
    swapped variant (γ2⁻¹(y2), −γ1⁻¹(y1)) is used so that β1', β2' > 0.

    Args:
        chart: Asymptotic chart containing γ
        gamma: Curve in surface parameters
        beta: Optional transversal curve starting at γ(0)
        samples: Table size for the reparametrization

    Raises:
        NoncharacteristicError: If γ is characteristic somewhere, is not
            descending (γ1'·γ2' < 0) in chart coordinates, or β cannot be
            made increasing
    """
    image = curve_image(chart, gamma, samples)
    if not image.noncharacteristic:
        raise NoncharacteristicError(
            f"curve {gamma.name!r} is characteristic in the chart", curve=gamma.name
        )
    if image.signs[0] * image.signs[1] > 0:
        raise NoncharacteristicError(
            f"curve {gamma.name!r} ascends in chart coordinates; expected gamma1'·gamma2' < 0",
            curve=gamma.name,
        )
    t, y, dy = image.t, image.points, image.tangents
    phi1 = MonotoneMap(y[:, 0], t, 1.0 / dy[:, 0])
    phi2 = MonotoneMap(y[:, 1], -t, -1.0 / dy[:, 1])
    out = ReparametrizedChart(chart, (phi1, phi2), (0, 1))
    if beta is not None:
        z0 = out.forward(beta.start)
        tangent = out.jacobian_inverse(z0) @ beta.derivative(0.0)
        if tangent[0] < 0 and tangent[1] < 0:
            out = ReparametrizedChart(chart, (phi2.negated(), phi1.negated()), (1, 0))
        elif not (tangent[0] > 0 and tangent[1] > 0):
            raise NoncharacteristicError(
                f"transversal curve {beta.name!r} is not of ascending type in the normalized chart",
                curve=beta.name,
            )
    logger.debug("normalized chart along %s (swapped=%s)", gamma.name, out.src != (0, 1))
    return out


# Normal form
# ============================================================================


@dataclass
class NormalCoefficients:
    """Coefficients of w_z1z2 = f + f0·w + X1·w_z1 + X2·w_z2 at chart points."""

    f: np.ndarray
    f0: np.ndarray
    X1: np.ndarray
    X2: np.ndarray
    leading: np.ndarray
    christoffel: np.ndarray
    points: np.ndarray


def _zero(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    return np.zeros(np.broadcast(x1, x2).shape)


def _zero_vector(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    return np.zeros(np.broadcast(x1, x2).shape + (2,))


class NormalForm:
    """The scalar equation ⟨D²w, Q*Π⟩ = f0·w + X(w) + f in chart coordinates.

    In an asymptotic chart ⟨D²w, Q*Π⟩ = κ̂·(w_12 − Γ̂^c w_c) with leading
    coefficient κ̂ = −2Π(∂1, ∂2)/det G_z = ±2√(−κ/det G_z) (positive when
    Π(∂1, ∂2) < 0) and Γ̂ the Christoffel symbols Γ^c_12 of the chart.
    Dividing through gives f̂ = f/κ̂, f̂0 = f0/κ̂ and X̂ = Γ̂ + X_z/κ̂.
    """

    def __init__(
        self,
        surface: SurfacePatch,
        chart: AsymptoticChart,
        f0: ScalarField | None = None,
        X: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
        f: ScalarField | None = None,
    ) -> None:
        self.surface = surface
        self.chart = chart
        self._f0 = f0 or _zero
        self._X = X or _zero_vector
        self._f = f or _zero
        self._cache: tuple[bytes, NormalCoefficients] | None = None

    def at(self, z1: Any, z2: Any) -> NormalCoefficients:
        """
        Coefficients at chart points.

        Raises:
            DegenerateChartError: If |Π(∂z1, ∂z2)| < 1e-10 somewhere
        """
        z1, z2 = np.broadcast_arrays(np.asarray(z1, dtype=float), np.asarray(z2, dtype=float))
        key = z1.tobytes() + z2.tobytes()
        if self._cache is not None and self._cache[0] == key:
            return self._cache[1]
        z = np.stack([z1, z2], axis=-1)
        x = self.chart.inverse(z)
        J = self.chart.jacobian(z)
        m = self.chart.mixed(z)
        forms = self.surface.forms(x[..., 0], x[..., 1])
        pi12 = forms.second(J[..., :, 0], J[..., :, 1])
        if np.any(np.abs(pi12) < DEGENERATE_PI):
            raise DegenerateChartError("Pi(dz1, dz2) vanishes; the chart is degenerate here")
        Gz = np.swapaxes(J, -1, -2) @ forms.G @ J
        leading = -2.0 * pi12 / np.linalg.det(Gz)
        Jinv = np.linalg.inv(J)
        J1, J2 = J[..., :, 0], J[..., :, 1]
        accel = np.einsum("...abd,...b,...d->...a", forms.christoffel, J1, J2) + m
        christoffel = np.einsum("...ca,...a->...c", Jinv, accel)
        Xx = np.asarray(self._X(x[..., 0], x[..., 1]), dtype=float)
        Xz = np.einsum("...ca,...a->...c", Jinv, Xx)
        lead = leading[..., None]
        Xhat = christoffel + Xz / lead
        coeffs = NormalCoefficients(
            f=np.asarray(self._f(x[..., 0], x[..., 1]), dtype=float) / leading,
            f0=np.asarray(self._f0(x[..., 0], x[..., 1]), dtype=float) / leading,
            X1=Xhat[..., 0],
            X2=Xhat[..., 1],
            leading=leading,
            christoffel=christoffel,
            points=x,
        )
        self._cache = (key, coeffs)
        return coeffs

    def leading(self, z: Any) -> np.ndarray:
        z = _as_points(z)
        return self.at(z[..., 0], z[..., 1]).leading

    def fields(self) -> tuple[ScalarField, ScalarField, tuple[ScalarField, ScalarField]]:
        """(f̂, f̂0, (X̂1, X̂2)) as callables of chart coordinates."""
        return (
            lambda z1, z2: self.at(z1, z2).f,
            lambda z1, z2: self.at(z1, z2).f0,
            (lambda z1, z2: self.at(z1, z2).X1, lambda z1, z2: self.at(z1, z2).X2),
        )


def normal_form(
    surface: SurfacePatch,
    chart: AsymptoticChart,
    f0: ScalarField | None = None,
    X: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None,
    f: ScalarField | None = None,
) -> NormalForm:
    """Normal-form coefficients of the scalar equation in ``chart``."""
    return NormalForm(surface, chart, f0, X, f)


def export_chart(chart: ChartProtocol, n: int = 17) -> dict[str, Any]:
    """Forward and inverse samples of a chart as a JSON-ready dict."""
    n = validate_int(n, "n", 2)
    y = chart.validation_points(n).reshape(-1, 2)
    x = chart.inverse(y)
    return {
        **chart.to_dict(),
        "samples": n,
        "y": y.tolist(),
        "x": x.tolist(),
        "jacobian": chart.jacobian(y).tolist(),
    }
