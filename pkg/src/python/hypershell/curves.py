"""
Plane curves in chart coordinates and the boundary data carried on them.

A curve t ↦ (c1(t), c2(t)), t ∈ [0, t_end], is noncharacteristic for the
normal equation when c1'·c2' ≠ 0, so both components are strictly
monotone and can be inverted by bisection.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .exceptions import ConfigError, NoncharacteristicError
from .protocols import ArrayFn
from .validators import BISECTION_TOL, NONCHAR_TOL


_SIGN_SAMPLES = 257
_BISECTION_STEPS = 80


class PlaneCurve:
    """A regular plane curve on [0, t_end] with analytic or spline derivative.

    Args:
        point: Maps t (array) to points of shape t.shape + (2,)
        derivative: Maps t to tangent vectors of the same shape
        t_end: Parameter length
        name: Label used in reports
    """

    def __init__(
        self, point: ArrayFn, derivative: ArrayFn, t_end: float, name: str = "curve"
    ) -> None:
        if not t_end > 0:
            raise ConfigError(f"curve {name!r} needs t_end > 0, got {t_end}")
        self._point = point
        self._derivative = derivative
        self.t_end = float(t_end)
        self.name = name
        self._linear: tuple[np.ndarray, np.ndarray] | None = None

    def __repr__(self) -> str:
        return f"PlaneCurve({self.name!r}, start={tuple(self.start)}, end={tuple(self.end)})"

    @classmethod
    def line(cls, start: Any, direction: Any, t_end: float = 1.0, name: str = "line") -> PlaneCurve:
        """Straight segment start + t·direction."""
        a = np.asarray(start, dtype=float)
        d = np.asarray(direction, dtype=float)

        def point(t: np.ndarray) -> np.ndarray:
            t = np.asarray(t, dtype=float)
            return a + t[..., None] * d

        def derivative(t: np.ndarray) -> np.ndarray:
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(d, t.shape + (2,)).copy()

        curve = cls(point, derivative, t_end, name)
        curve._linear = (a, d)
        return curve

    @classmethod
    def from_function(
        cls, point: ArrayFn, derivative: ArrayFn, t_end: float, name: str = "curve"
    ) -> PlaneCurve:
        return cls(point, derivative, t_end, name)

    @classmethod
    def from_samples(cls, t: Any, points: Any, name: str = "spline") -> PlaneCurve:
        """Cubic spline through sampled points; t must start at 0."""
        t = np.asarray(t, dtype=float)
        pts = np.asarray(points, dtype=float)
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ConfigError("curve samples need strictly increasing t starting at 0")
        spline = CubicSpline(t, pts, axis=0)
        dspline = spline.derivative()
        return cls(
            lambda s: spline(np.asarray(s, float)),
            lambda s: dspline(np.asarray(s, float)),
            float(t[-1]),
            name,
        )

    def point(self, t: Any) -> np.ndarray:
        return np.asarray(self._point(np.asarray(t, dtype=float)), dtype=float)

    def derivative(self, t: Any) -> np.ndarray:
        return np.asarray(self._derivative(np.asarray(t, dtype=float)), dtype=float)

    @property
    def start(self) -> np.ndarray:
        return self.point(0.0)

    @property
    def end(self) -> np.ndarray:
        return self.point(self.t_end)

    def samples(self, n: int = _SIGN_SAMPLES) -> np.ndarray:
        return np.linspace(0.0, self.t_end, n)

    def signs(self) -> tuple[int, int]:
        """Signs of (c1', c2') if constant on the curve, else raise."""
        d = self.derivative(self.samples())
        scale = max(1.0, float(np.max(np.abs(d))))
        out = []
        for k in range(2):
            comp = d[:, k]
            if np.all(comp > NONCHAR_TOL * scale):
                out.append(1)
            elif np.all(comp < -NONCHAR_TOL * scale):
                out.append(-1)
            else:
                raise NoncharacteristicError(
                    f"curve {self.name!r} is characteristic: component {k + 1} of its tangent "
                    f"changes sign or vanishes",
                    curve=self.name,
                )
        return out[0], out[1]

    def require_signs(self, s1: int, s2: int) -> None:
        signs = self.signs()
        if signs != (s1, s2):
            raise NoncharacteristicError(
                f"curve {self.name!r} has tangent sign pattern {signs}, expected {(s1, s2)}",
                curve=self.name,
            )

    def component_inverse(self, k: int, value: Any, extend: bool = False) -> np.ndarray:
        """Solve c_k(t) = value for t by bisection.

        The component must be strictly monotone. With ``extend`` the curve is
        continued linearly beyond [0, t_end]; otherwise values outside the
        range are clipped to the end parameters.
        """
        v = np.asarray(value, dtype=float)
        if self._linear is not None:
            a, d = self._linear
            return (v - a[k]) / d[k]
        c0 = float(self.point(0.0)[k])
        c1 = float(self.point(self.t_end)[k])
        increasing = c1 > c0
        lo = np.zeros_like(v)
        hi = np.full_like(v, self.t_end)
        for _ in range(_BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            cm = self.point(mid)[..., k]
            go_right = (cm < v) if increasing else (cm > v)
            lo = np.where(go_right, mid, lo)
            hi = np.where(go_right, hi, mid)
            if np.max(hi - lo, initial=0.0) < BISECTION_TOL:
                break
        t = 0.5 * (lo + hi)
        if extend:
            d0 = float(self.derivative(0.0)[k])
            d1 = float(self.derivative(self.t_end)[k])
            below = (v < min(c0, c1)) if increasing else (v > max(c0, c1))
            above = (v > max(c0, c1)) if increasing else (v < min(c0, c1))
            t = np.where(below, (v - c0) / d0, t)
            t = np.where(above, self.t_end + (v - c1) / d1, t)
        return t

    def graph_x2(self, x1: Any) -> np.ndarray:
        """x2 on the curve at abscissa x1."""
        return self.point(self.component_inverse(0, x1))[..., 1]

    def graph_x1(self, x2: Any) -> np.ndarray:
        """x1 on the curve at ordinate x2."""
        return self.point(self.component_inverse(1, x2))[..., 0]


_ONE_SIDED = (-25.0 / 12.0, 4.0, -3.0, 4.0 / 3.0, -0.25)


def tangential_derivative(
    fn: ArrayFn, t: np.ndarray, t_end: float, step: float | None = None
) -> np.ndarray:
    """Fourth-order finite difference of fn on [0, t_end].

    Central five-point stencil inside, one-sided five-point near the ends.
    """
    t = np.asarray(t, dtype=float)
    h = step if step is not None else 1e-3 * t_end
    central = (fn(t - 2 * h) - 8 * fn(t - h) + 8 * fn(t + h) - fn(t + 2 * h)) / (12 * h)
    fwd = sum(c * fn(t + k * h) for k, c in enumerate(_ONE_SIDED)) / h
    bwd = -sum(c * fn(t - k * h) for k, c in enumerate(_ONE_SIDED)) / h
    out = np.where(t - 2 * h < 0.0, fwd, central)
    return np.where(t + 2 * h > t_end, bwd, out)


@dataclass
class CurveData:
    """Cauchy data on a noncharacteristic curve γ.

    ``value(t)`` is w(γ(t)) and ``transverse(t)`` is ∇w·(γ2', −γ1'), the
    derivative along γ' rotated clockwise. ``tangential(t)`` is
    d/dt w(γ(t)); it is differenced from ``value`` when omitted.
    """

    value: ArrayFn
    transverse: ArrayFn
    tangential: Optional[ArrayFn] = None

    @classmethod
    def zero(cls) -> CurveData:
        z: ArrayFn = lambda t: np.zeros_like(np.asarray(t, dtype=float))
        return cls(z, z, z)

    @classmethod
    def from_gradient(
        cls,
        curve: PlaneCurve,
        value_fn: Callable[[np.ndarray], np.ndarray],
        grad_fn: Callable[[np.ndarray], np.ndarray],
    ) -> CurveData:
        """Data of a known field: ``value_fn``/``grad_fn`` act on points (..., 2)."""

        def value(t: np.ndarray) -> np.ndarray:
            return np.asarray(value_fn(curve.point(t)), dtype=float)

        def transverse(t: np.ndarray) -> np.ndarray:
            g = np.asarray(grad_fn(curve.point(t)), dtype=float)
            d = curve.derivative(t)
            return g[..., 0] * d[..., 1] - g[..., 1] * d[..., 0]

        def tangential(t: np.ndarray) -> np.ndarray:
            g = np.asarray(grad_fn(curve.point(t)), dtype=float)
            return np.sum(g * curve.derivative(t), axis=-1)

        return cls(value, transverse, tangential)

    def derivative(self, curve: PlaneCurve, t: Any) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.tangential is not None:
            return np.asarray(self.tangential(t), dtype=float)
        return tangential_derivative(self.value, t, curve.t_end)

    def gradient(self, curve: PlaneCurve, t: Any) -> np.ndarray:
        """(w_x1, w_x2) on the curve, shape t.shape + (2,)."""
        t = np.asarray(t, dtype=float)
        d = curve.derivative(t)
        q0d = self.derivative(curve, t)
        q1 = np.asarray(self.transverse(t), dtype=float)
        n2 = np.sum(d * d, axis=-1)
        w1 = (d[..., 0] * q0d + d[..., 1] * q1) / n2
        w2 = (d[..., 1] * q0d - d[..., 0] * q1) / n2
        return np.stack([w1, w2], axis=-1)
