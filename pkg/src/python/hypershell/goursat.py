#!/usr/bin/env python3
"""
Characteristic (Goursat) solver for the planar normal equation

    w_x1x2 = f + f0·w + X1·w_x1 + X2·w_x2

on the region families E(γ), R(z, a, b), P1(β), P2(β), Ξ1(β, γ), Ξ2(β, γ)
and Φ(β, γ, β̂).

With p = w_x1 and q = w_x2 the equation reads p_x2 = q_x1 = η, so a node
is reached by trapezoidal integration from its left and lower neighbours
or from the boundary curves (the *bases*) that bound its row and column.
The integral operator is iterated to its fixed point (Picard) on square
tiles small enough for the iteration to contract; tiles are processed in
anti-diagonal waves so that every tile sees finished left and lower
neighbours, and tiles of the same wave run concurrently.

Example:
    >>> from hypershell.curves import PlaneCurve
    >>> from hypershell.goursat import GoursatProblem, RegionDescriptor, solve_goursat
    >>> from hypershell.goursat import constant, zero_fn
    >>> region = RegionDescriptor.rect((0.0, 0.0), 1.0, 1.0)
    >>> problem = GoursatProblem(region, f=constant(1.0), p1=zero_fn, p2=zero_fn)
    >>> sol = solve_goursat(problem, spacing=0.1)
    >>> round(float(sol.value_at((1.0, 1.0))), 12)
    1.0
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import RegularGridInterpolator

from .curves import CurveData, PlaneCurve, tangential_derivative
from .exceptions import (
    CompatibilityError,
    ConfigError,
    ContractionError,
    ConvergenceError,
    DomainError,
    GeometryError,
    NoncharacteristicError,
    SolverError,
)
from .protocols import ArrayFn, ScalarField
from .validators import (
    CORNER_TOL,
    DEGENERATE_DIAMETER,
    PICARD_MAX_ITER,
    PICARD_TOL,
    validate_positive,
)

logger = logging.getLogger(__name__)

REGION_KINDS = ("E", "Rect", "P1", "P2", "Xi1", "Xi2", "Phi")

_JUNCTION_TOL = 1e-9
_MASK_TOL = 1e-9
_RATIO_FLOOR = 1e3


def constant(c: float) -> ScalarField:
    """Scalar field with constant value c."""

    def fn(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
        return np.full(np.broadcast(np.asarray(x1), np.asarray(x2)).shape, float(c))

    return fn


def zero_fn(s: np.ndarray) -> np.ndarray:
    return np.zeros_like(np.asarray(s, dtype=float))


ZERO = constant(0.0)


# Regions
# ============================================================================


@dataclass(frozen=True)
class Segment:
    """Piece of a region boundary written as a graph.

    ``axis`` 0: x2 as a function of x1 (lower and upper boundaries);
    ``axis`` 1: x1 as a function of x2 (left boundary). ``base`` names the
    data carried: ``gamma`` (w, p, q), ``beta`` (q), ``beta_hat`` (p),
    ``hedge`` (w, p), ``vedge`` (w, q) or ``free`` (none).
    """

    start: float
    end: float
    axis: int
    base: str
    curve: Optional[PlaneCurve] = None
    level: Optional[float] = None
    data_key: Optional[str] = None

    def position(self, s: np.ndarray) -> np.ndarray:
        if self.curve is None:
            return np.full_like(s, float(self.level))
        if self.axis == 0:
            return self.curve.graph_x2(s)
        return self.curve.graph_x1(s)

    def parameter(self, s: np.ndarray) -> np.ndarray:
        assert self.curve is not None
        return self.curve.component_inverse(self.axis, s)


def _segment_index(segments: Sequence[Segment], s: np.ndarray, tol: float) -> np.ndarray:
    idx = np.full(s.shape, -1, dtype=int)
    for k in reversed(range(len(segments))):
        seg = segments[k]
        inside = (s >= seg.start - tol) & (s <= seg.end + tol)
        idx = np.where(inside, k, idx)
    return idx


def _close(a: Any, b: Any, scale: float = 1.0) -> bool:
    gap = np.linalg.norm(np.asarray(a, float) - np.asarray(b, float))
    return bool(gap <= _JUNCTION_TOL * max(1.0, scale))


@dataclass
class RegionDescriptor:
    """Region of one of the seven kinds, described by its boundaries.

    Use the constructors (:meth:`e`, :meth:`rect`, :meth:`p1`, :meth:`p2`,
    :meth:`xi1`, :meth:`xi2`, :meth:`phi`); they check the sign patterns of
    the curves (γ1' > 0, γ2' < 0 and β1', β2' > 0) and the junctions.
    """

    kind: str
    lower: list[Segment]
    upper: list[Segment]
    left: list[Segment]
    gamma: Optional[PlaneCurve] = None
    beta: Optional[PlaneCurve] = None
    beta_hat: Optional[PlaneCurve] = None
    corner: Optional[tuple[float, float]] = None
    t1: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in REGION_KINDS:
            raise ConfigError(f"unknown region kind {self.kind!r}")
        if self.diameter < DEGENERATE_DIAMETER:
            raise GeometryError(f"region {self.kind} is degenerate (diameter {self.diameter:.3e})")

    @property
    def x1_range(self) -> tuple[float, float]:
        return self.lower[0].start, self.lower[-1].end

    @property
    def x2_range(self) -> tuple[float, float]:
        return self.left[0].start, self.left[-1].end

    @property
    def diameter(self) -> float:
        a, b = self.x1_range
        c, d = self.x2_range
        return math.hypot(b - a, d - c)

    def _graph(self, segments: Sequence[Segment], s: Any) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        idx = _segment_index(segments, s, _MASK_TOL * max(1.0, self.diameter))
        out = np.full(s.shape, np.nan)
        for k, seg in enumerate(segments):
            sel = idx == k
            if np.any(sel):
                out[sel] = seg.position(s[sel])
        return out

    def lower_at(self, x1: Any) -> np.ndarray:
        return self._graph(self.lower, x1)

    def upper_at(self, x1: Any) -> np.ndarray:
        return self._graph(self.upper, x1)

    def left_at(self, x2: Any) -> np.ndarray:
        return self._graph(self.left, x2)

    def contains(self, x1: Any, x2: Any, tol: float = 1e-9) -> np.ndarray:
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        lo = self.lower_at(x1)
        hi = self.upper_at(x1)
        with np.errstate(invalid="ignore"):
            return (x2 >= lo - tol) & (x2 <= hi + tol)

    def breakpoints(self) -> tuple[list[float], list[float]]:
        b1 = {s.start for s in self.lower + self.upper} | {s.end for s in self.lower + self.upper}
        b2 = {s.start for s in self.left} | {s.end for s in self.left}
        return sorted(b1), sorted(b2)

    # Constructors
    # ------------------------------------------------------------------

    @classmethod
    def e(cls, gamma: PlaneCurve) -> RegionDescriptor:
        """E(γ): above γ, below x2 = γ2(0), with γ1' > 0 and γ2' < 0."""
        gamma.require_signs(1, -1)
        g0, g1 = gamma.start, gamma.end
        return cls(
            "E",
            lower=[Segment(g0[0], g1[0], 0, "gamma", gamma)],
            upper=[Segment(g0[0], g1[0], 0, "free", level=g0[1])],
            left=[Segment(g1[1], g0[1], 1, "gamma", gamma)],
            gamma=gamma,
            t1=gamma.t_end,
        )

    @classmethod
    def rect(cls, corner: Sequence[float], a: float, b: float) -> RegionDescriptor:
        """R(z, a, b) = [z1, z1 + a] × [z2, z2 + b] with edge data."""
        z1, z2 = float(corner[0]), float(corner[1])
        a = validate_positive(a, "a")
        b = validate_positive(b, "b")
        return cls(
            "Rect",
            lower=[Segment(z1, z1 + a, 0, "hedge", level=z2)],
            upper=[Segment(z1, z1 + a, 0, "free", level=z2 + b)],
            left=[Segment(z2, z2 + b, 1, "vedge", level=z1)],
            corner=(z1, z2),
        )

    @classmethod
    def p1(cls, beta: PlaneCurve) -> RegionDescriptor:
        """P1(β): below β, above the edge x2 = β2(0); q is given on β."""
        beta.require_signs(1, 1)
        b0, b1 = beta.start, beta.end
        return cls(
            "P1",
            lower=[Segment(b0[0], b1[0], 0, "hedge", level=b0[1])],
            upper=[Segment(b0[0], b1[0], 0, "free", beta)],
            left=[Segment(b0[1], b1[1], 1, "beta", beta, data_key="p")],
            beta=beta,
            corner=(float(b0[0]), float(b0[1])),
        )

    @classmethod
    def p2(cls, beta: PlaneCurve) -> RegionDescriptor:
        """P2(β): above β, right of the edge x1 = β1(0); p is given on β."""
        beta.require_signs(1, 1)
        b0, b1 = beta.start, beta.end
        return cls(
            "P2",
            lower=[Segment(b0[0], b1[0], 0, "beta_hat", beta, data_key="p")],
            upper=[Segment(b0[0], b1[0], 0, "free", level=b1[1])],
            left=[Segment(b0[1], b1[1], 1, "vedge", level=b0[0])],
            beta=beta,
            corner=(float(b0[0]), float(b0[1])),
        )

    @classmethod
    def xi1(cls, beta: PlaneCurve, gamma: PlaneCurve, t1: float | None = None) -> RegionDescriptor:
        """Ξ1(β, γ): E(γ|[0,t1]) topped by the part of P1(β) over it.

        Requires γ(0) = β(0) and γ1(t1) ≤ β1(t_end).
        """
        gamma.require_signs(1, -1)
        beta.require_signs(1, 1)
        t1 = gamma.t_end if t1 is None else float(t1)
        g0, gt = gamma.start, gamma.point(t1)
        b0, b1 = beta.start, beta.end
        if not _close(g0, b0, float(np.max(np.abs(g0)))):
            raise GeometryError(
                "Xi1 needs gamma(0) = beta(0)", gamma0=g0.tolist(), beta0=b0.tolist()
            )
        if gt[0] > b1[0] + _JUNCTION_TOL:
            raise GeometryError("Xi1 needs gamma1(t1) <= beta1(t0)")
        x1_max = float(gt[0])
        top = float(beta.graph_x2(x1_max))
        return cls(
            "Xi1",
            lower=[Segment(g0[0], x1_max, 0, "gamma", gamma)],
            upper=[Segment(g0[0], x1_max, 0, "free", beta)],
            left=[
                Segment(gt[1], g0[1], 1, "gamma", gamma),
                Segment(g0[1], top, 1, "beta", beta, data_key="p"),
            ],
            gamma=gamma,
            beta=beta,
            t1=t1,
        )

    @classmethod
    def xi2(cls, beta: PlaneCurve, gamma: PlaneCurve) -> RegionDescriptor:
        """Ξ2(β, γ): E(γ) continued to the right above β, with γ(t1) = β(0).

        β is a lower boundary here, so its data is p = w_x1.
        """
        gamma.require_signs(1, -1)
        beta.require_signs(1, 1)
        g0, gt = gamma.start, gamma.end
        b0, b1 = beta.start, beta.end
        if not _close(gt, b0, float(np.max(np.abs(gt)))):
            raise GeometryError("Xi2 needs gamma(t1) = beta(0)")
        top = float(g0[1])
        if b1[1] >= top:
            x1_max = float(beta.graph_x1(top))
        else:
            x1_max = float(b1[0])
        return cls(
            "Xi2",
            lower=[
                Segment(g0[0], gt[0], 0, "gamma", gamma),
                Segment(gt[0], x1_max, 0, "beta_hat", beta, data_key="p"),
            ],
            upper=[Segment(g0[0], x1_max, 0, "free", level=top)],
            left=[Segment(gt[1], top, 1, "gamma", gamma)],
            gamma=gamma,
            beta=beta,
            t1=gamma.t_end,
        )

    @classmethod
    def phi(cls, beta: PlaneCurve, gamma: PlaneCurve, beta_hat: PlaneCurve) -> RegionDescriptor:
        """Φ(β, γ, β̂): bounded by γ below, β on the left and β̂ on the right.

        Requires γ(0) = β(0) and γ(t1) = β̂(0); the top is the level β2(t0).
        """
        gamma.require_signs(1, -1)
        beta.require_signs(1, 1)
        beta_hat.require_signs(1, 1)
        g0, gt = gamma.start, gamma.end
        b0, b1 = beta.start, beta.end
        c0, c1 = beta_hat.start, beta_hat.end
        if not _close(g0, b0, float(np.max(np.abs(g0)))):
            raise GeometryError("Phi needs gamma(0) = beta(0)")
        if not _close(gt, c0, float(np.max(np.abs(gt)))):
            raise GeometryError("Phi needs gamma(t1) = beta_hat(0)")
        top = float(b1[1])
        x1_max = float(beta_hat.graph_x1(top)) if c1[1] >= top else float(c1[0])
        upper = []
        split = min(float(b1[0]), x1_max)
        upper.append(Segment(g0[0], split, 0, "free", beta))
        if split < x1_max:
            upper.append(Segment(split, x1_max, 0, "free", level=top))
        top_left = float(beta.graph_x2(split))
        return cls(
            "Phi",
            lower=[
                Segment(g0[0], gt[0], 0, "gamma", gamma),
                Segment(gt[0], x1_max, 0, "beta_hat", beta_hat, data_key="p_hat"),
            ],
            upper=upper,
            left=[
                Segment(gt[1], g0[1], 1, "gamma", gamma),
                Segment(g0[1], top_left, 1, "beta", beta, data_key="p"),
            ],
            gamma=gamma,
            beta=beta,
            beta_hat=beta_hat,
            t1=gamma.t_end,
        )


# Problems and solutions
# ============================================================================


@dataclass
class GoursatProblem:
    """Normal equation coefficients, region and characteristic data.

    Attributes:
        region: Region descriptor
        f, f0: Scalar fields in chart coordinates
        X: Pair of scalar fields (X1, X2)
        gamma_data: Cauchy data (q0, q1) on γ
        p: Trace on β (w_x2 for P1, Ξ1, Φ; w_x1 for P2, Ξ2), function of t
        p_hat: w_x1 on β̂ (Φ only), function of t
        p1, p2: w on the horizontal / vertical edge, functions of x1 / x2
        dp1, dp2: Their derivatives (differenced when omitted)
        clip: Optional keep-mask on nodes; only removes nodes no kept node depends on
    """

    region: RegionDescriptor
    f: ScalarField = ZERO
    f0: ScalarField = ZERO
    X: tuple[ScalarField, ScalarField] = (ZERO, ZERO)
    gamma_data: Optional[CurveData] = None
    p: Optional[ArrayFn] = None
    p_hat: Optional[ArrayFn] = None
    p1: Optional[ArrayFn] = None
    p2: Optional[ArrayFn] = None
    dp1: Optional[ArrayFn] = None
    dp2: Optional[ArrayFn] = None
    clip: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None

    def __post_init__(self) -> None:
        needs = {
            "gamma": ("gamma_data",),
            "beta": ("p",),
            "beta_hat": (),
            "hedge": ("p1",),
            "vedge": ("p2",),
            "free": (),
        }
        for seg in self.region.lower + self.region.left:
            keys = needs[seg.base] + ((seg.data_key,) if seg.data_key else ())
            for key in keys:
                if getattr(self, key) is None:
                    raise ConfigError(f"region {self.region.kind} needs data {key!r}")

    def coefficient_bound(self, x1: np.ndarray, x2: np.ndarray) -> float:
        """sup(|f0| + |X1| + |X2|) over the given points."""
        total = np.abs(self.f0(x1, x2)) + np.abs(self.X[0](x1, x2)) + np.abs(self.X[1](x1, x2))
        return float(np.max(total, initial=0.0))

    def eta(self, x1: np.ndarray, x2: np.ndarray, w: Any, p: Any, q: Any) -> np.ndarray:
        return self.f(x1, x2) + self.f0(x1, x2) * w + self.X[0](x1, x2) * p + self.X[1](x1, x2) * q


@dataclass
class GoursatDiagnostics:
    """Iteration and consistency summary of a Goursat solve."""

    iterations: int = 0
    max_block_iterations: int = 0
    max_ratio: float = 0.0
    epsilon_t: float = math.inf
    coefficient_bound: float = 0.0
    tile_size: int = 0
    n_tiles: int = 0
    schedule: list[list[tuple[int, int]]] = field(default_factory=list)
    seam_residual: float = 0.0
    fd_residual: float = 0.0
    ratio_history: list[float] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "iterations": self.iterations,
            "max_block_iterations": self.max_block_iterations,
            "max_ratio": self.max_ratio,
            "epsilon_t": self.epsilon_t,
            "coefficient_bound": self.coefficient_bound,
            "tile_size": self.tile_size,
            "n_tiles": self.n_tiles,
            "waves": len(self.schedule),
            "seam_residual": self.seam_residual,
            "fd_residual": self.fd_residual,
        }


@dataclass
class SolutionGrid:
    """Solution on a characteristic-aligned lattice.

    ``w``, ``p`` (= w_x1), ``q`` (= w_x2) and ``eta`` (= w_x1x2) are
    (n1, n2) arrays, NaN outside ``mask``.
    """

    x1: np.ndarray
    x2: np.ndarray
    mask: np.ndarray
    w: np.ndarray
    p: np.ndarray
    q: np.ndarray
    eta: np.ndarray
    kind: str
    diagnostics: GoursatDiagnostics
    region: Optional[RegionDescriptor] = None
    _filled: dict[str, np.ndarray] = field(default_factory=dict, repr=False)

    def values(self, name: str) -> np.ndarray:
        if name not in ("w", "p", "q", "eta"):
            raise ConfigError(f"unknown solution field {name!r}")
        return getattr(self, name)

    def filled(self, name: str) -> np.ndarray:
        """Field with ghost values outside the mask (linear extrapolation)."""
        if name not in self._filled:
            self._filled[name] = _ghost_fill(self.values(name), self.mask, self.x1, self.x2)
        return self._filled[name]

    def interpolate(self, points: Any, name: str = "w") -> np.ndarray:
        """Bilinear interpolation of a field at points (..., 2)."""
        pts = np.asarray(points, dtype=float)
        interp = RegularGridInterpolator(
            (self.x1, self.x2),
            self.filled(name),
            method="linear",
            bounds_error=False,
            fill_value=None,
        )
        return interp(pts.reshape(-1, 2)).reshape(pts.shape[:-1])

    def value_at(self, point: Any) -> float:
        return float(self.interpolate(np.asarray(point, dtype=float)[None, :], "w")[0])

    def nodes(self) -> np.ndarray:
        g1, g2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        return np.stack([g1, g2], axis=-1)

    def sup_error(self, exact: ScalarField, name: str = "w") -> float:
        g = self.nodes()
        e = np.abs(self.values(name) - exact(g[..., 0], g[..., 1]))
        return float(np.max(e[self.mask]))

    @property
    def spacing(self) -> float:
        return float(max(np.max(np.diff(self.x1)), np.max(np.diff(self.x2))))

    def to_rows(self) -> list[tuple[float, ...]]:
        """Rows (x1, x2, w, w_x1, w_x2, w_x1x2) of the masked nodes."""
        rows = []
        for i, j in zip(*np.nonzero(self.mask)):
            rows.append(
                (self.x1[i], self.x2[j], self.w[i, j], self.p[i, j], self.q[i, j], self.eta[i, j])
            )
        return rows

    def to_dict(self) -> dict[str, Any]:
        return {
            "region_kind": self.kind,
            "shape": [int(self.x1.size), int(self.x2.size)],
            "nodes": int(np.count_nonzero(self.mask)),
            "spacing": self.spacing,
            "diagnostics": self.diagnostics.to_dict(),
        }


CSV_HEADER = ("x1", "x2", "w", "w_x1", "w_x2", "w_x1x2")


def _extend_lines(out: np.ndarray, axis: int, coords: np.ndarray, constant: bool) -> np.ndarray:
    moved = np.moveaxis(out, axis, 1)
    for k in range(moved.shape[0]):
        line = moved[k]
        known = np.nonzero(np.isfinite(line))[0]
        if known.size == 0 or known.size == line.size:
            continue
        if known.size == 1:
            if constant:
                line[~np.isfinite(line)] = line[known[0]]
            continue
        lo, hi = known[0], known[-1]
        c = coords
        s_lo = (line[known[1]] - line[lo]) / (c[known[1]] - c[lo])
        s_hi = (line[hi] - line[known[-2]]) / (c[hi] - c[known[-2]])
        line[:lo] = line[lo] + s_lo * (c[:lo] - c[lo])
        line[hi + 1 :] = line[hi] + s_hi * (c[hi + 1 :] - c[hi])
    return np.moveaxis(moved, 1, axis)


def _ghost_fill(values: np.ndarray, mask: np.ndarray, x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
    """Extend a masked field linearly along columns, then rows, then columns.

    Lines with a single known node (corners of the region) are extended
    from the other direction first; a constant fill is the last resort.
    """
    out = np.where(mask, values, np.nan)
    for axis, coords in ((1, x2), (0, x1), (1, x2)):
        out = _extend_lines(out, axis, coords, constant=False)
    for axis, coords in ((1, x2), (0, x1)):
        out = _extend_lines(out, axis, coords, constant=True)
    return np.nan_to_num(out, nan=0.0)


# Lattice
# ============================================================================


def _axis(breaks: Sequence[float], spacing: float) -> np.ndarray:
    pts: list[float] = []
    for b in sorted(breaks):
        if not pts or b - pts[-1] > 1e-12 * max(1.0, abs(b)):
            pts.append(float(b))
    nodes = [pts[0]]
    for a, b in zip(pts[:-1], pts[1:]):
        n = max(1, int(math.ceil((b - a) / spacing - 1e-9)))
        nodes.extend(np.linspace(a, b, n + 1)[1:].tolist())
    return np.asarray(nodes)


@dataclass
class _Base:
    delta: np.ndarray
    w: np.ndarray
    p: np.ndarray
    q: np.ndarray
    eta: np.ndarray


class _Lattice:
    """Lattice, mask, base data and coefficients of one problem."""

    def __init__(self, problem: GoursatProblem, spacing: float) -> None:
        region = problem.region
        b1, b2 = region.breakpoints()
        lo_all = region.lower_at(np.asarray(b1))
        hi_all = region.upper_at(np.asarray(b1))
        b2 = sorted(set(b2) | {float(np.nanmin(lo_all)), float(np.nanmax(hi_all))})
        self.x1 = _axis(b1, spacing)
        self.x2 = _axis(b2, spacing)
        self.tol = _MASK_TOL * spacing
        n1, n2 = self.x1.size, self.x2.size
        self.h1 = np.concatenate([[np.nan], np.diff(self.x1)])
        self.h2 = np.concatenate([[np.nan], np.diff(self.x2)])
        self.h_max = float(max(np.max(np.diff(self.x1)), np.max(np.diff(self.x2))))

        lo = region.lower_at(self.x1)
        hi = region.upper_at(self.x1)
        G1, G2 = np.meshgrid(self.x1, self.x2, indexing="ij")
        with np.errstate(invalid="ignore"):
            mask = (G2 >= lo[:, None] - self.tol) & (G2 <= hi[:, None] + self.tol)
        mask &= np.isfinite(lo)[:, None]
        if problem.clip is not None and np.any(mask):
            keep = np.zeros_like(mask)
            keep[mask] = np.asarray(problem.clip(G1[mask], G2[mask]), dtype=bool)
            mask &= keep
        self.mask = mask
        self.G1, self.G2 = G1, G2
        self._check_contiguous()

        self.jlo = np.array([np.argmax(mask[i]) if mask[i].any() else -1 for i in range(n1)])
        self.jhi = np.array(
            [n2 - 1 - np.argmax(mask[i, ::-1]) if mask[i].any() else -1 for i in range(n1)]
        )
        self.ilo = np.array([np.argmax(mask[:, j]) if mask[:, j].any() else -1 for j in range(n2)])

        self.F = np.zeros((n1, n2))
        self.F0 = np.zeros((n1, n2))
        self.XA = np.zeros((n1, n2))
        self.XB = np.zeros((n1, n2))
        m1, m2 = G1[mask], G2[mask]
        if m1.size:
            self.F[mask] = problem.f(m1, m2)
            self.F0[mask] = problem.f0(m1, m2)
            self.XA[mask] = problem.X[0](m1, m2)
            self.XB[mask] = problem.X[1](m1, m2)
        self.C = float(np.max(np.abs(self.F0) + np.abs(self.XA) + np.abs(self.XB), initial=0.0))

        self.col = self._bases(problem, region.lower, self.x1, self.jlo, self.x2, lower=True)
        self.row = self._bases(problem, region.left, self.x2, self.ilo, self.x1, lower=False)
        self._fixed()

    def _check_contiguous(self) -> None:
        for axis in (0, 1):
            m = self.mask if axis == 0 else self.mask.T
            for k in range(m.shape[0]):
                idx = np.nonzero(m[k])[0]
                if idx.size and idx[-1] - idx[0] + 1 != idx.size:
                    raise SolverError("region lattice is not convex along characteristics")

    def _bases(
        self,
        problem: GoursatProblem,
        segments: Sequence[Segment],
        coords: np.ndarray,
        first: np.ndarray,
        across: np.ndarray,
        lower: bool,
    ) -> _Base:
        n = coords.size
        nan = np.full(n, np.nan)
        base = _Base(np.full(n, np.nan), nan.copy(), nan.copy(), nan.copy(), nan.copy())
        active = first >= 0
        if not np.any(active):
            return base
        idx = _segment_index(segments, coords, self.tol)
        for k, seg in enumerate(segments):
            sel = active & (idx == k)
            if not np.any(sel):
                continue
            s = coords[sel]
            pos = seg.position(s)
            base.delta[sel] = across[first[sel]] - pos
            w, p, q = _segment_data(problem, seg, s)
            base.w[sel], base.p[sel], base.q[sel] = w, p, q
            if seg.base == "gamma":
                x1, x2 = (s, pos) if lower else (pos, s)
                base.eta[sel] = problem.eta(x1, x2, w, p, q)
        missing = active & ~np.isfinite(base.delta)
        if np.any(missing):
            raise GeometryError("lattice nodes are not covered by the region boundary")
        if np.any(base.delta[active] < -10 * self.tol) or np.any(
            base.delta[active] > self.h_max + 10 * self.tol
        ):
            raise SolverError("boundary base is not adjacent to the first lattice node")
        base.delta = np.maximum(base.delta, 0.0)
        return base

    def _fixed(self) -> None:
        shape = self.mask.shape
        self.fixed = {k: np.zeros(shape, dtype=bool) for k in ("w", "p", "q")}
        self.fixed_val = {k: np.zeros(shape) for k in ("w", "p", "q")}
        for j, i in enumerate(self.ilo):
            if i >= 0 and self.row.delta[j] <= self.tol:
                for k in ("w", "p", "q"):
                    v = getattr(self.row, k)[j]
                    if np.isfinite(v):
                        self.fixed[k][i, j] = True
                        self.fixed_val[k][i, j] = v
        for i, j in enumerate(self.jlo):
            if j >= 0 and self.col.delta[i] <= self.tol:
                for k in ("w", "p", "q"):
                    v = getattr(self.col, k)[i]
                    if np.isfinite(v):
                        self.fixed[k][i, j] = True
                        self.fixed_val[k][i, j] = v


def _shifted(fn: ArrayFn, start: float) -> ArrayFn:
    def shifted(tau: np.ndarray) -> np.ndarray:
        return np.asarray(fn(start + tau), float)

    return shifted


def _segment_data(
    problem: GoursatProblem, seg: Segment, s: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    nan = np.full(s.shape, np.nan)
    if seg.base == "gamma":
        assert seg.curve is not None and problem.gamma_data is not None
        t = seg.parameter(s)
        grad = problem.gamma_data.gradient(seg.curve, t)
        return np.asarray(problem.gamma_data.value(t), float), grad[..., 0], grad[..., 1]
    if seg.base in ("beta", "beta_hat"):
        data = getattr(problem, seg.data_key or "p")
        values = np.asarray(data(seg.parameter(s)), dtype=float)
        return (nan, nan, values) if seg.base == "beta" else (nan, values, nan)
    if seg.base in ("hedge", "vedge"):
        fn = problem.p1 if seg.base == "hedge" else problem.p2
        dfn = problem.dp1 if seg.base == "hedge" else problem.dp2
        assert fn is not None
        w = np.asarray(fn(s), dtype=float)
        if dfn is not None:
            d = np.asarray(dfn(s), dtype=float)
        else:
            start, length = seg.start, seg.end - seg.start
            d = tangential_derivative(_shifted(fn, start), s - start, length)
        return (w, d, nan) if seg.base == "hedge" else (w, nan, d)
    return nan, nan, nan


# Marching
# ============================================================================


class _State:
    def __init__(self, lat: _Lattice) -> None:
        shape = lat.mask.shape
        self.W = np.zeros(shape)
        self.P = np.zeros(shape)
        self.Q = np.zeros(shape)
        self.ETA = lat.F.copy()


def _step(
    value: np.ndarray, delta: np.ndarray, slope_v: np.ndarray, slope: np.ndarray
) -> np.ndarray:
    """value + ∫ over a partial step δ, trapezoid when both slopes are known."""
    trap = value + 0.5 * delta * (slope_v + slope)
    rect = value + delta * slope
    return np.where(np.isfinite(slope_v), trap, rect)


def _march_column(lat: _Lattice, st: _State, i: int, a: int, b: int) -> float:
    """One Picard sweep of column i, rows a..b; returns the sup change."""
    rows = np.arange(a, b + 1)
    eta = st.ETA[i, rows]

    # q from the left neighbour or the row base
    q_new = np.empty(rows.size)
    has_left = lat.mask[i - 1, rows] if i > 0 else np.zeros(rows.size, dtype=bool)
    if i > 0:
        q_left = st.Q[i - 1, rows] + 0.5 * lat.h1[i] * (st.ETA[i - 1, rows] + eta)
        q_new[:] = q_left
    rb = lat.row
    q_base = _step(rb.q[rows], rb.delta[rows], rb.eta[rows], eta)
    q_new = np.where(has_left, q_new, q_base)
    q_new = np.where(lat.fixed["q"][i, rows], lat.fixed_val["q"][i, rows], q_new)

    # p upward from the anchor
    inc = np.zeros(rows.size)
    inc[1:] = 0.5 * lat.h2[rows[1:]] * (eta[:-1] + eta[1:])
    if a > lat.jlo[i]:
        p0 = st.P[i, a - 1] + 0.5 * lat.h2[a] * (st.ETA[i, a - 1] + eta[0])
    elif lat.fixed["p"][i, a]:
        p0 = lat.fixed_val["p"][i, a]
    else:
        cb = lat.col
        p0 = float(_step(cb.p[i : i + 1], cb.delta[i : i + 1], cb.eta[i : i + 1], eta[:1])[0])
    p_new = p0 + np.cumsum(inc)
    p_new = np.where(lat.fixed["p"][i, rows], lat.fixed_val["p"][i, rows], p_new)

    # w upward from the anchor
    inc_w = np.zeros(rows.size)
    inc_w[1:] = 0.5 * lat.h2[rows[1:]] * (q_new[:-1] + q_new[1:])
    w0 = _anchor_w(lat, st, i, a, q_new[0], p_new[0])
    w_new = w0 + np.cumsum(inc_w)
    w_new = np.where(lat.fixed["w"][i, rows], lat.fixed_val["w"][i, rows], w_new)

    if not all(np.all(np.isfinite(v)) for v in (q_new, p_new, w_new)):
        raise SolverError(f"missing boundary data for lattice column {i}")

    change = max(
        float(np.max(np.abs(w_new - st.W[i, rows]))),
        float(np.max(np.abs(p_new - st.P[i, rows]))),
        float(np.max(np.abs(q_new - st.Q[i, rows]))),
    )
    st.W[i, rows], st.P[i, rows], st.Q[i, rows] = w_new, p_new, q_new
    return change


def _anchor_w(lat: _Lattice, st: _State, i: int, a: int, q: float, p: float) -> float:
    if a > lat.jlo[i]:
        return float(st.W[i, a - 1] + 0.5 * lat.h2[a] * (st.Q[i, a - 1] + q))
    if lat.fixed["w"][i, a]:
        return float(lat.fixed_val["w"][i, a])
    cb = lat.col
    if np.isfinite(cb.w[i]):
        qv = cb.q[i]
        step = 0.5 * cb.delta[i] * (qv + q) if np.isfinite(qv) else cb.delta[i] * q
        return float(cb.w[i] + step)
    if i > 0 and lat.mask[i - 1, a]:
        return float(st.W[i - 1, a] + 0.5 * lat.h1[i] * (st.P[i - 1, a] + p))
    rb = lat.row
    if lat.ilo[a] == i and np.isfinite(rb.w[a]):
        pv = rb.p[a]
        step = 0.5 * rb.delta[a] * (pv + p) if np.isfinite(pv) else rb.delta[a] * p
        return float(rb.w[a] + step)
    raise SolverError(f"no value of w reaches lattice node ({i}, {a})")


@dataclass
class _BlockResult:
    iterations: int
    max_ratio: float


def _solve_block(lat: _Lattice, st: _State, i0: int, i1: int, j0: int, j1: int) -> _BlockResult:
    cols = []
    for i in range(i0, min(i1, lat.mask.shape[0])):
        if lat.jlo[i] < 0:
            continue
        a, b = max(lat.jlo[i], j0), min(lat.jhi[i], j1 - 1)
        if a <= b:
            cols.append((i, a, b))
    if not cols:
        return _BlockResult(0, 0.0)

    prev = math.inf
    max_ratio = 0.0
    for it in range(1, PICARD_MAX_ITER + 1):
        change = 0.0
        for i, a, b in cols:
            change = max(change, _march_column(lat, st, i, a, b))
        scale = 1.0
        for i, a, b in cols:
            sl = slice(a, b + 1)
            st.ETA[i, sl] = (
                lat.F[i, sl]
                + lat.F0[i, sl] * st.W[i, sl]
                + lat.XA[i, sl] * st.P[i, sl]
                + lat.XB[i, sl] * st.Q[i, sl]
            )
            scale = max(
                scale,
                float(np.max(np.abs(st.W[i, sl]))),
                float(np.max(np.abs(st.P[i, sl]))),
                float(np.max(np.abs(st.Q[i, sl]))),
            )
        tol = PICARD_TOL * scale
        if it > 1 and math.isfinite(prev) and prev > _RATIO_FLOOR * tol:
            max_ratio = max(max_ratio, change / prev)
        if it > 1 and change <= tol:
            return _BlockResult(it, max_ratio)
        if not math.isfinite(change):
            break
        prev = change
    raise ConvergenceError(
        f"Picard iteration did not converge in {PICARD_MAX_ITER} iterations "
        f"(block rows {j0}..{j1 - 1}, columns {i0}..{i1 - 1})"
    )


def epsilon_t(C: float) -> float:
    """Largest λ with C·max(λ, λ²) ≤ 1/2."""
    if C <= 0.0:
        return math.inf
    if C <= 0.5:
        return math.sqrt(1.0 / (2.0 * C))
    return 1.0 / (2.0 * C)


def _gate(C: float, lam: float) -> bool:
    return C * max(lam, lam * lam) <= 0.5 + 1e-12


def solve_goursat(
    problem: GoursatProblem,
    spacing: float = 0.05,
    *,
    epsilon_override: float | None = None,
    threads: int | None = None,
    single_block: bool = False,
) -> SolutionGrid:
    """
    Solve the normal equation on the problem's region.

    Args:
        problem: Coefficients, region and boundary data
        spacing: Target lattice spacing
        epsilon_override: Tile extent to use instead of the adaptive ε_T
            (must not exceed it)
        threads: Worker threads per wave (defaults to the runtime setting)
        single_block: Solve the whole region as one Picard block

    Returns:
        :class:`SolutionGrid` with diagnostics

    Raises:
        ContractionError: If a block fails the contraction gate
        ConvergenceError: If the Picard iteration does not converge
    """
    from .config import resolve_threads

    spacing = validate_positive(spacing, "spacing")
    lat = _Lattice(problem, spacing)
    st = _State(lat)
    n1, n2 = lat.mask.shape
    eps = epsilon_t(lat.C)
    if epsilon_override is not None:
        eps = min(eps, validate_positive(epsilon_override, "epsilon_t"))
    diag = GoursatDiagnostics(epsilon_t=eps, coefficient_bound=lat.C)

    if single_block:
        extent = max(lat.x1[-1] - lat.x1[0], lat.x2[-1] - lat.x2[0])
        if not _gate(lat.C, extent):
            raise ContractionError(
                f"region extent {extent:.3e} fails the contraction gate (C = {lat.C:.3e})",
                extent=extent,
                coefficient_bound=lat.C,
            )
        m = max(n1, n2)
    else:
        m = max(n1, n2) if math.isinf(eps) else max(1, int(math.floor(eps / lat.h_max + 1e-9)))
        if not _gate(lat.C, m * lat.h_max):
            raise ContractionError(
                f"lattice spacing {lat.h_max:.3e} too coarse for the contraction gate "
                f"(epsilon_t = {eps:.3e})",
                spacing=lat.h_max,
                epsilon_t=eps,
            )
    diag.tile_size = m

    tiles: dict[int, list[tuple[int, int]]] = {}
    for I in range(math.ceil(n1 / m)):
        for J in range(math.ceil(n2 / m)):
            if lat.mask[I * m : (I + 1) * m, J * m : (J + 1) * m].any():
                tiles.setdefault(I + J, []).append((I, J))
    diag.schedule = [tiles[k] for k in sorted(tiles)]
    diag.n_tiles = sum(len(w) for w in diag.schedule)
    logger.debug(
        "goursat %s: lattice %dx%d, C=%.3e, eps=%.3e, tile=%d, %d tiles in %d waves",
        problem.region.kind, n1, n2, lat.C, eps, m, diag.n_tiles, len(diag.schedule),
    )

    workers = resolve_threads(threads)

    def run(tile: tuple[int, int]) -> _BlockResult:
        I, J = tile
        return _solve_block(lat, st, I * m, (I + 1) * m, J * m, (J + 1) * m)

    with ThreadPoolExecutor(max_workers=workers) as pool:
        for wave in diag.schedule:
            if len(wave) > 1 and workers > 1:
                results = list(pool.map(run, wave))
            else:
                results = [run(t) for t in wave]
            for r in results:
                diag.iterations += r.iterations
                diag.max_block_iterations = max(diag.max_block_iterations, r.iterations)
                diag.max_ratio = max(diag.max_ratio, r.max_ratio)
                diag.ratio_history.append(r.max_ratio)

    nan = np.where(lat.mask, 0.0, np.nan)
    sol = SolutionGrid(
        lat.x1,
        lat.x2,
        lat.mask,
        st.W + nan,
        st.P + nan,
        st.Q + nan,
        st.ETA + nan,
        problem.region.kind,
        diag,
        problem.region,
    )
    diag.fd_residual = _fd_residual(sol)
    if problem.region.kind in ("Xi1", "Xi2", "Phi", "Rect"):
        diag.seam_residual = check_compatibility_order1(problem).max_residual
    return sol


def _fd_residual(sol: SolutionGrid) -> float:
    """max |central difference of p along x2 − η| at interior nodes."""
    m = sol.mask
    inner = m[:, 1:-1] & m[:, :-2] & m[:, 2:]
    if not np.any(inner):
        return 0.0
    h = sol.x2[2:] - sol.x2[:-2]
    dp = (sol.p[:, 2:] - sol.p[:, :-2]) / h[None, :]
    r = np.abs(dp - sol.eta[:, 1:-1])
    return float(np.max(r[inner]))


# Public entry points per region family
# ============================================================================


def picard_solve_small(problem: GoursatProblem, spacing: float = 0.05) -> SolutionGrid:
    """
    Solve on a region small enough for a single contracting Picard block.

    Raises:
        ContractionError: If C_T·max(λ, λ²) > 1/2 for the region extent λ;
            the caller is expected to subdivide
    """
    return solve_goursat(problem, spacing, single_block=True, threads=1)


def _require_kind(problem: GoursatProblem, kinds: Sequence[str]) -> None:
    if problem.region.kind not in kinds:
        raise ConfigError(f"expected region kind in {tuple(kinds)}, got {problem.region.kind!r}")


def solve_on_E(problem: GoursatProblem, spacing: float = 0.05, **kwargs: Any) -> SolutionGrid:
    """Solve on E(γ) by subdividing into sub-E pieces and rectangles."""
    _require_kind(problem, ("E",))
    return solve_goursat(problem, spacing, **kwargs)


def solve_on_rect(problem: GoursatProblem, spacing: float = 0.05, **kwargs: Any) -> SolutionGrid:
    """Solve on R(z, a, b) or P1(β)/P2(β).

    Raises:
        CompatibilityError: If the rectangle corner data disagree
    """
    _require_kind(problem, ("Rect", "P1", "P2"))
    if problem.region.kind == "Rect":
        report = check_compatibility_order1(problem)
        if not report.holds:
            raise CompatibilityError(
                f"corner data mismatch {report.max_residual:.3e}", residual=report.max_residual
            )
    return solve_goursat(problem, spacing, **kwargs)


solve_on_P = solve_on_rect


def solve_on_composite(
    problem: GoursatProblem, spacing: float = 0.05, **kwargs: Any
) -> SolutionGrid:
    """Solve on Ξ1, Ξ2 or Φ after checking order-1 compatibility.

    Raises:
        CompatibilityError: If a junction fails the order-1 condition
    """
    _require_kind(problem, ("Xi1", "Xi2", "Phi"))
    report = check_compatibility_order1(problem)
    if not report.holds:
        worst = max(report.junctions, key=lambda j: abs(j.residual))
        raise CompatibilityError(
            f"order-1 compatibility fails at {worst.name} junction (residual {worst.residual:.3e})",
            junction=worst.name,
            residual=worst.residual,
        )
    return solve_goursat(problem, spacing, **kwargs)


# Compatibility
# ============================================================================


@dataclass
class JunctionCheck:
    name: str
    point: tuple[float, float]
    residual: float
    holds: bool


@dataclass
class CompatibilityReport:
    """Per-junction order-1 compatibility residuals."""

    junctions: list[JunctionCheck]

    @property
    def holds(self) -> bool:
        return all(j.holds for j in self.junctions)

    @property
    def max_residual(self) -> float:
        return max((abs(j.residual) for j in self.junctions), default=0.0)

    def to_dict(self) -> dict[str, Any]:
        return {
            "holds": self.holds,
            "max_residual": self.max_residual,
            "junctions": [
                {"name": j.name, "point": list(j.point), "residual": j.residual, "holds": j.holds}
                for j in self.junctions
            ],
        }


def _value(fn: ArrayFn, t: float) -> float:
    return float(np.asarray(fn(np.asarray(t))))


def _junction(
    name: str, problem: GoursatProblem, t: float, trace: float, transposed: bool
) -> JunctionCheck:
    gamma = problem.region.gamma
    data = problem.gamma_data
    assert gamma is not None and data is not None
    d = gamma.derivative(t)
    q0d = float(data.derivative(gamma, np.asarray(t)))
    q1 = _value(data.transverse, t)
    n2 = float(d @ d)
    if transposed:
        residual = n2 * trace - (d[0] * q0d + d[1] * q1)
    else:
        residual = n2 * trace - (d[1] * q0d - d[0] * q1)
    dmax = float(np.max(np.abs(d)))
    scale = max(1.0, abs(n2 * trace), abs(q0d) * dmax, abs(q1) * dmax)
    point = tuple(float(v) for v in gamma.point(t))
    holds = abs(residual) <= CORNER_TOL * scale
    return JunctionCheck(name, point, float(residual), holds)  # type: ignore[arg-type]


def check_compatibility_order1(problem: GoursatProblem) -> CompatibilityReport:
    """
    Order-1 compatibility at the junctions of a composite region.

    At a β junction (β a left boundary) the condition is
    |γ'|²·p(0) = γ2'·q0' − γ1'·q1; at a β̂ junction (β̂ a lower boundary)
    |γ'|²·p̂(0) = γ1'·q0' + γ2'·q1. Rectangles report their corner mismatch.
    """
    region = problem.region
    checks: list[JunctionCheck] = []
    if region.kind == "Rect":
        assert region.corner is not None and problem.p1 is not None and problem.p2 is not None
        z1, z2 = region.corner
        p1 = _value(problem.p1, z1)
        r = p1 - _value(problem.p2, z2)
        scale = max(1.0, abs(p1))
        checks.append(JunctionCheck("corner", (z1, z2), r, abs(r) <= CORNER_TOL * scale))
    if region.kind in ("Xi1", "Phi"):
        assert problem.p is not None
        checks.append(_junction("beta", problem, 0.0, _value(problem.p, 0.0), False))
    if region.kind == "Xi2":
        assert problem.p is not None and region.t1 is not None
        checks.append(_junction("beta_hat", problem, region.t1, _value(problem.p, 0.0), True))
    if region.kind == "Phi":
        assert problem.p_hat is not None and region.t1 is not None
        checks.append(_junction("beta_hat", problem, region.t1, _value(problem.p_hat, 0.0), True))
    return CompatibilityReport(checks)


# Trace functional
# ============================================================================


@dataclass
class TraceReport:
    """Trace functional Γ(γ, w) and the interior norms it is compared with."""

    gamma: float
    w22_norm_sq: float
    f_w12_norm_sq: float

    @property
    def ratio(self) -> float:
        denom = self.w22_norm_sq + self.f_w12_norm_sq
        return self.gamma / denom if denom > 0 else 0.0

    def to_dict(self) -> dict[str, float]:
        return {
            "gamma": self.gamma,
            "w22_norm_sq": self.w22_norm_sq,
            "f_w12_norm_sq": self.f_w12_norm_sq,
            "ratio": self.ratio,
        }


def _second_derivatives(sol: SolutionGrid) -> tuple[np.ndarray, np.ndarray]:
    w11 = np.gradient(sol.filled("p"), sol.x1, axis=0, edge_order=2)
    w22 = np.gradient(sol.filled("q"), sol.x2, axis=1, edge_order=2)
    return w11, w22


def trace_diagnostics(
    sol: SolutionGrid,
    curve: PlaneCurve,
    region: RegionDescriptor | None = None,
    f: ScalarField | None = None,
    samples: int | None = None,
) -> TraceReport:
    """
    Evaluate the trace functional of w along γ:
    Γ(γ, w) = Σ_{j≤1} ‖∇ʲw∘γ‖² + ∫ |w_x1x1|²·t + |w_x2x2|²·(t0 − t) dt.

    Second derivatives are differenced from the stored first-derivative
    grids; integrals along γ use Simpson's rule. The interior comparison
    norms ‖w‖²_{W2,2} and ‖f‖²_{W1,2} are lattice trapezoid sums.

    Raises:
        DomainError: If the curve leaves the solved region
    """
    n = samples or (4 * max(sol.x1.size, sol.x2.size) + 1)
    if n % 2 == 0:
        n += 1
    t = np.linspace(0.0, curve.t_end, n)
    pts = curve.point(t)
    tol = 1e-7 * max(1.0, sol.spacing)
    inside = (pts[:, 0] >= sol.x1[0] - tol) & (pts[:, 0] <= sol.x1[-1] + tol)
    inside &= (pts[:, 1] >= sol.x2[0] - tol) & (pts[:, 1] <= sol.x2[-1] + tol)
    region = region or sol.region
    if region is not None:
        inside &= region.contains(pts[:, 0], pts[:, 1], tol)
    if not np.all(inside):
        raise DomainError(f"curve {curve.name!r} leaves the solved region", curve=curve.name)

    w = sol.interpolate(pts, "w")
    p = sol.interpolate(pts, "p")
    q = sol.interpolate(pts, "q")
    w11g, w22g = _second_derivatives(sol)
    grid = (sol.x1, sol.x2)
    w11 = RegularGridInterpolator(grid, w11g, bounds_error=False, fill_value=None)(pts)
    w22 = RegularGridInterpolator(grid, w22g, bounds_error=False, fill_value=None)(pts)
    t0 = curve.t_end
    integrand = w**2 + p**2 + q**2 + w11**2 * t + w22**2 * (t0 - t)
    gamma_value = float(simpson(integrand, x=t))

    # interior norms
    g = sol.nodes()
    weights = np.outer(_trap_weights(sol.x1), _trap_weights(sol.x2)) * sol.mask
    w12 = sol.filled("eta")
    dens = sol.filled("w") ** 2 + sol.filled("p") ** 2 + sol.filled("q") ** 2
    dens = dens + w11g**2 + 2 * w12**2 + w22g**2
    w22n = float(np.sum(weights * dens))
    fn = 0.0
    if f is not None:
        fv = np.zeros(sol.mask.shape)
        fv[sol.mask] = f(g[..., 0][sol.mask], g[..., 1][sol.mask])
        f_filled = _ghost_fill(fv, sol.mask, sol.x1, sol.x2)
        f1 = np.gradient(f_filled, sol.x1, axis=0, edge_order=2)
        f2 = np.gradient(f_filled, sol.x2, axis=1, edge_order=2)
        fn = float(np.sum(weights * (f_filled**2 + f1**2 + f2**2)))
    return TraceReport(gamma_value, w22n, fn)


def _trap_weights(x: np.ndarray) -> np.ndarray:
    w = np.zeros_like(x)
    d = np.diff(x)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


@dataclass
class TraceBound:
    """Spread of Γ(γ, w)/(‖w‖² + ‖f‖²) over a family of curves.

    Bounded ``upper`` under refinement is the trace estimate; a positive
    ``lower`` shows the trace controls the interior.
    """

    reports: list[TraceReport]

    @property
    def lower(self) -> float:
        return min(r.ratio for r in self.reports)

    @property
    def upper(self) -> float:
        return max(r.ratio for r in self.reports)

    def to_dict(self) -> dict[str, Any]:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "curves": [r.to_dict() for r in self.reports],
        }


def trace_bound_ratio(
    sol: SolutionGrid,
    curves: Sequence[PlaneCurve],
    f: ScalarField | None = None,
    samples: int | None = None,
) -> TraceBound:
    """Evaluate :func:`trace_diagnostics` on each curve and report the ratio spread."""
    if not curves:
        raise ConfigError("trace_bound_ratio needs at least one curve")
    reports = [trace_diagnostics(sol, c, f=f, samples=samples) for c in curves]
    bound = TraceBound(reports)
    logger.debug(
        "trace ratios in [%.3e, %.3e] over %d curves", bound.lower, bound.upper, len(reports)
    )
    return bound
