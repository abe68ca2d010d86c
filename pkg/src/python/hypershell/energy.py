#!/usr/bin/env python3
"""
Bending energy of infinitesimal isometries.

For an isometry V the skew field A with ∇_αV = Aα gives the bending
functional

    I(V) = (1/24) ∫ Q2(x, (∇(Aν) − A∇ν)_tan) dg

where Q2 is the tangential reduction of the quadratic form Q3 = D²W(Id)
of an elastic law W. Thin-shell energies of recovery deformations built
from a matched family are compared against I(V) in
:func:`recovery_energy_sweep`.

Example:
    >>> from hypershell.energy import StVenantKirchhoff, bending_energy
    >>> from hypershell.geometry import SurfacePatch
    >>> from hypershell.isometry import rigid_field
    >>> from hypershell.strain import NoncharRegion, zero_strain
    >>> surface = SurfacePatch.saddle()
    >>> grid = zero_strain(NoncharRegion.diamond((-0.5, 0.0), 0.7, 0.7), 17)
    >>> bending_energy(surface, rigid_field(surface, (1.0, 2.0, 0.5)), grid=grid) < 1e-10
    True
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Optional, Sequence, Union

import numpy as np
from scipy.integrate import simpson

from .exceptions import ConfigError, LawError, NotAnIsometryError
from .geometry import FundamentalForms, SurfacePatch, TensorFieldGrid
from .isometry import IsometryFamily, match_higher_order
from .strain import (
    BoundaryData,
    DisplacementField,
    NoncharRegion,
    SolverOptions,
    SymbolicDisplacement,
    solve_displacement,
    zero_strain,
)
from .validators import validate_float, validate_int, validate_list_float, validate_positive

logger = logging.getLogger(__name__)

Matrices = Callable[[np.ndarray], np.ndarray]

_HESSIAN_STEP = 1e-4
_PSD_TOL = 1e-6
_ISOMETRY_TOL = 1e-8
_SYMBOLIC_STEP = 1e-5
_GAUSS_POINTS = 5
_RESOLUTION_FACTOR = 10.0

RECOVERY_HEADER = ("h", "eps", "e_h", "energy", "energy_ratio", "ratio", "resolvable")


# Elastic laws
# ============================================================================


def _frame_basis() -> np.ndarray:
    """vec(e_k ⊗ e3 + e3 ⊗ e_k) for k = 1, 2, 3 as columns, (9, 3)."""
    cols = []
    for k in range(3):
        M = np.zeros((3, 3))
        M[k, 2] += 1.0
        M[2, k] += 1.0
        cols.append(M.ravel())
    return np.stack(cols, axis=-1)


def _embed(T: np.ndarray) -> np.ndarray:
    out = np.zeros(T.shape[:-2] + (3, 3))
    out[..., :2, :2] = T
    return out


class ElasticLaw:
    """Stored-energy density W3 on 3×3 deformation gradients.

    Q3 is the Hessian of W3 at the identity, computed by central
    differences; Q2 minimizes Q3(F_tan + ĉ⊗ν + ν⊗ĉ) over ĉ.

    Args:
        W3: Vectorized density, (..., 3, 3) -> (...)
        name: Label used in reports

    Raises:
        LawError: If the Hessian at the identity is not positive semidefinite
    """

    def __init__(self, W3: Matrices, name: str = "custom") -> None:
        self._W3 = W3
        self.name = name
        self._hessian: Optional[np.ndarray] = None
        self._reduction: Optional[np.ndarray] = None

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.name!r})"

    def W(self, F: Any) -> np.ndarray:
        return np.asarray(self._W3(np.asarray(F, dtype=float)), dtype=float)

    def hessian(self) -> np.ndarray:
        """D²W(Id) as a 9×9 matrix on row-major vec(F)."""
        if self._hessian is None:
            h = _HESSIAN_STEP
            E = np.eye(9).reshape(9, 3, 3)
            ident = np.eye(3)
            dp = E[:, None] * h
            dq = E[None, :] * h
            H = (
                self.W(ident + dp + dq)
                - self.W(ident + dp - dq)
                - self.W(ident - dp + dq)
                + self.W(ident - dp - dq)
            ) / (4.0 * h * h)
            H = 0.5 * (H + H.T)
            eig = np.linalg.eigvalsh(H)
            if eig[0] < -_PSD_TOL * max(1.0, float(eig[-1])):
                raise LawError(
                    f"law {self.name!r}: Q3 is not positive semidefinite "
                    f"(min eigenvalue {eig[0]:.3e})",
                    min_eigenvalue=float(eig[0]),
                )
            self._hessian = H
            logger.debug("law %s: Q3 eigenvalues %s", self.name, np.round(eig, 8).tolist())
        return self._hessian

    def Q3(self, F: Any) -> np.ndarray:
        v = np.asarray(F, dtype=float).reshape(np.shape(F)[:-2] + (9,))
        return np.einsum("...p,pq,...q->...", v, self.hessian(), v)

    def _minimizer_matrix(self) -> np.ndarray:
        if self._reduction is None:
            L = _frame_basis()
            H = self.hessian()
            self._reduction = -np.linalg.pinv(L.T @ H @ L) @ L.T @ H
        return self._reduction

    def q2_frame(self, T: Any) -> tuple[np.ndarray, np.ndarray]:
        """
        Q2 and its minimizer for T given in an orthonormal tangent frame.

        Returns:
            (Q2, c) with c the frame components (..., 3) of ĉ; c[..., 2] is normal
        """
        F0 = _embed(np.asarray(T, dtype=float))
        c = np.einsum("kp,...p->...k", self._minimizer_matrix(), F0.reshape(F0.shape[:-2] + (9,)))
        F = F0 + np.einsum("pk,...k->...p", _frame_basis(), c).reshape(F0.shape)
        return self.Q3(F), c

    def q2_forms(self, forms: FundamentalForms, T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """
        Q2 of a covariant tangential 2-tensor T in the chart basis.

        Returns:
            (Q2, ĉ) with ĉ as an ambient vector (..., 3)
        """
        L = np.linalg.cholesky(forms.G)
        Linv = np.linalg.inv(L)
        T_orth = Linv @ T @ np.swapaxes(Linv, -1, -2)
        q, c = self.q2_frame(T_orth)
        frame = np.einsum("...ia,...ba->...ib", forms.tangents, Linv)
        chat = np.einsum("...ib,...b->...i", frame, c[..., :2]) + c[..., 2:3] * forms.normal
        return q, chat

    def check_axioms(self, seed: int = 0, n: int = 16) -> dict[str, float]:
        """sup |W(R)| and sup |W(RF) − W(F)| over random rotations R and gradients F."""
        rng = np.random.default_rng(seed)
        Qs, _ = np.linalg.qr(rng.normal(size=(n, 3, 3)))
        R = Qs * np.sign(np.linalg.det(Qs))[:, None, None]
        F = np.eye(3) + 0.3 * rng.normal(size=(n, 3, 3))
        return {
            "normalization": float(np.max(np.abs(self.W(R)))),
            "frame_indifference": float(np.max(np.abs(self.W(R @ F) - self.W(F)))),
        }

    def to_dict(self) -> dict[str, Any]:
        return {"law": self.name}


class StVenantKirchhoff(ElasticLaw):
    """W(F) = μ|E|² + (λ/2)(tr E)² with E = ½(FᵀF − Id).

    The default μ = 1, λ = 0 is W(F) = ¼|FᵀF − Id|², with
    Q3(F) = 2μ|sym F|² + λ(tr F)² and
    Q2(T) = 2μ|sym T|² + (2μλ/(2μ + λ))(tr T)².
    """

    def __init__(self, mu: float = 1.0, lam: float = 0.0) -> None:
        self.mu = validate_positive(mu, "mu")
        self.lam = validate_float(lam, "lam", 0.0)
        super().__init__(self._density, name="st_venant_kirchhoff")

    def _density(self, F: np.ndarray) -> np.ndarray:
        E = 0.5 * (np.swapaxes(F, -1, -2) @ F - np.eye(3))
        tr = np.trace(E, axis1=-2, axis2=-1)
        return self.mu * np.sum(E * E, axis=(-2, -1)) + 0.5 * self.lam * tr**2

    def Q3(self, F: Any) -> np.ndarray:
        F = np.asarray(F, dtype=float)
        S = 0.5 * (F + np.swapaxes(F, -1, -2))
        trace = np.trace(F, axis1=-2, axis2=-1)
        return 2.0 * self.mu * np.sum(S * S, axis=(-2, -1)) + self.lam * trace**2

    def q2_forms(self, forms: FundamentalForms, T: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        S = 0.5 * (T + np.swapaxes(T, -1, -2))
        norm2 = np.einsum("...ac,...bd,...ab,...cd->...", forms.G_inv, forms.G_inv, S, S)
        tr = np.einsum("...ab,...ab->...", forms.G_inv, S)
        mu, lam = self.mu, self.lam
        q = 2.0 * mu * norm2 + (2.0 * mu * lam / (2.0 * mu + lam)) * tr**2
        chat = (-lam * tr / (4.0 * mu + 2.0 * lam))[..., None] * forms.normal
        return q, chat

    def to_dict(self) -> dict[str, Any]:
        return {"law": self.name, "mu": self.mu, "lam": self.lam}


def q2_reduce(law: ElasticLaw, surface: SurfacePatch, x: Any, F_tan: Any) -> np.ndarray:
    """Q2(x, F_tan) for a covariant 2×2 tensor at surface parameters x."""
    x = np.asarray(x, dtype=float)
    forms = surface.forms(x[..., 0], x[..., 1])
    return law.q2_forms(forms, np.asarray(F_tan, dtype=float))[0]


# A-field and bending energy
# ============================================================================


def _a_matrix(forms: FundamentalForms, gradient: np.ndarray) -> np.ndarray:
    normal_part = np.einsum("...ia,...i->...a", gradient, forms.normal)
    n = -np.einsum("...ia,...ab,...b->...i", forms.tangents, forms.G_inv, normal_part)
    M = np.concatenate([gradient, n[..., :, None]], axis=-1)
    E = np.concatenate([forms.tangents, forms.normal[..., :, None]], axis=-1)
    A = M @ np.linalg.inv(E)
    return 0.5 * (A - np.swapaxes(A, -1, -2))


@dataclass
class AField:
    """Skew matrices A with ∇_αV = Aα on a region grid.

    Attributes:
        values: (n1, n2, 3, 3), skew at every node
        grid: Region grid
        strain_defect: sup |sym∇V| of the input
        reconstruction_defect: sup |∂_aV − A∂_a r|
    """

    values: np.ndarray
    grid: TensorFieldGrid
    strain_defect: float = 0.0
    reconstruction_defect: float = 0.0
    pointwise: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = field(
        default=None, repr=False
    )

    def derivative(self) -> np.ndarray:
        """∂_aA in surface coordinates, (n1, n2, 3, 3, 2)."""
        if self.pointwise is None:
            return self.grid.partial(self.values)
        p = self.grid.surface_points()
        h = _SYMBOLIC_STEP
        x1, x2 = p[..., 0], p[..., 1]
        d1 = (self.pointwise(x1 + h, x2) - self.pointwise(x1 - h, x2)) / (2.0 * h)
        d2 = (self.pointwise(x1, x2 + h) - self.pointwise(x1, x2 - h)) / (2.0 * h)
        return np.stack([d1, d2], axis=-1)


def build_A_field(
    surface: SurfacePatch,
    V: Union[DisplacementField, SymbolicDisplacement],
    grid: Optional[TensorFieldGrid] = None,
    tol: float = _ISOMETRY_TOL,
) -> AField:
    """
    Skew field of an isometry: A∂_a r = ∂_aV and Aν fixed by skewness.

    Args:
        surface: Reference surface
        V: Solved or symbolic isometry
        grid: Region grid, required for symbolic V
        tol: Strain tolerance; the check fails above 10·tol·scale

    Raises:
        NotAnIsometryError: If sym∇V is not small
    """
    pointwise = None
    if isinstance(V, SymbolicDisplacement):
        if grid is None:
            raise ConfigError("a symbolic isometry needs a sampling grid")
        sym = V

        def pointwise(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
            return _a_matrix(surface.forms(x1, x2), sym.gradient(x1, x2))

        p = grid.surface_points()
        gradient = V.gradient(p[..., 0], p[..., 1])
    else:
        grid = V.grid
        gradient = V.gradient
    forms = grid.forms(surface)
    M = np.einsum("...ia,...ib->...ab", forms.tangents, gradient)
    strain = float(np.max(np.abs(0.5 * (M + np.swapaxes(M, -1, -2)))))
    scale = max(1.0, float(np.max(np.abs(gradient))))
    if strain > 10.0 * tol * scale:
        raise NotAnIsometryError(
            f"displacement is not an infinitesimal isometry (sup|sym grad| {strain:.3e})",
            strain=strain,
        )
    A = _a_matrix(forms, gradient)
    recon = float(np.max(np.abs(np.einsum("...ij,...ja->...ia", A, forms.tangents) - gradient)))
    return AField(A, grid, strain, recon, pointwise)


def bending_tensor(surface: SurfacePatch, A: AField) -> np.ndarray:
    """sym⟨(∂_aA)ν, ∂_b r⟩ = sym(∇(Aν) − A∇ν)_tan at every node."""
    forms = A.grid.forms(surface)
    dA = A.derivative()
    T = np.einsum("...ija,...j,...ib->...ab", dA, forms.normal, forms.tangents)
    return 0.5 * (T + np.swapaxes(T, -1, -2))


def _jacobian(grid: TensorFieldGrid) -> np.ndarray:
    if grid.jacobian is None:
        return np.broadcast_to(np.eye(2), grid.shape + (2, 2))
    return grid.jacobian


def integrate_simpson(grid: TensorFieldGrid, density: np.ndarray, forms: FundamentalForms) -> float:
    """∫ density dg over the grid by tensor-product Simpson quadrature."""
    weights = forms.sqrt_det_G * np.abs(np.linalg.det(_jacobian(grid)))
    inner = simpson(density * weights, x=grid.u2, axis=1)
    return float(simpson(inner, x=grid.u1, axis=0))


def bending_energy(
    surface: SurfacePatch,
    V: Union[DisplacementField, SymbolicDisplacement, AField],
    law: Optional[ElasticLaw] = None,
    grid: Optional[TensorFieldGrid] = None,
) -> float:
    """
    I(V) = (1/24) ∫ Q2(x, (∇(Aν) − A∇ν)_tan) dg.

    Args:
        surface: Reference surface
        V: Isometry (solved, symbolic) or a prebuilt A-field
        law: Elastic law (default W(F) = ¼|FᵀF − Id|²)
        grid: Region grid for symbolic V
    """
    law = law or StVenantKirchhoff()
    A = V if isinstance(V, AField) else build_A_field(surface, V, grid)
    forms = A.grid.forms(surface)
    q, _ = law.q2_forms(forms, bending_tensor(surface, A))
    energy = integrate_simpson(A.grid, q, forms) / 24.0
    logger.info("bending energy %.6e (%s)", energy, law.name)
    return energy


@dataclass
class RobustReport:
    """Solve of sym∇w = (A²)_tan: success certifies (A²)_tan as a realizable strain."""

    sup_residual: float
    l2_residual: float
    rhs_scale: float
    solution: DisplacementField

    def to_dict(self) -> dict[str, Any]:
        return {
            "sup_residual": self.sup_residual,
            "l2_residual": self.l2_residual,
            "rhs_scale": self.rhs_scale,
            "curl_defect": self.solution.curl_defect,
        }


def robust_check(
    surface: SurfacePatch,
    region: NoncharRegion,
    V: Union[DisplacementField, SymbolicDisplacement],
    options: Optional[SolverOptions] = None,
) -> RobustReport:
    """Solve sym∇w = (A²)_tan with homogeneous data and report the residual."""
    options = options or SolverOptions()
    grid = V.grid if isinstance(V, DisplacementField) else zero_strain(region, options.grid)
    A = build_A_field(surface, V, grid)
    forms = grid.forms(surface)
    A2 = A.values @ A.values
    U = np.einsum("...ia,...ij,...jb->...ab", forms.tangents, A2, forms.tangents)
    U = 0.5 * (U + np.swapaxes(U, -1, -2))
    Ugrid = grid.with_values(U, "form", symmetric=True)
    w, _ = solve_displacement(surface, region, Ugrid, BoundaryData.zero(), options)
    report = RobustReport(
        float(w.diagnostics["sup_residual"]),
        float(w.diagnostics["l2_residual"]),
        float(np.max(np.abs(U))),
        w,
    )
    logger.info(
        "robustness solve: sup residual %.3e on rhs scale %.3e",
        report.sup_residual,
        report.rhs_scale,
    )
    return report


# Recovery sweep
# ============================================================================


@dataclass
class RecoveryRow:
    h: float
    eps: float
    e_h: float
    energy: float
    energy_ratio: float
    ratio: Optional[float]
    resolvable: bool

    def as_tuple(self) -> tuple[Any, ...]:
        return (
            self.h, self.eps, self.e_h, self.energy, self.energy_ratio,
            math.nan if self.ratio is None else self.ratio, self.resolvable,
        )


@dataclass
class RecoverySweep:
    """Thin-shell energies E_h of recovery deformations against I(V)."""

    rows: list[RecoveryRow]
    bending: float
    beta: float
    m: int
    law: dict[str, Any]

    @property
    def admissible(self) -> bool:
        """Whether e_h = h^β decays fast enough for the matched order: β > 2 + 2/m."""
        return self.beta > 2.0 + 2.0 / self.m

    def resolvable_rows(self) -> list[RecoveryRow]:
        return [r for r in self.rows if r.resolvable]

    @property
    def final_ratio(self) -> Optional[float]:
        rows = self.resolvable_rows()
        return rows[-1].ratio if rows else None

    def converging(self) -> bool:
        """|ratio − 1| decreases across the last two resolvable rows."""
        ratios = [r.ratio for r in self.resolvable_rows() if r.ratio is not None]
        return len(ratios) >= 2 and abs(ratios[-1] - 1.0) < abs(ratios[-2] - 1.0)

    def to_rows(self) -> list[tuple[Any, ...]]:
        return [r.as_tuple() for r in self.rows]

    def to_dict(self) -> dict[str, Any]:
        return {
            "bending_energy": self.bending,
            "beta": self.beta,
            "m": self.m,
            "admissible": self.admissible,
            "law": self.law,
            "final_ratio": self.final_ratio,
            "converging": self.converging(),
            "rows": [dict(zip(RECOVERY_HEADER, r.as_tuple())) for r in self.rows],
        }


def _shell_energy(
    law: ElasticLaw,
    forms: FundamentalForms,
    grid: TensorFieldGrid,
    family: IsometryFamily,
    d: np.ndarray,
    dd: np.ndarray,
    dnu: np.ndarray,
    h: float,
    eps: float,
) -> float:
    grad = family.gradient(eps)
    n = np.cross(grad[..., 0], grad[..., 1])
    nu_eps = n / np.linalg.norm(n, axis=-1, keepdims=True)
    dnu_eps = dnu + grid.partial(nu_eps - forms.normal)
    tr_s = np.trace(forms.shape_op, axis1=-2, axis2=-1)
    nodes, weights = np.polynomial.legendre.leggauss(_GAUSS_POINTS)
    density = np.zeros(grid.shape)
    for tau, wt in zip(0.5 * h * nodes, 0.5 * h * weights):
        ref = np.concatenate([forms.tangents + tau * dnu, forms.normal[..., :, None]], axis=-1)
        cols = grad + tau * dnu_eps + 0.5 * tau * tau * eps * dd
        deformed = np.concatenate([cols, (nu_eps + tau * eps * d)[..., :, None]], axis=-1)
        F = deformed @ np.linalg.inv(ref)
        volume = 1.0 + tau * tr_s + tau * tau * forms.kappa
        density += wt * law.W(F) * volume
    return integrate_simpson(grid, density, forms) / h


def recovery_energy_sweep(
    surface: SurfacePatch,
    region: NoncharRegion,
    V: Union[DisplacementField, SymbolicDisplacement],
    m: int,
    beta: float,
    h_list: Sequence[float],
    law: Optional[ElasticLaw] = None,
    family: Optional[IsometryFamily] = None,
    options: Optional[SolverOptions] = None,
) -> RecoverySweep:
    """
    E_h(u_h)/e_h against I(V) for e_h = h^β and ε = h^{β/2 − 1}.

    u_h(x + tν) = u_ε(x) + tν_ε(x) + (t²/2)ε d(x) with d = 2ĉ(x, T) the
    Q2 minimizer of the bending tensor, t ∈ (−h/2, h/2) integrated by
    5-point Gauss–Legendre with the shell volume factor
    1 + t·tr∇ν + t²κ. Rows with ε below 10Δ² are flagged unresolvable.

    Raises:
        ConfigError: If ``h_list`` is empty or not positive
    """
    law = law or StVenantKirchhoff()
    m = validate_int(m, "m", 1)
    beta = validate_float(beta, "beta", 2.0, 4.0, exclusive_min=True)
    hs = validate_list_float(h_list, "h_list")
    if any(h <= 0 for h in hs):
        raise ConfigError(f"h_list entries must be positive, got {hs}")
    options = options or SolverOptions()
    if family is None:
        family = match_higher_order(surface, region, V, m, options)
    grid = family.grid
    forms = grid.forms(surface)
    A = build_A_field(surface, family.fields[0])
    T = bending_tensor(surface, A)
    q, chat = law.q2_forms(forms, T)
    bending = integrate_simpson(grid, q, forms) / 24.0
    d = 2.0 * chat
    dd = grid.partial(d)
    dnu = np.einsum("...ic,...ca->...ia", forms.tangents, forms.shape_op)
    spacing = max(grid.spacing)

    rows = []
    for h in hs:
        eps = h ** (0.5 * beta - 1.0)
        e_h = h**beta
        energy = _shell_energy(law, forms, grid, family, d, dd, dnu, h, eps)
        ratio = energy / e_h / bending if bending > 0 else None
        resolvable = eps >= _RESOLUTION_FACTOR * spacing**2
        rows.append(RecoveryRow(h, eps, e_h, energy, energy / e_h, ratio, resolvable))
        logger.info("recovery h=%g: E_h/e_h %.6e, ratio %s", h, energy / e_h, ratio)
    sweep = RecoverySweep(rows, bending, beta, family.order, law.to_dict())
    if not sweep.admissible:
        logger.warning(
            "beta=%g is not above 2 + 2/m for m=%d; the membrane term does not vanish",
            beta,
            family.order,
        )
    return sweep
