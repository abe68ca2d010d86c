#!/usr/bin/env python3
"""
Problem configs and runtime settings.

A problem config names a surface, a noncharacteristic region, the strain
(or a displacement whose strain is used), the boundary data and solver
settings. Configs are TOML or JSON, chosen by file extension, and are
validated by pydantic models that reject unknown keys.

Runtime settings resolve with the precedence

    explicit parameter > environment variable > .hypershell.toml > default

where the rc file is searched in the working directory, then the home
directory.

Example:
    >>> from hypershell.config import ProblemConfig
    >>> config = ProblemConfig.model_validate({
    ...     "surface": {"name": "hyperbolic_paraboloid"},
    ...     "region": {"kind": "box", "origin": [-0.4, -0.4], "a": 0.8, "b": 0.8},
    ... })
    >>> config.fields.data.kind
    'zero'
"""

from __future__ import annotations

import json
import logging
import os
import sys
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic import ValidationError as PydanticValidationError

from .exceptions import ConfigError
from .expressions import parse_vector
from .geometry import SurfacePatch, TensorFieldGrid, surface_from_catalog
from .strain import (
    BoundaryData,
    NoncharRegion,
    SolverOptions,
    SymbolicDisplacement,
    rigid_motion_data,
    zero_strain,
)
from .validators import validate_int

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
RC_FILENAME = ".hypershell.toml"

ENV_THREADS = "HYPERSHELL_THREADS"
ENV_GRID = "HYPERSHELL_GRID"
ENV_OUT = "HYPERSHELL_OUT"

DEFAULT_GRID = 33
DEFAULT_OUT_DIR = "out"
MAX_DEFAULT_THREADS = 4


# Runtime settings
# ============================================================================


@dataclass(frozen=True)
class RuntimeSettings:
    """Resolved process-wide settings."""

    threads: int
    grid: int
    out_dir: str


@lru_cache(maxsize=None)
def _rc_settings() -> Dict[str, Any]:
    for directory in (Path.cwd(), Path.home()):
        path = directory / RC_FILENAME
        if path.is_file():
            try:
                data = tomllib.loads(path.read_text(encoding="utf-8"))
            except tomllib.TOMLDecodeError as e:
                raise ConfigError(f"cannot parse {path}: {e}", path=str(path)) from e
            logger.debug("runtime settings from %s", path)
            return dict(data)
    return {}


def clear_config_cache() -> None:
    """Forget the cached rc file (tests change directories and HOME)."""
    _rc_settings.cache_clear()


def _env_int(name: str) -> Optional[int]:
    raw = os.environ.get(name)
    if raw is None or raw.strip() == "":
        return None
    return validate_int(raw, name, 1)


def default_threads() -> int:
    return max(1, min(MAX_DEFAULT_THREADS, os.cpu_count() or 1))


def get_runtime_settings(
    threads: Optional[int] = None,
    grid: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> RuntimeSettings:
    """
    Resolve runtime settings.

    Args:
        threads: Worker threads (``HYPERSHELL_THREADS``, rc key ``threads``)
        grid: Nodes per axis (``HYPERSHELL_GRID``, rc key ``grid``)
        out_dir: Artifact directory (``HYPERSHELL_OUT``, rc key ``out_dir``)

    Raises:
        ConfigError: If a value is not a positive integer or the rc file is malformed
    """
    rc = _rc_settings()

    def pick(param: Any, env: Any, key: str, default: Any) -> Any:
        for value in (param, env, rc.get(key)):
            if value is not None:
                return value
        return default

    resolved_threads = pick(threads, _env_int(ENV_THREADS), "threads", default_threads())
    resolved_grid = pick(grid, _env_int(ENV_GRID), "grid", DEFAULT_GRID)
    resolved_out = pick(out_dir, os.environ.get(ENV_OUT) or None, "out_dir", DEFAULT_OUT_DIR)
    return RuntimeSettings(
        threads=validate_int(resolved_threads, "threads", 1),
        grid=validate_int(resolved_grid, "grid", 5),
        out_dir=str(resolved_out),
    )


def resolve_threads(threads: Optional[int] = None) -> int:
    """Worker count for parallel waves: the argument, else the runtime setting."""
    if threads is not None:
        return validate_int(threads, "threads", 1)
    return get_runtime_settings().threads


# Problem config models
# ============================================================================


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class SurfaceSpec(_Model):
    """Catalog surface: ``name`` plus parameters (``h`` for graphs)."""

    name: str = "saddle"
    params: Dict[str, Any] = Field(default_factory=dict)
    domain: Optional[List[float]] = None

    @field_validator("domain")
    @classmethod
    def _check_domain(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        if v is not None and len(v) != 4:
            raise ValueError(f"domain must be [x1_min, x1_max, x2_min, x2_max], got {v}")
        return v

    def build(self) -> SurfacePatch:
        return surface_from_catalog(self.name, self.params, self.domain)


class RegionSpec(_Model):
    """Region α([0, a] × [0, b]): a box, a 45° diamond, or expressions in t, s."""

    kind: Literal["box", "diamond", "expression"] = "box"
    origin: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    alpha: Optional[List[str]] = None
    a: float = Field(1.0, gt=0)
    b: float = Field(1.0, gt=0)
    name: Optional[str] = None

    @model_validator(mode="after")
    def _check_kind(self) -> RegionSpec:
        if len(self.origin) != 2:
            raise ValueError(f"origin must have 2 components, got {len(self.origin)}")
        if self.kind == "expression":
            if self.alpha is None or len(self.alpha) != 2:
                raise ValueError("expression regions need alpha = [x1(t, s), x2(t, s)]")
            parse_vector(self.alpha, ("t", "s"))
        elif self.alpha is not None:
            raise ValueError(f"alpha is only allowed for expression regions, not {self.kind}")
        return self

    def build(self) -> NoncharRegion:
        if self.kind == "box":
            region = NoncharRegion.box(self.origin, self.a, self.b)
        elif self.kind == "diamond":
            region = NoncharRegion.diamond(self.origin, self.a, self.b)
        else:
            assert self.alpha is not None
            region = NoncharRegion.from_expressions(self.alpha[0], self.alpha[1], self.a, self.b)
        if self.name:
            region.name = self.name
        return region


class DataSpec(_Model):
    """Boundary data of the scalar problem.

    ``zero``: homogeneous data. ``expressions``: q0, q1 in t and p1, p2 in
    s. ``rigid``: traces of the rigid motion with rotation axis ``axis``.
    ``displacement``: traces of ``fields.displacement``.
    """

    kind: Literal["zero", "expressions", "rigid", "displacement"] = "zero"
    q0: str = "0"
    q1: str = "0"
    p1: str = "0"
    p2: str = "0"
    axis: List[float] = Field(default_factory=lambda: [0.0, 0.0, 1.0])

    @model_validator(mode="after")
    def _check(self) -> DataSpec:
        if len(self.axis) != 3:
            raise ValueError(f"axis must have 3 components, got {len(self.axis)}")
        if self.kind == "expressions":
            parse_vector([self.q0, self.q1], ("t",))
            parse_vector([self.p1, self.p2], ("s",))
        return self


class FieldsSpec(_Model):
    """Right-hand side: a strain table in x1, x2 or a displacement to differentiate."""

    strain: Optional[List[List[str]]] = None
    displacement: Optional[List[str]] = None
    data: DataSpec = Field(default_factory=DataSpec)

    @model_validator(mode="after")
    def _check(self) -> FieldsSpec:
        if self.strain is not None and self.displacement is not None:
            raise ValueError("give either fields.strain or fields.displacement, not both")
        if self.strain is not None:
            if len(self.strain) != 2 or any(len(row) != 2 for row in self.strain):
                raise ValueError("fields.strain must be a 2x2 table of expressions")
            parse_vector([c for row in self.strain for c in row], ("x1", "x2"))
            if self.strain[0][1].replace(" ", "") != self.strain[1][0].replace(" ", ""):
                raise ValueError("fields.strain must be symmetric (U12 == U21)")
        if self.displacement is not None:
            if len(self.displacement) != 3:
                raise ValueError("fields.displacement must have 3 components")
            parse_vector(self.displacement, ("x1", "x2"))
        if self.data.kind == "displacement" and self.displacement is None:
            raise ValueError("data.kind = 'displacement' needs fields.displacement")
        return self


class SolverSpec(_Model):
    """Discretization and acceptance settings."""

    grid: Optional[int] = Field(None, ge=5)
    strips: int = Field(1, ge=1)
    lattice: Optional[int] = Field(None, ge=5)
    chart_method: Literal["auto", "closed", "ode"] = "auto"
    chart_steps: int = Field(256, ge=4)
    factor: Literal[1, 2] = 1
    threads: Optional[int] = Field(None, ge=1)
    residual_tol: float = Field(1e-2, gt=0)

    def to_options(self, settings: RuntimeSettings) -> SolverOptions:
        return SolverOptions(
            grid=self.grid if self.grid is not None else settings.grid,
            strips=self.strips,
            lattice=self.lattice,
            chart_method=self.chart_method,
            chart_steps=self.chart_steps,
            factor=self.factor,
            threads=self.threads if self.threads is not None else settings.threads,
        )


class OutputSpec(_Model):
    dir: Optional[str] = None
    format: Literal["csv", "json", "both"] = "both"
    prefix: str = Field("solution", min_length=1)


class SweepSpec(_Model):
    """Experiment block of ``hypershell sweep``.

    ``match-order`` fits the metric-defect order of matched families over
    ``eps_list``; ``recovery`` evaluates thin-shell energies over
    ``h_list`` with e_h = h^beta.
    """

    kind: Literal["match-order", "recovery"] = "match-order"
    eps_list: List[float] = Field(default_factory=lambda: [0.5, 0.4, 0.3, 0.2])
    h_list: List[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.025])
    m: int = Field(2, ge=1, le=4)
    beta: float = Field(3.0, gt=2, le=4)
    isometry: Literal["sample", "rigid"] = "sample"
    scale: float = 1.0
    axis: List[float] = Field(default_factory=lambda: [0.0, 0.0, 1.0])
    mu: float = Field(1.0, gt=0)
    lam: float = Field(0.0, ge=0)

    @field_validator("eps_list", "h_list")
    @classmethod
    def _check_positive(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("list must not be empty")
        if any(x <= 0 for x in v):
            raise ValueError(f"entries must be positive, got {v}")
        return v


class ProblemConfig(_Model):
    """A complete problem description (``schema_version`` 1)."""

    schema_version: Literal[1] = SCHEMA_VERSION
    name: str = "problem"
    surface: SurfaceSpec = Field(default_factory=SurfaceSpec)
    region: RegionSpec = Field(default_factory=RegionSpec)
    fields: FieldsSpec = Field(default_factory=FieldsSpec)
    solver: SolverSpec = Field(default_factory=SolverSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    sweep: Optional[SweepSpec] = None

    def build(self, settings: Optional[RuntimeSettings] = None) -> Problem:
        """Build surface, region, strain grid and boundary data.

        Raises:
            ConfigError: If the config names an unknown surface or bad parameters
            GeometryError: If the surface is not hyperbolic on its domain
        """
        settings = settings or get_runtime_settings()
        options = self.solver.to_options(settings)
        surface = self.surface.build()
        region = self.region.build()
        exact: Optional[SymbolicDisplacement] = None
        if self.fields.displacement is not None:
            exact = SymbolicDisplacement(surface, self.fields.displacement, name="displacement")
            U = exact.strain_grid(region, options.grid)
        elif self.fields.strain is not None:
            table = parse_vector([c for row in self.fields.strain for c in row], ("x1", "x2"))

            def strain(x1: np.ndarray, x2: np.ndarray) -> np.ndarray:
                values = [e(x1, x2) for e in table]
                return np.stack(
                    [np.stack(values[:2], axis=-1), np.stack(values[2:], axis=-1)], axis=-2
                )

            U = region.sample(strain, options.grid, "form", symmetric=True)
        else:
            U = zero_strain(region, options.grid)

        spec = self.fields.data
        if spec.kind == "zero":
            data = BoundaryData.zero()
        elif spec.kind == "expressions":
            data = BoundaryData.from_expressions(spec.q0, spec.q1, spec.p1, spec.p2)
        elif spec.kind == "rigid":
            data = rigid_motion_data(surface, region, spec.axis)
        else:
            assert exact is not None
            data = exact.boundary_data(region)
        return Problem(self, surface, region, U, data, options, exact)


@dataclass
class Problem:
    """Objects built from a :class:`ProblemConfig`."""

    config: ProblemConfig
    surface: SurfacePatch
    region: NoncharRegion
    strain: TensorFieldGrid
    data: BoundaryData
    options: SolverOptions
    exact: Optional[SymbolicDisplacement] = None


def _format_errors(error: PydanticValidationError) -> List[Dict[str, Any]]:
    return [
        {"loc": ".".join(str(p) for p in e["loc"]), "message": e["msg"], "type": e["type"]}
        for e in error.errors()
    ]


def parse_config(data: Dict[str, Any], source: str = "<config>") -> ProblemConfig:
    """Validate a config mapping.

    Raises:
        ConfigError: With the per-field errors in ``detail["errors"]``
    """
    try:
        return ProblemConfig.model_validate(data)
    except PydanticValidationError as e:
        errors = _format_errors(e)
        first = errors[0] if errors else {"loc": "", "message": str(e)}
        raise ConfigError(
            f"invalid config {source}: {first['loc']}: {first['message']}",
            errors=errors,
            path=source,
        ) from e


def load_config(path: Union[str, os.PathLike]) -> ProblemConfig:
    """
    Load a TOML (``.toml``) or JSON (``.json``) problem config.

    Raises:
        ConfigError: If the file is missing, malformed or fails validation
    """
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}", path=str(p))
    text = p.read_text(encoding="utf-8")
    suffix = p.suffix.lower()
    try:
        if suffix == ".toml":
            data = tomllib.loads(text)
        elif suffix == ".json":
            data = json.loads(text)
        else:
            raise ConfigError(f"config must be .toml or .json, got {p.name}", path=str(p))
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot parse {p}: {e}", path=str(p)) from e
    if not isinstance(data, dict):
        raise ConfigError(f"config {p} must be a table/object at the top level", path=str(p))
    config = parse_config(data, str(p))
    logger.info("loaded config %s (%s on %s)", p, config.surface.name, config.region.kind)
    return config
