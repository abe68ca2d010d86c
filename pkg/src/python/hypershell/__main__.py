#!/usr/bin/env python3
"""
Command line front end.

Usage:
    hypershell solve --config configs/hyperbolic_paraboloid_rigid.toml
    hypershell verify --suite goursat
    hypershell sweep --config configs/saddle_match_order.toml

Exit codes: 0 success, 1 verification failure or unexpected error,
2 config error, 3 geometry error, 4 solver error. Errors are written to
stderr as one JSON object per line.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Optional, Sequence

from . import __version__
from .config import Problem, ProblemConfig, get_runtime_settings, load_config
from .energy import RECOVERY_HEADER, StVenantKirchhoff, recovery_energy_sweep
from .exceptions import ConfigError, ConvergenceError, HypershellError
from .io import dumps_json, to_jsonable, write_csv, write_json
from .isometry import DEFECT_HEADER, fit_order, match_higher_order, rigid_field, sample_isometry
from .strain import DISPLACEMENT_HEADER, check_noncharacteristic, solve_displacement
from .verify import SUITES, VERIFY_HEADER, run_verify

logger = logging.getLogger("hypershell")

FORMATS = ("csv", "json", "both")


def _configure_logging(verbosity: int) -> None:
    level = logging.WARNING if verbosity <= 0 else logging.INFO if verbosity == 1 else logging.DEBUG
    logging.basicConfig(
        level=level,
        stream=sys.stderr,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        force=True,
    )


def _write(
    out_dir: Path, stem: str, fmt: str, header: Sequence[str], rows: Any, payload: Any
) -> None:
    if fmt in ("csv", "both"):
        write_csv(out_dir / f"{stem}.csv", header, rows)
    if fmt in ("json", "both"):
        write_json(out_dir / f"{stem}.json", payload)


def _load(args: argparse.Namespace) -> tuple[ProblemConfig, Problem, Path, str]:
    settings = get_runtime_settings(grid=args.grid, out_dir=args.out)
    config = load_config(args.config)
    if args.grid is not None:
        solver = config.solver.model_copy(update={"grid": args.grid})
        config = config.model_copy(update={"solver": solver})
    problem = config.build(settings)
    out_dir = Path(args.out or config.output.dir or settings.out_dir)
    fmt = args.format or config.output.format
    return config, problem, out_dir, fmt


# Subcommands
# ============================================================================


def cmd_solve(args: argparse.Namespace) -> int:
    """Solve sym∇y = U for a config and write the field and its residual report."""
    config, problem, out_dir, fmt = _load(args)
    check_noncharacteristic(problem.surface, problem.region).require()
    problem.data.require_compatible(problem.surface, problem.region)
    y, _ = solve_displacement(
        problem.surface, problem.region, problem.strain, problem.data, problem.options
    )
    diag = y.diagnostics
    report = {
        "schema_version": config.schema_version,
        "name": config.name,
        "surface": problem.surface.name,
        "region": problem.region.to_dict(),
        "grid": problem.options.grid,
        "sup_residual": diag["sup_residual"],
        "l2_residual": diag["l2_residual"],
        "curl_defect": diag["curl_defect"],
        "iterations": diag.get("iterations", 0),
        "residual_tol": config.solver.residual_tol,
    }
    if problem.exact is not None:
        exact = problem.exact.to_field(problem.strain)
        report["exact_error"] = float(abs(y.y - exact.y).max())

    prefix = config.output.prefix
    _write(out_dir, prefix, fmt, DISPLACEMENT_HEADER, y.to_rows(), y.to_dict())
    write_json(out_dir / f"{prefix}_report.json", report)
    logger.info("wrote %s artifacts to %s", prefix, out_dir)

    if diag["sup_residual"] > config.solver.residual_tol:
        raise ConvergenceError(
            f"sup residual {diag['sup_residual']:.3e} exceeds {config.solver.residual_tol:g}",
            sup_residual=diag["sup_residual"],
            residual_tol=config.solver.residual_tol,
        )
    sys.stdout.write(dumps_json(report))
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    """Run verification suites; exit 1 when any check fails."""
    report = run_verify(args.suite)
    settings = get_runtime_settings(out_dir=args.out)
    out_dir = Path(args.out or settings.out_dir)
    fmt = args.format or "both"
    _write(out_dir, f"verify_{args.suite}", fmt, VERIFY_HEADER, report.to_rows(), report.to_dict())

    width = max(len(c.name) for c in report.checks)
    for check in report.checks:
        mark = "PASS" if check.passed else "FAIL"
        name = f"{check.name:<{width}}"
        sys.stdout.write(
            f"{mark}  {check.suite:<9} {name}  {check.value:.4e}  {check.threshold}\n"
        )
    failed = report.failures()
    sys.stdout.write(f"{len(report.checks) - len(failed)}/{len(report.checks)} checks passed\n")
    return 0 if not failed else 1


def cmd_sweep(args: argparse.Namespace) -> int:
    """Run a match-order or recovery experiment and write its table."""
    config, problem, out_dir, fmt = _load(args)
    if config.sweep is None:
        raise ConfigError("sweep needs a [sweep] block in the config", path=str(args.config))
    sweep = config.sweep
    kind = args.kind or sweep.kind
    check_noncharacteristic(problem.surface, problem.region).require()
    if sweep.isometry == "sample":
        V = sample_isometry(problem.surface, sweep.scale)
    else:
        V = rigid_field(problem.surface, sweep.axis)
    stem = f"{config.output.prefix}_{kind}"

    if kind == "match-order":
        family = match_higher_order(problem.surface, problem.region, V, sweep.m, problem.options)
        fit = fit_order(family, sweep.eps_list)
        payload = {
            **fit.to_dict(),
            "m": sweep.m,
            "target": sweep.m + 1,
            "stage_residuals": family.stage_residuals,
        }
        _write(out_dir, stem, fmt, DEFECT_HEADER, fit.to_rows(), payload)
    else:
        law = StVenantKirchhoff(sweep.mu, sweep.lam)
        result = recovery_energy_sweep(
            problem.surface,
            problem.region,
            V,
            sweep.m,
            sweep.beta,
            sweep.h_list,
            law,
            options=problem.options,
        )
        payload = result.to_dict()
        _write(out_dir, stem, fmt, RECOVERY_HEADER, result.to_rows(), payload)
    sys.stdout.write(dumps_json({"kind": kind, **payload}))
    return 0


# Entry point
# ============================================================================


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hypershell",
        description="Strain equations, isometries and bending energies on hyperbolic surfaces.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "-v", "--verbose", action="count", default=0, help="-v for info, -vv for debug logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", default=None, help="output directory")
        p.add_argument("--format", choices=FORMATS, default=None, help="artifact format")

    solve = sub.add_parser("solve", help="solve sym∇y = U for a config")
    solve.add_argument("--config", required=True, type=Path)
    solve.add_argument("--grid", type=int, default=None, help="nodes per region axis")
    common(solve)
    solve.set_defaults(func=cmd_solve)

    verify = sub.add_parser("verify", help="run verification suites")
    verify.add_argument("--suite", choices=SUITES + ("all",), default="all")
    common(verify)
    verify.set_defaults(func=cmd_verify)

    sweep = sub.add_parser("sweep", help="run a match-order or recovery experiment")
    sweep.add_argument("--config", required=True, type=Path)
    sweep.add_argument("--kind", choices=("match-order", "recovery"), default=None)
    sweep.add_argument("--grid", type=int, default=None, help="nodes per region axis")
    common(sweep)
    sweep.set_defaults(func=cmd_sweep)
    return parser


def _report_error(error: HypershellError) -> None:
    payload = {
        "error": type(error).__name__,
        "exit_code": error.exit_code,
        "message": str(error),
        "detail": to_jsonable(error.detail),
    }
    sys.stderr.write(json.dumps(payload, sort_keys=True, default=str) + "\n")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _configure_logging(args.verbose)
    try:
        return int(args.func(args))
    except HypershellError as e:
        logger.debug("command failed", exc_info=True)
        _report_error(e)
        return e.exit_code
    except Exception as e:  # noqa: BLE001
        logger.exception("unexpected failure")
        _report_error(HypershellError(f"{type(e).__name__}: {e}"))
        return 1


if __name__ == "__main__":
    sys.exit(main())
