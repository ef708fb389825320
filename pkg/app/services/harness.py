"""Command implementations behind the CLI: evaluate, sweep, verify and equality-case.

Run configurations are flat INI files with one section per concern:

    [surface]      family, curvature_sign, ambient_dim, radius, ... (SurfaceSpec keys)
    [base_point]   chart, u, v
    [operation]    name, sigma, rho, k, interior, field, sigmas, sample_pairs, nodes,
                   sweep_variable, sweep_start, sweep_stop, sweep_count
    [quadrature]   base_cells_per_axis, gauss_points_per_cell_axis, max_refine_depth, cut_tolerance
    [output]       path

Every command returns its exit code: 0 success, 1 mathematical violation, 2 input error.
"""

import configparser
import csv
import logging
import os
import sys
from contextlib import contextmanager
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Sequence, TextIO, Tuple

import numpy as np
from pydantic import ValidationError

from ..config import get_settings
from ..exceptions import ConfigError
from ..geometry.spaceform import AmbientPoint
from ..geometry.surface import ImmersedSurface
from ..graph.workflow import VerificationWorkflow
from ..models.schemas import BalanceReport, MonotonicityInputs, OperationSection, QuadratureSpec, RunConfig
from . import functionals
from .surfaces import base_point_of, build_surface

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2

DEFAULT_SIGMA = 0.05
DEFAULT_RHO = {-1: 10.0, 1: 3.0}
DEFAULT_SIGMAS = (0.08, 0.04, 0.02, 0.01)
HEIGHT_DIRECTION = (0.3, -0.5, 0.8)
EQUALITY_CASE_TOLERANCE = 1e-8

CSV_COLUMNS: Dict[str, str] = {
    "operation": "functional that produced the row",
    "lhs / rhs": "left and right side of the identity or inequality",
    "residual": "lhs - rhs",
    "margin": "rhs - lhs (non-negative for a satisfied inequality)",
    "tolerance": "relative tolerance the row is judged with",
    "passed": "true when the row satisfies its identity or inequality",
    "<term>": "every named integral of the report, e.g. annulus_area, boundary_flux, claim_excess_max",
    "rho / sigma / t / resolution": "sweep value (sweep only, first column)",
    "monotone_ok": "sweep only: false when the monotone quantity moved the wrong way beyond tolerance",
    "observed_order": "resolution sweep only: convergence order from the last two rows",
    "willmore_energy, quarter_willmore, error_bound, nodes": "willmore_energy rows",
    "sigma, area_ratio, weighted_ratio, k_extrapolated, k_weighted": "density_ratio rows",
    "max_residual, min_mean_curvature, pairs_evaluated, pairs_skipped": "equality-case rows",
    "item, verdict, seconds": "verify rows",
}

# quantity expected to move monotonically along a sweep, +1 non-decreasing / -1 non-increasing
MONOTONE: Dict[Tuple[str, str], Tuple[Tuple[str, ...], int]] = {
    ("crude_balance", "rho"): (("annulus_square",), 1),
    ("crude_balance", "sigma"): (("annulus_square",), -1),
    ("sphere_crude_balance", "rho"): (("square_rho", "annulus_square"), 1),
    ("sphere_crude_balance", "sigma"): (("annulus_square",), -1),
}


@dataclass(frozen=True)
class PreparedRun:
    config: RunConfig
    surface: ImmersedSurface
    base_point: AmbientPoint


def apply_overrides(
    cells: Optional[int] = None,
    gauss: Optional[int] = None,
    threads: Optional[int] = None,
    seed: Optional[int] = None,
) -> None:
    """Push CLI flags into the settings layer so every consumer sees them."""
    for key, value in (("BASE_CELLS", cells), ("GAUSS_POINTS", gauss), ("THREADS", threads), ("SEED", seed)):
        if value is not None:
            os.environ[f"WILLMORE_{key}"] = str(value)
    get_settings.cache_clear()


def load_run_config(path: str) -> RunConfig:
    """Parse and validate an INI run configuration; unknown sections and keys are rejected."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read config file {path}")
    known = set(RunConfig.model_fields)
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    raw = {section: dict(parser.items(section)) for section in parser.sections()}
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as e:
        details = "; ".join(f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
        raise ConfigError(f"invalid config {path}: {details}") from e


def prepare(config: RunConfig) -> PreparedRun:
    try:
        quadrature = QuadratureSpec.model_validate(
            {**QuadratureSpec.from_settings().model_dump(), **config.quadrature.overrides()}
        )
    except ValidationError as e:
        raise ConfigError(f"invalid quadrature section: {e.errors()[0]['msg']}") from e
    surface = build_surface(config.surface, quadrature)
    chart = config.base_point.chart
    if chart >= len(surface.charts):
        raise ConfigError(f"base_point.chart {chart} out of range ({len(surface.charts)} chart(s))")
    o = base_point_of(surface, chart, config.base_point.u, config.base_point.v)
    return PreparedRun(config=config, surface=surface, base_point=o)


def format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return f"{float(value):.12g}"
    return "" if value is None else str(value)


@contextmanager
def _open_output(path: Optional[str]) -> Iterator[TextIO]:
    if path is None:
        yield sys.stdout
        return
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        yield handle


def write_csv(rows: Sequence[Dict[str, Any]], path: Optional[str], leading: Sequence[str] = ()) -> None:
    """Header plus one line per row; columns are the union of row keys in first-seen order."""
    columns: List[str] = list(leading)
    for row in rows:
        columns.extend(key for key in row if key not in columns)
    with _open_output(path) as handle:
        writer = csv.writer(handle)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_value(row.get(column)) for column in columns])


def _summary(message: str, csv_path: Optional[str]) -> None:
    # keep stdout clean when it carries the CSV
    print(message, file=sys.stdout if csv_path else sys.stderr)


def report_row(report: BalanceReport) -> Dict[str, Any]:
    row: Dict[str, Any] = {
        "operation": report.name,
        "lhs": report.lhs,
        "rhs": report.rhs,
        "residual": report.residual,
        "margin": report.margin,
        "tolerance": report.tolerance,
        "passed": report.passed,
    }
    row.update(report.terms)
    return row


def _inputs(run: PreparedRun, op: OperationSection) -> MonotonicityInputs:
    K = run.surface.form.K
    try:
        return MonotonicityInputs(
            o=run.base_point,
            sigma=op.sigma if op.sigma is not None else DEFAULT_SIGMA,
            rho=op.rho if op.rho is not None else DEFAULT_RHO[K],
            k=op.k,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid operation radii: {e.errors()[0]['msg']}") from e


def _rho(run: PreparedRun, op: OperationSection) -> float:
    return op.rho if op.rho is not None else DEFAULT_RHO[run.surface.form.K]


def run_operation(
    run: PreparedRun, op: OperationSection, seed: int, tolerance: Optional[float] = None
) -> Tuple[List[Dict[str, Any]], List[BalanceReport]]:
    """Evaluate one operation into CSV rows and the reports behind them."""
    surface, o, name = run.surface, run.base_point, op.name
    report: Optional[BalanceReport] = None

    if name == "willmore_energy":
        estimate = functionals.willmore_energy(surface)
        value = float(estimate)
        row = {
            "operation": name,
            "willmore_energy": value,
            "quarter_willmore": 0.25 * value,
            "error_bound": estimate.error_bound,
            "nodes": estimate.nodes,
        }
        return [row], []
    if name == "density_ratio":
        sigmas = op.sigmas or list(DEFAULT_SIGMAS)
        estimate = functionals.density_ratio(surface, o, sigmas)
        rows = [
            {"operation": name, "sigma": s, "area_ratio": a, "weighted_ratio": w}
            for s, a, w in zip(estimate.sigmas, estimate.area_ratios, estimate.weighted_ratios)
        ]
        rows[-1].update(k_extrapolated=estimate.k_extrapolated, k_weighted=estimate.k_weighted)
        return rows, []
    if name == "equality_case_residual":
        result = functionals.equality_case_residual(surface, op.sample_pairs, seed)
        row = {"operation": name, **result.model_dump(), "mean_curvature_positive": result.mean_curvature_positive}
        return [row], []

    if name == "crude_balance":
        report = functionals.crude_balance(surface, _inputs(run, op))
    elif name == "sphere_crude_balance":
        report = functionals.sphere_crude_balance(surface, _inputs(run, op), limit=op.sigma is None)
    elif name == "mono_identity":
        report = functionals.mono_identity(surface, o, op.k)
    elif name == "finer_inequality":
        report = functionals.finer_inequality(surface, o, _rho(run, op), op.sigma or DEFAULT_SIGMA)
    elif name == "sphere_finer_inequality":
        report = functionals.sphere_finer_inequality(surface, o, _rho(run, op), op.sigma or DEFAULT_SIGMA)
    elif name == "boundary_mono":
        report = functionals.boundary_mono(surface, o, op.interior)
    elif name == "chen_inequality":
        report = functionals.chen_inequality(surface)
    elif name == "embeddedness_criterion":
        certified, report = functionals.embeddedness_criterion(surface)
        report = report.model_copy(update={"terms": {**report.terms, "certified": float(certified)}})
    elif name == "first_variation_balance":
        if op.field == "height":
            direction = np.zeros(surface.form.coord_dim)
            direction[1:4] = HEIGHT_DIRECTION
            field = functionals.height_field(surface, direction)
        else:
            field = functionals.radial_test_field(surface, o)
        report = functionals.first_variation_balance(surface, field, o)
    elif name == "divergence_equality":
        report = functionals.divergence_equality_residual(surface, o, op.nodes, seed)
    else:
        raise ConfigError(f"unsupported operation {name!r}")

    if tolerance is not None:
        report = report.model_copy(update={"tolerance": tolerance})
    return [report_row(report)], [report]


def _violations(reports: Sequence[BalanceReport]) -> List[BalanceReport]:
    # a missing embeddedness certificate is not a violation
    return [
        report
        for report in reports
        if report.kind == "inequality" and not report.passed and report.name != "embeddedness_criterion"
    ]


def cmd_evaluate(config: RunConfig, out: Optional[str] = None, tolerance: Optional[float] = None) -> int:
    """Evaluate the configured functional once."""
    run = prepare(config)
    out = out or config.output.path
    rows, reports = run_operation(run, config.operation, get_settings().SEED, tolerance)
    write_csv(rows, out)
    failed = _violations(reports)
    for report in reports:
        for warning in report.warnings:
            logger.warning("%s: %s", report.name, warning)
    status = "VIOLATED" if failed else "ok"
    detail = ""
    if reports:
        detail = f" residual={reports[0].residual:.6e} margin={reports[0].margin:.6e}"
    _summary(f"{config.operation.name} on {config.surface.family} ({run.surface.form.name}): {status}{detail}", out)
    return EXIT_VIOLATION if failed else EXIT_OK


def sweep_values(op: OperationSection) -> List[float]:
    if op.sweep_variable is None:
        raise ConfigError("sweep needs operation.sweep_variable")
    if op.sweep_start is None or op.sweep_stop is None or op.sweep_count < 1:
        raise ConfigError("empty sweep range")
    values = np.linspace(op.sweep_start, op.sweep_stop, op.sweep_count)
    if op.sweep_variable == "resolution":
        cells = [int(round(v)) for v in values]
        values = np.array(sorted(set(cells), key=cells.index), dtype=float)
    return [float(v) for v in values]


def _monotone_key(row: Dict[str, Any], keys: Sequence[str]) -> Optional[str]:
    return next((key for key in keys if key in row), None)


def flag_monotone(rows: List[Dict[str, Any]], column: str, direction: int, tolerance: float) -> List[bool]:
    """True per row unless the column stepped against `direction` beyond tolerance."""
    flags = [True]
    for previous, current in zip(rows, rows[1:]):
        a, b = previous.get(column), current.get(column)
        if a is None or b is None:
            flags.append(True)
            continue
        step = direction * (b - a)
        flags.append(step >= -tolerance * max(1.0, abs(a), abs(b)))
    return flags


def cmd_sweep(config: RunConfig, out: Optional[str] = None, tolerance: Optional[float] = None) -> int:
    """Evaluate the configured functional along one swept variable."""
    op = config.operation
    variable = op.sweep_variable
    values = sweep_values(op)
    out = out or config.output.path
    seed = get_settings().SEED
    run = prepare(config)
    rows: List[Dict[str, Any]] = []
    reports: List[BalanceReport] = []

    if op.name == "density_ratio" and variable == "sigma":
        estimate = functionals.density_ratio(run.surface, run.base_point, values)
        for i, sigma in enumerate(estimate.sigmas):
            rows.append(
                {
                    "sigma": sigma,
                    "area_ratio": estimate.area_ratios[i],
                    "weighted_ratio": estimate.weighted_ratios[i],
                    "k_extrapolated": functionals.richardson_limit(
                        estimate.sigmas[max(0, i - 2) : i + 1], estimate.area_ratios[max(0, i - 2) : i + 1]
                    ),
                    "k_weighted": functionals.richardson_limit(
                        estimate.sigmas[max(0, i - 2) : i + 1], estimate.weighted_ratios[max(0, i - 2) : i + 1]
                    ),
                }
            )
        write_csv(rows, out)
        _summary(f"density_ratio sweep: k -> {rows[-1]['k_extrapolated']:.6f}", out)
        return EXIT_OK

    history: List[Tuple[int, float]] = []
    for value in values:
        step_run, step_op = run, op
        if variable in ("rho", "sigma"):
            step_op = op.model_copy(update={variable: value})
        elif variable == "t":
            try:
                spec = type(config.surface).model_validate({**config.surface.model_dump(), "radius": value})
            except ValidationError as e:
                raise ConfigError(f"sweep value t={value}: {e.errors()[0]['msg']}") from e
            step_run = prepare(config.model_copy(update={"surface": spec}))
        else:
            step_run = replace(run, surface=run.surface.with_quadrature(base_cells_per_axis=int(value)))
        step_rows, step_reports = run_operation(step_run, step_op, seed, tolerance)
        row = {variable: value, **step_rows[0]}
        if step_reports:
            if variable == "resolution":
                history.append((int(value), step_reports[0].residual))
                order = functionals.convergence_order(history)
                row["observed_order"] = order if order is not None else float("nan")
            row["abs_residual"] = abs(step_reports[0].residual)
        rows.append(row)
        reports.extend(step_reports)

    rule = MONOTONE.get((op.name, variable))
    column, direction = (None, 0)
    if rule:
        column, direction = _monotone_key(rows[0], rule[0]), rule[1]
    elif variable == "resolution" and reports:
        column, direction = "abs_residual", -1
    if column:
        slack = tolerance if tolerance is not None else get_settings().IDENTITY_TOLERANCE
        flags = flag_monotone(rows, column, direction, slack)
        for row, flag in zip(rows, flags):
            row["monotone_ok"] = flag
        if not all(flags):
            logger.warning("%s is not monotone in %s beyond tolerance", column, variable)

    write_csv(rows, out, leading=(variable,))
    failed = _violations(reports)
    _summary(f"{op.name} sweep over {variable}: {len(rows)} row(s), {len(failed)} violation(s)", out)
    return EXIT_VIOLATION if failed else EXIT_OK


def cmd_verify(
    names: Sequence[str] = ("all",),
    out: Optional[str] = None,
    tolerance: Optional[float] = None,
    threads: Optional[int] = None,
    refinement_levels: int = 1,
) -> int:
    """Run the acceptance corpus through the verification workflow; exit 0 iff every item passes."""
    configurable: Dict[str, Any] = {"refinement_levels": refinement_levels}
    if tolerance is not None:
        configurable["tolerance"] = tolerance
    if threads is not None:
        apply_overrides(threads=threads)
    results = VerificationWorkflow().run_all(names, config={"configurable": configurable})

    rows = []
    for result in results:
        report = result["report"]
        line = f"{result['verdict']} {result['name']}"
        if report is not None:
            line += f" residual={report.residual:.3e} margin={report.margin:.3e} tolerance={report.tolerance:.1e}"
        if result.get("problem"):
            line += f" ({result['problem']})"
        if result.get("error"):
            line += f" error: {result['error']}"
        print(line)
        rows.append(
            {
                "item": result["name"],
                "verdict": result["verdict"],
                "residual": report.residual if report else None,
                "margin": report.margin if report else None,
                "tolerance": report.tolerance if report else None,
                "seconds": result["seconds"],
            }
        )
    if out:
        write_csv(rows, out)
    failures = sum(result["verdict"] != "PASS" for result in results)
    print(f"{len(results) - failures}/{len(results)} passed")
    return EXIT_VIOLATION if failures else EXIT_OK


def cmd_equality_case(config: RunConfig, out: Optional[str] = None, tolerance: Optional[float] = None) -> int:
    """Two-point equality-case test; a geodesic sphere must reproduce it to tolerance."""
    run = prepare(config)
    out = out or config.output.path
    op = config.operation.model_copy(update={"name": "equality_case_residual"})
    rows, _ = run_operation(run, op, get_settings().SEED)
    write_csv(rows, out)
    row = rows[0]
    limit = tolerance if tolerance is not None else EQUALITY_CASE_TOLERANCE
    sphere = config.surface.family == "geodesic_sphere"
    failed = sphere and (row["max_residual"] > limit or not row["mean_curvature_positive"])
    _summary(
        f"equality case on {config.surface.family}: max residual {row['max_residual']:.3e} "
        f"over {row['pairs_evaluated']} pair(s){' VIOLATED' if failed else ''}",
        out,
    )
    return EXIT_VIOLATION if failed else EXIT_OK
