"""
lorentz-align.

Application entry point. Vector files hold one vector per row (header
``t,x,y,z`` for 4-vectors, ``x,y,z`` for 3-vectors); the library works on the
transpose, with vectors as columns.

Exit codes: 0 success, 2 success with diagnostics, 1 failure. Failures print
``error: <reason>: <message>`` on stderr.
"""

import functools
import json
import logging
import time
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import NoReturn, Optional

import click
import numpy as np
from pydantic import ValidationError

from align.euclid import (
    align_rotation_lie,
    horn,
    kabsch,
    quat_to_matrix,
    rotation_to_vector,
)
from align.lorentz import AlignmentMethod, ExpPath, SolverOptions, align_direct, align_lie, error_norms
from bench.harness import (
    BenchConfig,
    make_trial_data,
    run_benchmark,
    sanity_case,
    summarize,
    timing_ratios,
    trial_rng,
    write_metadata,
    write_summary_csv,
    write_trials_csv,
)
from constants import (
    KB,
    LORENTZ_ALIGN_LOG_NAME,
    SANITY_DET_TOL,
    SANITY_DIRECT_MAX_ERROR,
    SANITY_LIE_MAX_ERROR,
    SETTINGS_CONFIG_FILE,
)
from errors import (
    ConfigError,
    IncompatibleMethodError,
    InvalidInputError,
    LorentzAlignError,
)
from lie.lorentz import LorentzAlgebraElement, exp_lorentz
from utils import (
    EUCLID_HEADER,
    LORENTZ_HEADER,
    AppSettings,
    ExitCodes,
    format_human,
    format_machine,
    load_settings,
    matrix_lines,
    parse_triple,
    read_vector_file,
    write_matrix_file,
    write_vector_file,
)


LORENTZ = "lorentz"
SO3 = "so3"
METHODS_BY_GROUP = {
    LORENTZ: ("direct", "lie"),
    SO3: ("kabsch", "horn", "lie"),
}
BENCH_METHODS = {
    "direct": AlignmentMethod.DIRECT,
    "lie": AlignmentMethod.LIE,
    "lie-series": AlignmentMethod.LIE_SERIES,
}

logger = logging.getLogger(LORENTZ_ALIGN_LOG_NAME)

log_fmt = "%(asctime)s - %(name)s - [%(levelname)s] - %(message)s"


def configure_logging(settings: AppSettings) -> None:
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    logger.setLevel(logging.DEBUG)

    if settings.log_file:
        log_handler = RotatingFileHandler(settings.log_file, maxBytes=80 * KB, backupCount=4)
        log_handler.setLevel(settings.log_level)
        log_handler.setFormatter(logging.Formatter(log_fmt))
        logger.addHandler(log_handler)

    # Console logging (stderr, so stdout stays machine-readable)
    console_handler = logging.StreamHandler()
    console_handler.setLevel(settings.console_level)
    console_handler.setFormatter(logging.Formatter(log_fmt))
    logger.addHandler(console_handler)


def _fail(reason: str, message: str) -> NoReturn:
    click.echo(f"error: {reason}: {message}", err=True)
    raise click.exceptions.Exit(ExitCodes.FAILURE.value)


def _finish(code: ExitCodes) -> NoReturn:
    raise click.exceptions.Exit(code.value)


def reports_errors(command):
    """Turn library exceptions into the one-line stderr report and exit code 1."""

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        try:
            return command(*args, **kwargs)
        except (click.exceptions.Exit, click.ClickException):
            raise
        except LorentzAlignError as exc:
            logger.info({"operation": command.__name__, "status": exc.reason, "message": str(exc)})
            _fail(exc.reason, str(exc))
        except Exception as exc:
            logger.exception(f"{command.__name__}(): unexpected failure")
            _fail("internal", str(exc))

    return wrapper


@click.group()
@click.option(
    "--settings",
    "settings_path",
    type=click.Path(dir_okay=False, path_type=Path),
    default=None,
    help=f"INI settings file (default: ./{SETTINGS_CONFIG_FILE} when present).",
)
@click.pass_context
def cli(ctx: click.Context, settings_path: Optional[Path]):
    """Optimal rotation and Lorentz alignment of paired vector sets."""
    try:
        settings = load_settings(settings_path)
    except ConfigError as exc:
        _fail(exc.reason, str(exc))
    configure_logging(settings)
    ctx.obj = settings


def _lorentz_report(a_rows: np.ndarray, b_rows: np.ndarray, method: str, opts: SolverOptions):
    x, y = a_rows.T, b_rows.T
    result = align_direct(x, y, opts) if method == "direct" else align_lie(x, y)
    report = {
        "group": LORENTZ,
        "method": result.method.value,
        "matrix": result.lorentz.m.tolist(),
        "zeta": result.algebra.zeta.tolist(),
        "theta": result.algebra.theta.tolist(),
        "residual": result.residual,
        "iterations": result.iterations,
        "converged": result.converged,
        "projection_residual": result.projection_residual,
        "diagnostics": [d.value for d in result.diagnostics],
    }
    return report, result.lorentz.m


def _rotation_report(a_rows: np.ndarray, b_rows: np.ndarray, method: str):
    a, b = a_rows.T, b_rows.T
    report = {"group": SO3, "method": method}
    if method == "kabsch":
        res = kabsch(a, b)
        rotation = res.rotation.m
        report["rotation_vector"] = rotation_to_vector(rotation).tolist()
        report["singular_values"] = res.singular_values.tolist()
    elif method == "horn":
        res = horn(a, b)
        rotation = quat_to_matrix(res.quaternion).m
        report["quaternion"] = res.quaternion.as_array().tolist()
        report["eigengap"] = res.eigengap
    else:
        res = align_rotation_lie(a, b)
        rotation = res.rotation.m
        report["rotation_vector"] = res.rotation_vector.tolist()
        report["projection_residual"] = res.projection_residual
    report["matrix"] = rotation.tolist()
    report["residual"] = float(np.sum((b - rotation @ a) ** 2))
    report["diagnostics"] = [d.value for d in res.diagnostics]
    return report, rotation


def _echo_report(report: dict) -> None:
    click.echo(f"group: {report['group']}  method: {report['method']}")
    click.echo("matrix:")
    for line in matrix_lines(np.array(report["matrix"])):
        click.echo(f"  {line}")
    for key in ("zeta", "theta", "quaternion", "rotation_vector"):
        if key in report:
            click.echo(f"{key}: {', '.join(format_machine(v) for v in report[key])}")
    click.echo(f"residual: {format_human(report['residual'])}")
    if report.get("projection_residual") is not None:
        click.echo(f"projection_residual: {format_human(report['projection_residual'])}")
    if "iterations" in report:
        click.echo(f"iterations: {report['iterations']}")
    click.echo(f"diagnostics: {', '.join(report['diagnostics']) or 'none'}")


@cli.command()
@click.argument("frame_a", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.argument("frame_b", type=click.Path(exists=True, dir_okay=False, path_type=Path))
@click.option("--group", type=click.Choice([LORENTZ, SO3]), default=LORENTZ, show_default=True)
@click.option(
    "--method",
    type=click.Choice(["direct", "lie", "kabsch", "horn"]),
    default="lie",
    show_default=True,
    help="lorentz: direct|lie; so3: kabsch|horn|lie.",
)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), help="Write the fitted matrix as CSV.")
@click.option("--json", "as_json", is_flag=True, help="Print the report as JSON.")
@click.option(
    "--warm-start/--cold-start",
    default=None,
    help="direct method: start from the lie-algebra estimate (default from settings).",
)
@click.pass_obj
@reports_errors
def align(settings: AppSettings, frame_a, frame_b, group, method, out, as_json, warm_start):
    """Fit the transformation taking FRAME_A vectors onto FRAME_B vectors (one vector per row)."""
    if method not in METHODS_BY_GROUP[group]:
        raise IncompatibleMethodError(f"method '{method}' is not available for group '{group}'")

    header = LORENTZ_HEADER if group == LORENTZ else EUCLID_HEADER
    a_rows = read_vector_file(frame_a, header)
    b_rows = read_vector_file(frame_b, header)
    if a_rows.shape[0] != b_rows.shape[0]:
        raise InvalidInputError(f"frame A has {a_rows.shape[0]} vectors but frame B has {b_rows.shape[0]}")

    if group == LORENTZ:
        opts = settings.solver
        if warm_start is not None:
            opts = opts.copy(update={"warm_start": warm_start})
        report, matrix = _lorentz_report(a_rows, b_rows, method, opts)
    else:
        report, matrix = _rotation_report(a_rows, b_rows, method)

    logger.debug({"operation": "align", "status": "ok", "group": group, "method": method, "n": a_rows.shape[0]})
    if out is not None:
        write_matrix_file(out, matrix)
    if as_json:
        click.echo(json.dumps(report, indent=2))
    else:
        _echo_report(report)
    _finish(ExitCodes.WARNING if report["diagnostics"] else ExitCodes.OK)


def _timed(solve):
    start = time.perf_counter()
    result = solve()
    return result, time.perf_counter() - start


def _det_defect(result) -> float:
    return abs(float(np.linalg.det(result.lorentz.m)) - 1.0)


@cli.command()
@click.option("--json", "as_json", is_flag=True, help="Print the checks as JSON.")
@click.pass_obj
@reports_errors
def sanity(settings: AppSettings, as_json):
    """Recover a known x-boost of four timelike vectors with both Lorentz methods and both exponentials."""
    x, y, truth = sanity_case()

    lie, lie_time = _timed(lambda: align_lie(x, y, ExpPath.HABER))
    lie_series, lie_series_time = _timed(lambda: align_lie(x, y, ExpPath.SERIES))
    direct, direct_time = _timed(lambda: align_direct(x, y, settings.solver))

    lie_error = error_norms(lie.lorentz, truth).max_abs
    lie_series_error = error_norms(lie_series.lorentz, truth).max_abs
    direct_error = error_norms(direct.lorentz, truth).max_abs
    checks = [
        ("lie_max_error", lie_error, SANITY_LIE_MAX_ERROR),
        ("lie_series_max_error", lie_series_error, SANITY_LIE_MAX_ERROR),
        ("direct_max_error", direct_error, SANITY_DIRECT_MAX_ERROR),
        ("haber_det_defect", _det_defect(lie), SANITY_DET_TOL),
        ("series_det_defect", _det_defect(lie_series), SANITY_DET_TOL),
    ]
    failures = [(name, value, limit) for name, value, limit in checks if not value <= limit]
    if lie_error > direct_error and max(lie_error, direct_error) > SANITY_DIRECT_MAX_ERROR:
        failures.append(("lie_vs_direct_error", lie_error, direct_error))
    timings = [("lie_time_s", lie_time), ("lie_series_time_s", lie_series_time), ("direct_time_s", direct_time)]

    if as_json:
        payload = {name: value for name, value, _ in checks}
        payload.update(timings)
        payload["failures"] = [name for name, _, _ in failures]
        click.echo(json.dumps(payload, indent=2))
    else:
        for name, value, limit in checks:
            status = "ok" if value <= limit else "FAIL"
            click.echo(f"{name:<22} {format_human(value):>12}  (limit {format_human(limit)})  {status}")
        for name, value in timings:
            click.echo(f"{name:<22} {format_human(value):>12}")

    if failures:
        name, value, limit = failures[0]
        _fail("threshold", f"{name}={format_machine(value)} exceeds {format_machine(limit)}")
    _finish(ExitCodes.OK)


def _bench_config(settings: AppSettings, config_path: Optional[Path], overrides: dict) -> BenchConfig:
    values = {"workers": settings.workers, "solver": settings.solver}
    if config_path is not None:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{config_path}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{config_path}: expected a JSON object of BenchConfig fields")
        values.update(loaded)
    values.update(overrides)
    if "seed" not in values:
        raise ConfigError("a seed is required (--seed or 'seed' in the config file)")
    try:
        return BenchConfig(**values)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from exc


@cli.command()
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False, path_type=Path),
              help="JSON file with BenchConfig fields; flags override it.")
@click.option("--n", "n_vectors", type=int, multiple=True, help="Vector count (repeatable).")
@click.option("--eps", "noise_eps", type=float, multiple=True, help="Noise level (repeatable).")
@click.option("--trials", type=int)
@click.option("--seed", type=int)
@click.option("--method", "methods", type=click.Choice(sorted(BENCH_METHODS)), multiple=True)
@click.option("--workers", type=int)
@click.option("--noise-after-boost", is_flag=True, help="Add noise in frame B after boosting.")
@click.option("--no-timing", is_flag=True, help="Write wall times as 0 for byte-identical output.")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), required=True, help="Trial CSV.")
@click.option("--summary", type=click.Path(dir_okay=False, path_type=Path), help="Summary CSV.")
@click.pass_obj
@reports_errors
def benchmark(settings: AppSettings, config_path, n_vectors, noise_eps, trials, seed, methods, workers,
              noise_after_boost, no_timing, out, summary):
    """Run the randomized accuracy/timing grid."""
    overrides = {}
    if n_vectors:
        overrides["n_vectors"] = list(n_vectors)
    if noise_eps:
        overrides["noise_eps"] = list(noise_eps)
    if methods:
        overrides["methods"] = [BENCH_METHODS[m] for m in methods]
    for key, value in (("trials", trials), ("seed", seed), ("workers", workers)):
        if value is not None:
            overrides[key] = value
    if noise_after_boost:
        overrides["noise_after_boost"] = True
    if no_timing:
        overrides["record_timing"] = False

    cfg = _bench_config(settings, config_path, overrides)
    records = run_benchmark(cfg)
    write_trials_csv(out, records)
    write_metadata(out, cfg)
    rows = summarize(records)
    if summary is not None:
        write_summary_csv(summary, rows)

    click.echo(f"{'n':>4} {'eps':>8} {'method':>18} {'median_frob':>12} {'p95_frob':>12} "
               f"{'median_max':>12} {'mean_time_s':>12} {'failed':>10}")
    for row in rows:
        failed_share = f"{row.failed}/{row.trials}"
        click.echo(
            f"{row.n:>4} {format_human(row.eps):>8} {row.method.value:>18} {format_human(row.median_frob):>12} "
            f"{format_human(row.p95_frob):>12} {format_human(row.median_max):>12} {format_human(row.mean_time_s):>12} "
            f"{failed_share:>10}"
        )
    if cfg.record_timing:
        for (n, eps), ratio in timing_ratios(rows).items():
            click.echo(f"direct/lie time n={n} eps={format_human(eps)}: {format_human(ratio)}x")

    failed = sum(1 for r in records if not r.converged)
    if failed:
        logger.warning({"operation": "benchmark", "status": "failed_trials", "count": failed})
    _finish(ExitCodes.WARNING if failed else ExitCodes.OK)


@cli.command()
@click.option("--n", "n", type=int, required=True, help="Number of vectors.")
@click.option("--eps", type=float, default=0.0, show_default=True, help="Noise level in frame B.")
@click.option("--seed", type=int, required=True)
@click.option("--out-a", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--out-b", type=click.Path(dir_okay=False, path_type=Path), required=True)
@click.option("--zeta", help="Boost coordinates 'z1,z2,z3' (default: sampled).")
@click.option("--theta", help="Rotation coordinates 't1,t2,t3' (default: sampled).")
@click.option("--sigma", type=float, default=0.3, show_default=True, help="Spread of spatial components.")
@click.option("--noise-after-boost", is_flag=True)
@click.option("--json", "as_json", is_flag=True)
@click.pass_obj
@reports_errors
def generate(settings: AppSettings, n, eps, seed, out_a, out_b, zeta, theta, sigma, noise_after_boost, as_json):
    """Write a paired pair of unit-timelike vector files."""
    if n < 1:
        raise InvalidInputError(f"--n must be at least 1, got {n}")
    if not eps >= 0.0:
        raise InvalidInputError(f"--eps must be nonnegative, got {eps}")
    if not sigma >= 0.0:
        raise InvalidInputError(f"--sigma must be nonnegative, got {sigma}")
    if seed < 0:
        raise InvalidInputError(f"--seed must be nonnegative, got {seed}")

    element = None
    if zeta is not None or theta is not None:
        element = LorentzAlgebraElement(
            zeta=parse_triple(zeta, "--zeta") if zeta is not None else np.zeros(3),
            theta=parse_triple(theta, "--theta") if theta is not None else np.zeros(3),
        )
    element, x, y = make_trial_data(
        trial_rng(seed), n, eps, sigma_vectors=sigma, noise_after_boost=noise_after_boost, element=element
    )
    write_vector_file(out_a, x.T)
    write_vector_file(out_b, y.T)

    matrix = exp_lorentz(element).m
    if as_json:
        click.echo(
            json.dumps(
                {"zeta": element.zeta.tolist(), "theta": element.theta.tolist(), "matrix": matrix.tolist()},
                indent=2,
            )
        )
    else:
        click.echo(f"zeta: {', '.join(format_machine(v) for v in element.zeta)}")
        click.echo(f"theta: {', '.join(format_machine(v) for v in element.theta)}")
        click.echo("matrix:")
        for line in matrix_lines(matrix):
            click.echo(f"  {line}")
    _finish(ExitCodes.OK)


if __name__ == "__main__":
    cli()
