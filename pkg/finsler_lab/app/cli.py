"""
Command-line entry point.

    uv run main.py <subcommand> [options]

Subcommands: validate, geodesic, volumes, recurrence, convexity, busemann,
verify. Every run writes a JSON RunReport (to --out, or under
FINSLER_LAB_OUTPUT_DIR) and prints a one-line summary. Exit codes: 0 success,
1 internal error, 2 usage or configuration error, 3 numeric or validation
failure, 4 inconclusive.
"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from .busemann import (
    build_ray,
    busemann_convexity_report,
    busemann_value,
    field_for,
    finsler_distance,
)
from .cache import FieldCache
from .dynamics import (
    CANDIDATES,
    find_recurrences,
    key_lemma_check,
    recurrence_census,
    sample_unit_states,
    theorem_demo,
)
from .errors import ConfigError, FinslerLabError
from .geodesics import PhaseState, integrate_flow
from .manifold import ManifoldModel, load_model, unbounded
from .metric_core import MetricSpec, load_metric, validate_metric
from .models import (
    DistanceOptions,
    IntegrationOptions,
    LemmaVerdict,
    ModelKind,
    ScreenOptions,
    VolumeKind,
    VolumeVerdict,
)
from .quadrature import sphere_quadrature
from .reporting import (
    RunReport,
    default_conventions,
    jsonable,
    output_path,
    published_schema,
    timed,
    trace_header,
    version_text,
    write_csv,
    write_report,
)
from .settings import get_settings
from .verification import run_suite
from .volumes import (
    fit_bh_exponent,
    manifold_volume,
    sm_finiteness,
    sm_symplectic_volume,
    volume_comparison_report,
)

logger = logging.getLogger(__name__)

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_FAILURE, EXIT_INCONCLUSIVE = 0, 1, 2, 3, 4

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0
NAMED_DIRECTIONS = {
    "irrational": (1.0, GOLDEN),
    "rational": (1.0, 0.5),
    "horizontal": (1.0, 0.0),
}


# --- argument types -------------------------------------------------------------------

def vector(text: str) -> Tuple[float, ...]:
    try:
        values = tuple(float(v) for v in text.replace(" ", "").split(",") if v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'")
    if not values:
        raise argparse.ArgumentTypeError("expected at least one number")
    return values


def positive(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got '{text}'")
    if not value > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return value


def existing_file(text: str) -> Path:
    path = Path(text)
    if not path.is_file():
        raise argparse.ArgumentTypeError(f"file not found: {text}")
    return path


# --- shared plumbing ------------------------------------------------------------------

def _metric_and_model(args) -> Tuple[MetricSpec, ManifoldModel]:
    model = load_model(args.model) if getattr(args, "model", None) else None
    if args.metric is not None:
        metric = load_metric(args.metric)
    elif model is not None and model.kind == ModelKind.WARPED:
        metric = model.surface_metric
    else:
        raise ConfigError("a metric file is required unless the model is a warped surface", field="--metric")
    if model is None:
        model = unbounded(metric.dim)
    if model.dim != metric.dim:
        raise ConfigError(f"model dimension {model.dim} does not match metric dimension {metric.dim}",
                          field="--model")
    return metric, model


def _csv_path(args) -> Optional[Path]:
    """`--csv`, or `--out` when it names a .csv file."""
    if getattr(args, "csv", None):
        return args.csv
    if args.out is not None and args.out.suffix.lower() == ".csv":
        return args.out
    return None


def _report_path(args) -> Path:
    """A .csv `--out` keeps the JSON report beside it under the same stem."""
    out = args.out
    if out is not None and out.suffix.lower() == ".csv":
        out = out.with_suffix(".json")
    return output_path(out, f"{args.command}.json")


def _integration(args) -> IntegrationOptions:
    defaults = IntegrationOptions()
    return IntegrationOptions(
        tol=args.tol or defaults.tol, rtol=args.rtol or defaults.rtol, atol=args.atol or defaults.atol,
        backward=getattr(args, "backward", False),
    )


def _state(metric: MetricSpec, x0, y0) -> PhaseState:
    if len(x0) != metric.dim or len(y0) != metric.dim:
        raise ConfigError(f"--x0 and --y0 need {metric.dim} components", field="--x0/--y0")
    return PhaseState.unit(metric, x0, y0)


def _cache() -> Optional[FieldCache]:
    return FieldCache() if get_settings().cache_enabled else None


def _config_echo(args) -> Dict[str, Any]:
    skip = {"func", "verbose", "progress", "workers", "out"}
    return jsonable({k: v for k, v in sorted(vars(args).items()) if k not in skip})


# --- subcommands ----------------------------------------------------------------------
# Each returns (results, exit code, summary line).

def cmd_validate(args) -> Tuple[Dict[str, Any], int, str]:
    metric, model = _metric_and_model(args)
    report = validate_metric(metric, model, n_samples=args.samples, seed=args.seed)
    failed = [c.name for c in report.checks if not c.passed]
    summary = f"{metric.label}: " + ("all checks pass" if not failed else f"failed {', '.join(failed)}")
    return {"validation": report}, EXIT_OK if report.passed else EXIT_FAILURE, summary


def cmd_geodesic(args):
    metric, model = _metric_and_model(args)
    state = _state(metric, args.x0, args.y0)
    trace = integrate_flow(metric, model, state, args.t, options=_integration(args))
    if args.samples:
        trace = trace.resample(args.samples)
    csv = _csv_path(args)
    if csv:
        write_csv(csv, trace_header(metric.dim), trace.rows())
    results = {
        "t_end": trace.t_end, "samples": len(trace), "F_drift": trace.F_drift, "tolerance": _integration(args).tol,
        "length": trace.length, "final": {"x": trace.xs[-1], "y": trace.ys[-1]}, "csv": csv,
    }
    return results, EXIT_OK, f"F drift {trace.F_drift:.2e} over t={trace.t_end:g}"


def cmd_volumes(args):
    metric, model = _metric_and_model(args)
    q = sphere_quadrature(metric.dim, args.quad_nodes) if args.quad_nodes else None
    if args.kind in ("bh", "ht", "omega"):
        result = manifold_volume(metric, model, VolumeKind(args.kind), grid=args.grid, q=q, levels=args.levels)
        csv = _csv_path(args)
        if csv:
            write_csv(csv, ["bound", "value"], [[t.bound, t.value] for t in result.truncations])
        code = {VolumeVerdict.INCONCLUSIVE: EXIT_INCONCLUSIVE}.get(result.verdict, EXIT_OK)
        value = "infinite" if result.infinite else (
            "inconclusive" if result.value is None else f"{result.value:.10g} +- {result.error_estimate:.1e}")
        return {"volume": result}, code, f"vol_{args.kind} = {value}"
    if args.kind == "compare":
        report = volume_comparison_report(metric, model, grid=args.grid, q=q)
        csv = _csv_path(args)
        if csv:
            vol_alpha = np.nan if report.vol_alpha is None else report.vol_alpha
            write_csv(csv, ["vol_bh", "vol_ht", "vol_alpha"], [[report.vol_bh, report.vol_ht, vol_alpha]])
        failed = [c.statement for c in report.checks if not c.holds]
        return {"comparison": report}, EXIT_OK, f"observed {report.observed_order}" + (
            f"; failed {failed}" if failed else "")
    if args.kind == "sm":
        result = sm_symplectic_volume(metric, model, q=q, grid=args.grid)
        results = {"symplectic": result}
        if not model.is_compact:
            results["finiteness"] = sm_finiteness(metric, model, q=q, grid=args.grid, levels=args.levels)
        return results, EXIT_OK, f"two vol_HT paths differ by {result.relative_gap:.1e}"
    fits = [fit_bh_exponent(n, q=sphere_quadrature(n, args.quad_nodes) if args.quad_nodes else None)
            for n in (2, 3)]
    return {"exponent_fits": fits}, EXIT_OK, ", ".join(f"n={f.n}: k={f.exponent:.8f}" for f in fits)


def cmd_recurrence(args):
    metric, model = _metric_and_model(args)
    options = _integration(args)
    if args.census:
        census = recurrence_census(metric, model, args.census, args.seed, args.t_max, args.eps, t_min=args.t_min,
                                   options=options, workers=args.workers, progress=args.progress)
        csv = _csv_path(args)
        if csv:
            rows = [[i, np.nan if t is None else t] for i, t in enumerate(census.first_return_times)]
            write_csv(csv, ["state", "first_return"], rows)
        return {"census": census}, EXIT_OK, f"recurrent fraction {census.fraction:.3f}"
    if args.dir:
        y0 = NAMED_DIRECTIONS[args.dir]
        x0 = args.x0 or (0.0,) * metric.dim
    elif args.y0:
        x0, y0 = args.x0 or (0.0,) * metric.dim, args.y0
    else:
        x0, y0 = None, None
    state = _state(metric, x0, y0) if y0 is not None else sample_unit_states(metric, model, 1, args.seed)[0]
    events = find_recurrences(metric, model, state, args.t_max, args.eps, t_min=args.t_min, options=options)
    csv = _csv_path(args)
    if csv:
        write_csv(csv, ["t", "phase_distance"], [[e.t, e.phase_distance] for e in events] or np.empty((0, 2)))
    results = {"state": {"x": state.x, "y": state.y}, "events": events, "count": len(events)}
    return results, EXIT_OK if events else EXIT_INCONCLUSIVE, f"{len(events)} returns within eps={args.eps:g}"


def _screen(args) -> ScreenOptions:
    return ScreenOptions(ensemble=args.ensemble, horizon=args.horizon, samples=args.samples, seed=args.seed)


def cmd_convexity(args):
    metric, model = _metric_and_model(args)
    if args.key_lemma:
        if args.key_lemma not in CANDIDATES:
            raise ConfigError(f"unknown candidate; choose from {sorted(CANDIDATES)}", field="--key-lemma")
        f = CANDIDATES[args.key_lemma](model)
        state = _state(metric, args.x0, args.y0) if args.y0 else sample_unit_states(metric, model, 1, args.seed)[0]
        result = key_lemma_check(metric, model, f, state, args.t_max, args.eps, args.lemma_tol,
                                 screen=_screen(args), options=_integration(args))
        code = {LemmaVerdict.INCONCLUSIVE: EXIT_INCONCLUSIVE}.get(result.verdict, EXIT_OK)
        return {"key_lemma": result}, code, f"{args.key_lemma}: {result.verdict.value}"
    candidates = args.candidates.split(",") if args.candidates else None
    report = theorem_demo(metric, model, candidates, screen=_screen(args), grid=args.grid, progress=args.progress)
    csv = _csv_path(args)
    if csv:
        rows = [[i, o.convex_along_ensemble, o.nonconstant, o.max_defect, o.spread]
                for i, o in enumerate(report.candidates)]
        write_csv(csv, ["candidate", "convex", "nonconstant", "max_defect", "spread"], rows)
    flagged = [o.name for o in report.candidates if o.convex_and_nonconstant]
    summary = f"finite volume {report.finite_volume}; convex and nonconstant: {flagged or 'none'}"
    return {"theorem": report}, EXIT_OK if report.consistent else EXIT_FAILURE, summary


def cmd_busemann(args):
    metric, model = _metric_and_model(args)
    cache = _cache()
    options = DistanceOptions(resolution=args.grid, method=args.method)
    t_list = sorted(args.t_list)
    origin = _state(metric, args.ray_origin, args.ray_dir)
    ray = build_ray(metric, model, origin, t_list[-1], checkpoints=args.checkpoints, options=options,
                    cache=cache)
    results: Dict[str, Any] = {"certificate": ray.certificate}
    points = [tuple(p) for p in args.point] if args.point else [tuple(ray.point(t_list[0]))]
    results["values"] = [
        {"x": p, "busemann": busemann_value(metric, model, ray, np.array(p), t_list, options, cache)} for p in points
    ]
    if args.distance:
        x0, x1 = args.distance[: metric.dim], args.distance[metric.dim:]
        if len(x1) != metric.dim:
            raise ConfigError(f"--distance needs {2 * metric.dim} numbers", field="--distance")
        results["distance"] = finsler_distance(metric, model, x0, x1, options, cache)
    if args.convexity:
        results["convexity"] = busemann_convexity_report(metric, model, ray, ensemble=args.convexity,
                                                         seed=args.seed, options=options, cache=cache)
    if args.field_csv:
        field = field_for(metric, model, ray.point(t_list[-1]), np.array(model.box()), options, forward=False,
                          cache=cache)
        matrix = field.grid().reshape(field.shape[0], -1)
        write_csv(args.field_csv, [f"j{j}" for j in range(matrix.shape[1])], matrix)
        results["field"] = {"csv": args.field_csv, "lower": field.lower, "spacing": field.spacing,
                            "shape": list(field.shape)}
    code = EXIT_OK if ray.certificate.all_certified else EXIT_FAILURE
    last = results["values"][0]["busemann"]
    return results, code, f"b(x) ~ {last.limit:.8g} +- {last.error_bar:.1e}; ray certified: " \
                          f"{ray.certificate.all_certified}"


def cmd_verify(args):
    only = args.only.split(",") if args.only else None
    results = run_suite(args.suite, args.fixtures, seed=args.seed, only=only, progress=args.progress)
    failed = [r.name for r in results if not r.passed]
    deviations = {r.name: r.deviation for r in results if r.deviation}
    for r in results:
        print(f"{'✅' if r.passed else '❌'} {r.name}: {r.reason}")
        if r.deviation:
            print(f"   ⚠️ documented deviation: {r.deviation}")
    summary = f"{len(results) - len(failed)}/{len(results)} checks pass"
    if deviations:
        summary += f", {len(deviations)} documented deviation" + ("s" if len(deviations) > 1 else "")
    results_json = {"suite": args.suite, "checks": results, "failed": failed, "documented_deviations": deviations}
    return results_json, EXIT_FAILURE if failed else EXIT_OK, summary


# --- parser ---------------------------------------------------------------------------

def _common(parser: argparse.ArgumentParser, model: bool = True, metric_required: bool = False) -> None:
    parser.add_argument("--metric", type=existing_file, required=metric_required, help="Metric JSON document")
    if model:
        parser.add_argument("--model", type=existing_file, help="Model JSON document (default: unbounded chart)")
    parser.add_argument("--seed", type=int, default=0, help="Master seed")
    parser.add_argument("--out", type=Path,
                        help="JSON report path (default: $FINSLER_LAB_OUTPUT_DIR/<cmd>.json); a .csv path receives "
                             "the CSV export and the report is written beside it as .json")


def _tolerances(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--tol", type=positive, help="Accepted F drift (default 1e-8)")
    parser.add_argument("--rtol", type=positive, help="RK45 relative tolerance")
    parser.add_argument("--atol", type=positive, help="RK45 absolute tolerance")


def build_parser() -> argparse.ArgumentParser:
    settings = get_settings()
    parser = argparse.ArgumentParser(
        prog="finsler-lab",
        description="Numerical Finsler geometry laboratory",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  uv run main.py validate --metric fixtures/randers_b05.json --model fixtures/torus_1x1.json
  uv run main.py geodesic --metric fixtures/riemannian_warp.json --x0 0,0 --y0 1,0.5 --t 10 --csv trace.csv
  uv run main.py volumes --metric fixtures/randers_b05.json --model fixtures/torus_1x1.json --kind ht
  uv run main.py recurrence --metric fixtures/euclid.json --model fixtures/torus_1x1.json --dir irrational --t-max 1e4
  uv run main.py busemann --metric fixtures/euclid.json --ray-dir 1,0 --t-list 10,100 --point 2,1
  uv run main.py verify --suite fast
        """,
    )
    parser.add_argument("--version", action="version", version=version_text())
    parser.add_argument("--print-schema", action="store_true", help="Print the report and document JSON schemas")
    parser.add_argument("--workers", type=int, default=settings.workers, help="Parallel orbits (census)")
    parser.add_argument("--progress", action="store_true", help="Progress bars on stderr")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = parser.add_subparsers(dest="command", metavar="<subcommand>")

    p = sub.add_parser("validate", help="Check the Finsler assumptions on sampled points")
    _common(p, metric_required=True)
    p.add_argument("--samples", type=int, default=200)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("geodesic", help="Integrate one geodesic and export its trace")
    _common(p)
    _tolerances(p)
    p.add_argument("--x0", type=vector, required=True)
    p.add_argument("--y0", type=vector, required=True, help="Initial velocity, rescaled to F = 1")
    p.add_argument("--t", type=positive, required=True, help="Parameter length")
    p.add_argument("--samples", type=int, help="Resample the trace uniformly")
    p.add_argument("--backward", action="store_true", help="Integrate on [-t, 0]")
    p.add_argument("--csv", type=Path, help="Trace CSV: t, x1..xn, y1..yn, F")
    p.set_defaults(func=cmd_geodesic)

    p = sub.add_parser("volumes", help="BH, HT and Hilbert-form volumes and their comparisons")
    _common(p)
    p.add_argument("--kind", choices=["bh", "ht", "omega", "compare", "sm", "exponent"], default="ht")
    p.add_argument("--grid", type=int, default=32, help="Midpoint cells per axis")
    p.add_argument("--quad-nodes", type=int, help="Sphere quadrature resolution")
    p.add_argument("--levels", type=int, default=4, help="Truncation levels for models that are not compact")
    p.add_argument("--csv", type=Path,
                   help="CSV export: truncation sequence, or vol_bh, vol_ht, vol_alpha for --kind compare")
    p.set_defaults(func=cmd_volumes)

    p = sub.add_parser("recurrence", help="Returns of the geodesic flow near a phase point")
    _common(p)
    _tolerances(p)
    p.add_argument("--x0", type=vector)
    p.add_argument("--y0", type=vector)
    p.add_argument("--dir", choices=sorted(NAMED_DIRECTIONS), help="Named initial direction")
    p.add_argument("--t-max", type=positive, default=1e3)
    p.add_argument("--eps", type=positive, default=1e-2)
    p.add_argument("--t-min", type=positive, default=1.0, help="Burn-in before a return counts")
    p.add_argument("--census", type=int, help="Sample this many unit states and report the recurrent fraction")
    p.add_argument("--csv", type=Path, help="Events (or first-return times) CSV")
    p.set_defaults(func=cmd_recurrence)

    p = sub.add_parser("convexity", help="Convexity screen of candidate functions")
    _common(p)
    _tolerances(p)
    p.add_argument("--candidates", help=f"Comma-separated subset of {','.join(sorted(CANDIDATES))}")
    p.add_argument("--ensemble", type=int, default=200)
    p.add_argument("--horizon", type=positive, default=8.0)
    p.add_argument("--samples", type=int, default=81)
    p.add_argument("--grid", type=int, default=16, help="Volume grid for the finiteness verdict")
    p.add_argument("--key-lemma", metavar="CANDIDATE", help="Check constancy of a candidate along one orbit")
    p.add_argument("--x0", type=vector)
    p.add_argument("--y0", type=vector)
    p.add_argument("--t-max", type=positive, default=1e3)
    p.add_argument("--eps", type=positive, default=1e-2)
    p.add_argument("--lemma-tol", type=positive, default=1e-6)
    p.add_argument("--csv", type=Path, help="Per-candidate summary CSV")
    p.set_defaults(func=cmd_convexity)

    p = sub.add_parser("busemann", help="Rays, Busemann approximants and their convexity")
    _common(p)
    p.add_argument("--ray-origin", type=vector, default=(0.0, 0.0))
    p.add_argument("--ray-dir", type=vector, required=True)
    p.add_argument("--t-list", type=vector, required=True, help="Increasing times; the last is the ray horizon")
    p.add_argument("--point", type=vector, action="append", help="Evaluation point (repeatable)")
    p.add_argument("--checkpoints", type=int, default=4)
    p.add_argument("--grid", type=int, default=64, help="Distance-grid nodes per unit length")
    p.add_argument("--method", choices=["auto", "graph", "exact"], default="auto")
    p.add_argument("--distance", type=vector, help="Also report d(x0, x1) for x0,x1 given as 2n numbers")
    p.add_argument("--convexity", type=int, metavar="ENSEMBLE", help="Profile b along this many geodesics")
    p.add_argument("--field-csv", type=Path, help="Export d(., gamma(T)) on the model box as a CSV matrix")
    p.set_defaults(func=cmd_busemann)

    p = sub.add_parser("verify", help="Run the invariant suite")
    p.add_argument("--suite", choices=["fast", "full"], default="fast")
    p.add_argument("--fixtures", type=Path, help="Fixture directory")
    p.add_argument("--only", help="Comma-separated check names")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_verify)
    return parser


def configure_logging(verbose: int) -> None:
    level = {0: get_settings().log_level, 1: "INFO"}.get(verbose, "DEBUG")
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code in (0, None) else EXIT_USAGE
    if args.print_schema:
        print(json.dumps(published_schema(), indent=2, sort_keys=True))
        return EXIT_OK
    if args.command is None:
        parser.print_help()
        return EXIT_USAGE
    configure_logging(args.verbose)

    report = RunReport(command=args.command, config=_config_echo(args), conventions=default_conventions())
    summary = ""
    with timed(report):
        try:
            results, code, summary = args.func(args)
            report.results = jsonable(results)
        except FinslerLabError as e:
            logger.debug("%s failed", args.command, exc_info=True)
            code, summary = e.exit_code, f"{type(e).__name__}: {e}"
            report.error = jsonable(e.to_dict())
        except (np.linalg.LinAlgError, FloatingPointError) as e:
            logger.debug("%s failed", args.command, exc_info=True)
            code, summary = EXIT_FAILURE, f"numerical failure: {e}"
            report.error = {"type": type(e).__name__, "message": str(e)}
        except ValueError as e:
            # pydantic option validation
            code, summary = EXIT_USAGE, f"invalid option: {e}"
            report.error = {"type": type(e).__name__, "message": str(e)}
        except Exception as e:
            logger.exception("%s raised", args.command)
            code, summary = EXIT_INTERNAL, f"internal error: {type(e).__name__}: {e}"
            report.error = {"type": type(e).__name__, "message": str(e), "internal": True}
    report.exit_code = code
    path = write_report(report, _report_path(args))
    icon = {EXIT_OK: "✅", EXIT_INCONCLUSIVE: "❔"}.get(code, "❌")
    print(f"{icon} {args.command}: {summary} (report: {path})")
    return code


def main() -> None:
    sys.exit(run())
