"""Command-line surface: estimation on user data, simulation studies, and
density-curve emission (with optional rendered figures)."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import report
from .data import load_csv
from .errors import InputError, InvalidParameter, TiltDidError
from .estimators import (
    crossfit_onestep_multi,
    plugin_estimate,
)
from .grid import DoseGrid
from .interventions import (
    DensityCurve,
    InterventionSpec,
    parametric_density,
    tilt_density,
)
from .nuisance import fit_dose_density
from .simulation import run_study

MIN_GRID_SIZE = 11

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3

# flags whose values may begin with "-" (negative numbers, delta grids)
_VALUE_FLAGS = {
    "--delta", "--delta-grid", "--d-prime", "--d-star", "--eta", "--sigma",
    "--bandwidth", "--ci-level",
}


def _merge_negative_values(argv: list[str]) -> list[str]:
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def parse_delta_grid(text: str) -> list[float]:
    """Parse "lo:hi:step" into an inclusive grid."""
    try:
        lo, hi, step = (float(part) for part in text.split(":"))
    except ValueError:
        raise InvalidParameter(f"delta grid must look like lo:hi:step, got {text!r}") from None
    if step <= 0 or hi < lo:
        raise InvalidParameter("delta grid needs step > 0 and hi >= lo")
    count = int(round((hi - lo) / step)) + 1
    grid = [lo + k * step for k in range(count)]
    if grid[-1] > hi + 1e-9:
        grid = grid[:-1]
    return [round(v, 12) for v in grid]


def _parse_base_density(text: str) -> InterventionSpec:
    name, _, rest = text.partition(":")
    if name == "uniform":
        return InterventionSpec.uniform()
    params = [float(p) for p in rest.split(",")] if rest else []
    if name == "beta":
        if len(params) != 2:
            raise InvalidParameter("beta base density needs beta:a,b")
        return InterventionSpec.beta(*params)
    if name == "truncnorm":
        if len(params) != 2:
            raise InvalidParameter("truncnorm base density needs truncnorm:mean,sigma")
        return InterventionSpec.truncated_normal(*params)
    raise InvalidParameter(f"unknown base density {text!r}")


def _intervention_from_args(args) -> InterventionSpec:
    kind = args.intervention
    if kind == "tilt":
        return InterventionSpec.tilt(args.delta if args.delta is not None else 0.0)
    if kind == "kernel":
        if args.delta is None or args.d_prime is None:
            raise InvalidParameter("kernel intervention needs --delta and --d-prime")
        return InterventionSpec.gaussian(args.delta, args.d_prime)
    if kind == "mindose":
        if args.d_star is None:
            raise InvalidParameter("mindose intervention needs --d-star")
        return InterventionSpec.minimum_dose(args.d_star)
    if kind == "shift":
        if args.eta is None or args.sigma is None:
            raise InvalidParameter("shift intervention needs --eta and --sigma")
        return InterventionSpec.shift(args.eta, args.sigma)
    if kind == "parametric":
        if not args.dist:
            raise InvalidParameter("parametric intervention needs --dist")
        return _parse_base_density(args.dist)
    raise InvalidParameter(f"unknown intervention {kind!r}")


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _estimate_rows_csv(results) -> str:
    lines = ["delta,psi_hat,se,ci_low,ci_high"]
    for r in results:
        lines.append(",".join([
            _fmt(r.delta), _fmt(r.psi_hat), _fmt(r.se), _fmt(r.ci_low), _fmt(r.ci_high),
        ]))
    return "\n".join(lines) + "\n"


def _estimate_rows_json(results) -> str:
    return json.dumps([r.to_dict() for r in results], indent=2, sort_keys=True) + "\n"


def _print_estimate_table(results) -> None:
    level = results[0].ci_level if results else 0.95
    print(f"{'delta':>8}  {'psi_hat':>12}  {'se':>10}  {int(level * 100)}% CI")
    for r in results:
        delta = f"{r.delta:8.3f}" if r.delta is not None else f"{'-':>8}"
        if r.se is None:
            print(f"{delta}  {r.psi_hat:12.6f}  {'n/a':>10}  (plug-in only)")
        else:
            print(f"{delta}  {r.psi_hat:12.6f}  {r.se:10.6f}  "
                  f"[{r.ci_low:.6f}, {r.ci_high:.6f}]")


def cmd_estimate(args) -> int:
    data = load_csv(args.csv, covariate_columns=_split_names(args.covariates))
    bandwidth = args.bandwidth if args.bandwidth is not None else "auto"
    if args.intervention == "tilt":
        deltas = parse_delta_grid(args.delta_grid) if args.delta_grid else \
            [args.delta if args.delta is not None else 0.0]
        results = crossfit_onestep_multi(
            data, [InterventionSpec.tilt(d) for d in deltas], k_folds=args.folds,
            seed=args.seed, grid_size=args.grid_size, bandwidth=bandwidth,
            ci_level=args.ci_level, literal_phi2_weight=args.literal_phi2_weight,
        )
    else:
        spec = _intervention_from_args(args)
        if args.delta_grid:
            raise InvalidParameter("--delta-grid is only valid with --intervention tilt")
        if spec.onestep_supported:
            results = crossfit_onestep_multi(
                data, [spec], k_folds=args.folds, seed=args.seed,
                grid_size=args.grid_size, bandwidth=bandwidth, ci_level=args.ci_level,
                literal_phi2_weight=args.literal_phi2_weight,
            )
        else:
            print(f"note: {spec.label()} has no influence-function standard error; "
                  "reporting the plug-in estimate only", file=sys.stderr)
            results = [plugin_estimate(data, spec, grid_size=args.grid_size,
                                       bandwidth=bandwidth)]

    _print_estimate_table(results)
    out = Path(args.output)
    if args.format == "csv":
        _write_text(out, _estimate_rows_csv(results))
    else:
        _write_text(out, _estimate_rows_json(results))
    if args.plot and len(results) > 1:
        report.save_estimate_curve(
            out.with_suffix(".png"),
            [r.delta for r in results], [r.psi_hat for r in results],
            [r.ci_low for r in results], [r.ci_high for r in results],
        )
    return EXIT_OK


def _study_summary_csv(result) -> str:
    lines = ["delta,truth,truth_se,mean_psi,bias,sd_psi,mc_se,coverage,mean_sigma2,mean_se"]
    for row in result.rows:
        lines.append(",".join(_fmt(v) for v in (
            row.delta, row.truth, row.truth_se, row.mean_psi, row.bias, row.sd_psi,
            row.mc_se, row.coverage, row.mean_sigma2, row.mean_se,
        )))
    return "\n".join(lines) + "\n"


def _study_plot_data_csv(result) -> str:
    truth = {row.delta: row.truth for row in result.rows}
    lines = ["replicate,delta,psi_hat,ci_low,ci_high,truth"]
    for rep, delta, psi, lo, hi in result.draws:
        lines.append(",".join([
            str(rep), _fmt(delta), _fmt(psi), _fmt(lo), _fmt(hi), _fmt(truth[delta]),
        ]))
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    deltas = parse_delta_grid(args.delta_grid)
    result = run_study(
        scenario=args.scenario, deltas=deltas, n=args.n, replicates=args.reps,
        k_folds=args.folds, seed=args.seed, grid_size=args.grid_size,
        bandwidth=args.bandwidth if args.bandwidth is not None else "auto",
        ci_level=args.ci_level, literal_phi2_weight=args.literal_phi2_weight,
        threads=args.threads, keep_draws=args.emit_plot_data,
    )
    out = Path(args.output)
    if args.format == "csv":
        _write_text(out, _study_summary_csv(result))
    else:
        _write_text(out, json.dumps(result.to_dict(), indent=2, sort_keys=True) + "\n")
    if args.emit_plot_data:
        _write_text(out.with_name(out.stem + "_replicates.csv"),
                    _study_plot_data_csv(result))
    if args.plot:
        report.save_study_figures(out.with_name(out.stem + "_bias.png"),
                                  out.with_name(out.stem + "_coverage.png"), result)
    for row in result.rows:
        print(f"delta={row.delta:+.2f}  truth={row.truth:.4f}  "
              f"mean={row.mean_psi:.4f}  bias={row.bias:+.4f}  "
              f"coverage={row.coverage:.3f}")
    print(f"{result.replicates} replicates in {result.runtime_seconds:.1f}s")
    return EXIT_OK


def cmd_density_curve(args) -> int:
    grid = DoseGrid.uniform(args.grid_size)
    if args.data:
        data = load_csv(args.data)
        density = fit_dose_density(
            data, data.treated_rows(), grid,
            bandwidth=args.bandwidth if args.bandwidth is not None else "auto",
        )
        x_marginal = np.zeros((1, 0))
        base = DensityCurve(grid, density.rows(x_marginal)[0])
    elif args.base:
        base = parametric_density(_parse_base_density(args.base), grid)
    else:
        raise InvalidParameter("density-curve needs --base or --data")

    deltas = parse_delta_grid(args.delta_grid) if args.delta_grid else \
        [args.delta if args.delta is not None else 0.0]
    curves = {d: tilt_density(base, d).values for d in deltas}

    lines = ["delta,d,q"]
    for d in deltas:
        for point, value in zip(grid.points, curves[d]):
            lines.append(f"{_fmt(d)},{_fmt(point)},{_fmt(value)}")
    out = Path(args.output)
    _write_text(out, "\n".join(lines) + "\n")
    if args.plot:
        report.save_density_fan(out.with_suffix(".png"), grid, curves)
    print(f"wrote {len(deltas)} curve(s) on a {grid.size}-point grid to {out}")
    return EXIT_OK


def _split_names(text: str | None) -> list[str]:
    if not text:
        return []
    return [part.strip() for part in text.split(",") if part.strip()]


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--folds", type=int, default=5)
    parser.add_argument("--grid-size", type=int, default=101)
    parser.add_argument("--bandwidth", type=float, default=None)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--ci-level", type=float, default=0.95)
    parser.add_argument("--output", required=True)
    parser.add_argument("--format", choices=("csv", "json"), default="csv")
    parser.add_argument("--literal-phi2-weight", action="store_true")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--plot", action="store_true",
                        help="also render figures next to the output file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tiltdid",
        description="Stochastic dose effects among the treated in two-period panels",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    est = sub.add_parser("estimate", help="estimate effects from a panel CSV")
    est.add_argument("csv", help="panel CSV with columns y0,y1,a plus covariates")
    est.add_argument("--covariates", default="", help="comma-separated covariate columns")
    est.add_argument("--intervention", default="tilt",
                     choices=("tilt", "kernel", "mindose", "shift", "parametric"))
    est.add_argument("--delta", type=float, default=None)
    est.add_argument("--delta-grid", default=None, help="lo:hi:step, tilt only")
    est.add_argument("--d-prime", type=float, default=None)
    est.add_argument("--d-star", type=float, default=None)
    est.add_argument("--eta", type=float, default=None)
    est.add_argument("--sigma", type=float, default=None)
    est.add_argument("--dist", default=None,
                     help="parametric density: uniform | beta:a,b | truncnorm:m,s")
    _add_common(est)
    est.set_defaults(func=cmd_estimate)

    sim = sub.add_parser("simulate", help="run a bias/coverage study")
    sim.add_argument("--scenario", type=int, choices=(1, 2), required=True)
    sim.add_argument("--n", type=int, default=2000)
    sim.add_argument("--reps", type=int, default=300)
    sim.add_argument("--delta-grid", default="-10:10:1")
    sim.add_argument("--emit-plot-data", action="store_true")
    _add_common(sim)
    sim.set_defaults(func=cmd_simulate)

    dc = sub.add_parser("density-curve", help="emit tilted dose-density curves")
    dc.add_argument("--base", default=None,
                    help="base density: uniform | beta:a,b | truncnorm:m,s")
    dc.add_argument("--data", default=None,
                    help="panel CSV; fits the marginal dose density of treated units")
    dc.add_argument("--delta", type=float, default=None)
    dc.add_argument("--delta-grid", default=None)
    _add_common(dc)
    dc.set_defaults(func=cmd_density_curve)
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(_merge_negative_values(argv))
    try:
        if args.grid_size < MIN_GRID_SIZE:
            raise InvalidParameter(f"--grid-size must be >= {MIN_GRID_SIZE}")
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except TiltDidError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
