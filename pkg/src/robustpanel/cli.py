"""Command-line front end: fit estimators on CSV panels, run simulation grids,
derive the downweighting bandwidth constant.

Exit codes: 0 success, 2 input or schema error, 3 estimation error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .exceptions import EstimationError, RobustPanelError
from .panel import PanelDataset, read_panel_csv
from .simulation import (
    ESTIMATORS,
    format_results_text,
    parse_grid_config,
    run_simulation,
    write_results_csv,
)
from .wle import (
    DomainError,
    WleConfig,
    derive_bandwidth_constant,
    single_outlier_weight,
)
from .simulation import fit_estimator

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_ESTIMATION = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robustpanel",
        description="Classical and weighted-likelihood panel data estimators.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit", help="fit estimators on a long-format CSV panel")
    fit.add_argument("--data", required=True, help="CSV file with one row per (id, time)")
    fit.add_argument("--id", default="id", help="individual column name")
    fit.add_argument("--time", default="time", help="period column name")
    fit.add_argument("--y", default="y", help="response column name")
    fit.add_argument("--x", default=None, help="comma-separated regressor columns")
    fit.add_argument(
        "--estimators",
        default=",".join(ESTIMATORS),
        help=f"comma-separated subset of {{{','.join(ESTIMATORS)}}}",
    )
    fit.add_argument("--raf", default="hellinger", choices=["hellinger", "identity"])
    fit.add_argument("--c", type=float, default=None, help="bandwidth constant h = c*sigma")
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--out", default=None, help="write the report here instead of stdout")
    fit.add_argument("--format", default="text", choices=["csv", "json", "text"])
    fit.add_argument("--dump-weights", default=None, help="write per-row weights CSV here")

    sim = sub.add_parser("simulate", help="run a simulation grid from a config file")
    sim.add_argument("--config", required=True, help="INI grid file, one section per cell")
    sim.add_argument("--out", required=True, help="results CSV path")
    sim.add_argument("--seed", type=int, default=None, help="override every cell's seed")
    sim.add_argument("--jobs", type=int, default=1, help="worker processes")

    der = sub.add_parser(
        "derive-bandwidth", help="solve for c given a single-outlier weight target"
    )
    der.add_argument("--target-weight", type=float, required=True)
    der.add_argument("--ref-distance", type=float, required=True)

    return parser


def _weight_summary(weights: np.ndarray) -> dict:
    return {
        "weight_min": float(np.min(weights)),
        "weight_median": float(np.median(weights)),
        "n_below_half": int(np.sum(weights < 0.5)),
    }


def _term_names(fit, x_names: list[str]) -> list[str]:
    return (["const"] if fit.intercept else []) + x_names


def _fit_report_rows(fits: dict, x_names: list[str]) -> list[dict]:
    rows = []
    for name, fit in fits.items():
        summary = _weight_summary(fit.weights)
        for term, est, se in zip(_term_names(fit, x_names), fit.beta, fit.std_errors):
            rows.append(
                {
                    "estimator": name,
                    "term": term,
                    "estimate": float(est),
                    "std_error": float(se),
                    **summary,
                    "fallback": bool(getattr(fit, "fallback", False)),
                }
            )
    return rows


def _render_fit_text(fits: dict, x_names: list[str]) -> str:
    lines = []
    for name, fit in fits.items():
        summary = _weight_summary(fit.weights)
        lines.append(f"== {name} ==")
        if getattr(fit, "fallback", False):
            lines.append("   (no converged root; classical fallback)")
        width = max(len(t) for t in _term_names(fit, x_names))
        for term, est, se in zip(_term_names(fit, x_names), fit.beta, fit.std_errors):
            lines.append(f"  {term:>{width}}  {est: .6f}")
            lines.append(f"  {'':>{width}}  ({se:.6f})")
        lines.append(
            "  weights: min {weight_min:.4f}  median {weight_median:.4f}  "
            "below 0.5: {n_below_half}".format(**summary)
        )
        lines.append("")
    return "\n".join(lines)


def _render_fit_csv(rows: list[dict]) -> str:
    header = [
        "estimator",
        "term",
        "estimate",
        "std_error",
        "weight_min",
        "weight_median",
        "n_below_half",
        "fallback",
    ]
    out = [",".join(header)]
    for row in rows:
        out.append(
            ",".join(
                [
                    row["estimator"],
                    row["term"],
                    repr(row["estimate"]),
                    repr(row["std_error"]),
                    repr(row["weight_min"]),
                    repr(row["weight_median"]),
                    str(row["n_below_half"]),
                    str(row["fallback"]).lower(),
                ]
            )
        )
    return "\n".join(out) + "\n"


def _dump_weights(fits: dict, panel: PanelDataset, path: str) -> None:
    """Per-row weights, traced back to (id, time); between rows carry only id."""
    import csv as _csv

    t = panel.n_periods
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = _csv.writer(fh)
        writer.writerow(["estimator", "id", "time", "weight"])
        for name, fit in fits.items():
            if len(fit.weights) == panel.n_rows:
                for r, w in enumerate(fit.weights):
                    writer.writerow(
                        [name, panel.ids[r // t], panel.times[r % t], repr(float(w))]
                    )
            else:  # between fit: one weight per individual
                for i, w in enumerate(fit.weights):
                    writer.writerow([name, panel.ids[i], "", repr(float(w))])


def _cmd_fit(args: argparse.Namespace) -> int:
    names = [v.strip() for v in args.estimators.split(",") if v.strip()]
    for name in names:
        if name not in ESTIMATORS:
            print(f"error: unknown estimator {name!r}", file=sys.stderr)
            return EXIT_INPUT
    x_cols = [v.strip() for v in args.x.split(",")] if args.x else None
    try:
        if x_cols is None:
            import csv as _csv

            with open(args.data, newline="", encoding="utf-8") as fh:
                header = next(_csv.reader(fh))
            x_cols = [c for c in header if c not in (args.id, args.time, args.y)]
        panel = read_panel_csv(
            args.data, id_col=args.id, time_col=args.time, y_col=args.y, x_cols=x_cols
        )
    except (RobustPanelError, ValueError, OSError, StopIteration) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    cfg_kwargs = {"raf": args.raf, "seed": args.seed}
    if args.c is not None:
        cfg_kwargs["c"] = args.c
    cfg = WleConfig(**cfg_kwargs)
    fits = {}
    try:
        for name in names:
            fits[name] = fit_estimator(name, panel, cfg)
    except EstimationError as exc:
        print(f"error: {name}: {exc}", file=sys.stderr)
        return EXIT_ESTIMATION

    rows = _fit_report_rows(fits, x_cols)
    if args.format == "text":
        report = _render_fit_text(fits, x_cols)
    elif args.format == "csv":
        report = _render_fit_csv(rows)
    else:
        report = json.dumps(rows, indent=2) + "\n"

    if args.out:
        Path(args.out).write_text(report, encoding="utf-8")
    else:
        sys.stdout.write(report)
    if args.dump_weights:
        _dump_weights(fits, panel, args.dump_weights)
    return EXIT_OK


def _cmd_simulate(args: argparse.Namespace) -> int:
    try:
        cells = parse_grid_config(args.config, seed_override=args.seed)
    except (ValueError, RobustPanelError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT

    results = []
    failures = 0
    for cell in cells:
        print(f"[{cell.name}] running {cell.spec.n_replications} replications ...")
        try:
            res = run_simulation(cell.spec, cell.estimators, jobs=max(1, args.jobs))
        except RobustPanelError as exc:
            print(f"[{cell.name}] failed: {exc}", file=sys.stderr)
            failures += 1
            continue
        results.append(res)
        for name, s in res.summaries.items():
            print(f"[{cell.name}] {name}: mse={s.mse:.4g} fallbacks={s.n_fallbacks}")
    if not results:
        print("error: every grid cell failed", file=sys.stderr)
        return EXIT_ESTIMATION
    write_results_csv(results, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def _cmd_derive_bandwidth(args: argparse.Namespace) -> int:
    try:
        c = derive_bandwidth_constant(args.target_weight, args.ref_distance)
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    achieved = single_outlier_weight(c, args.ref_distance)
    print(f"c = {c:.10g}")
    if abs(achieved - args.target_weight) > 1e-6:
        print(
            f"warning: best achievable weight at {args.ref_distance} sigma is "
            f"{achieved:.6g}, not {args.target_weight:.6g}"
        )
    print("single-outlier weight by distance:")
    for d in (1.0, 2.0, 3.0, 4.0, 5.0):
        print(f"  {d:.0f} sigma: {single_outlier_weight(c, d):.6f}")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command == "fit":
        return _cmd_fit(args)
    if args.command == "simulate":
        return _cmd_simulate(args)
    if args.command == "derive-bandwidth":
        return _cmd_derive_bandwidth(args)
    parser.error(f"unknown command {args.command!r}")
    return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
