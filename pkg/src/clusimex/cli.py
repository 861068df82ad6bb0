"""Command-line front end.

Subcommands: `cluster` (fit a clustering model and label a dataset),
`correct` (misclassification-corrected regression on a labeled dataset),
`bootstrap` (full re-clustering bootstrap), and `bench` (replicated
simulation scenarios).

Exit codes: 0 success, 2 usage or schema error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from importlib import resources

import numpy as np

from .mcsimex import (
    SimexConfig,
    bootstrap_simex,
    run_mcsimex,
    write_bootstrap_csv,
    write_simex_report,
)
from .misclass import (
    PowerExistenceError,
    estimate_misclass_mc,
    load_misclass_csv,
)
from .mixture import (
    DegenerateFitError,
    GmmParams,
    KmeansFit,
    fit_gmm,
    fit_kmeans,
    label_points_gmm,
    label_points_kmeans,
)
from .regress import MonotoneLikelihoodError, Outcome, SeparationError
from .simbench import (
    format_metrics_table,
    parse_scenario_config,
    run_replications,
    write_metrics_csv,
)

RESERVED_COLUMNS = ("y", "time", "event", "label")

BUNDLED_SCENARIOS = ("table1_balanced", "table2_imbalanced", "table3_cox")


class SchemaError(ValueError):
    """Bad input file or option combination; maps to exit code 2."""


def read_csv(path):
    """Header-required CSV; returns (column names, dict of float arrays)."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise SchemaError(f"{path}: empty file, expected a header row")
            rows = list(reader)
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    header = [h.strip() for h in header]
    columns = {name: np.empty(len(rows)) for name in header}
    for i, row in enumerate(rows):
        if len(row) != len(header):
            raise SchemaError(
                f"{path}: row {i + 2} has {len(row)} fields, expected {len(header)}"
            )
        for j, (name, cell) in enumerate(zip(header, row)):
            try:
                columns[name][i] = float(cell)
            except ValueError:
                raise SchemaError(
                    f"{path}: row {i + 2}, column {name!r}: "
                    f"non-numeric value {cell!r}"
                ) from None
    return header, columns


def covariate_matrix(header, columns):
    names = [h for h in header if h not in RESERVED_COLUMNS]
    if not names:
        raise SchemaError("no covariate columns found")
    return names, np.column_stack([columns[n] for n in names])


def outcome_from_columns(columns, family):
    if family == "logistic":
        if "y" not in columns:
            raise SchemaError("family = logistic requires a column named 'y'")
        return Outcome.binary(columns["y"])
    for name in ("time", "event"):
        if name not in columns:
            raise SchemaError(f"family = cox requires a column named {name!r}")
    return Outcome.survival(columns["time"], columns["event"])


def save_model(path, method, fit):
    if method == "gmm":
        params = fit.params
        payload = {
            "method": "gmm",
            "m": params.m,
            "weights": params.weights.tolist(),
            "means": params.means.tolist(),
            "covariances": params.covariances.tolist(),
            "loglik": fit.loglik,
        }
    else:
        payload = {
            "method": "kmeans",
            "m": fit.m,
            "centroids": fit.centroids.tolist(),
            "within_ss": fit.within_ss,
        }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")


def load_model(path):
    try:
        with open(path) as fh:
            payload = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot load model {path}: {exc}") from exc
    if payload.get("method") == "gmm":
        return "gmm", GmmParams(
            weights=np.array(payload["weights"]),
            means=np.array(payload["means"]),
            covariances=np.array(payload["covariances"]),
        )
    if payload.get("method") == "kmeans":
        return "kmeans", KmeansFit(
            centroids=np.array(payload["centroids"]),
            within_ss=payload["within_ss"],
        )
    raise SchemaError(f"{path}: unknown model method {payload.get('method')!r}")


def write_run_config(out_dir, command, args):
    """Echo the full effective configuration next to the outputs."""
    skip = {"func", "output_dir"}
    lines = [f"command = {command}"]
    for key in sorted(vars(args)):
        if key in skip:
            continue
        lines.append(f"{key.replace('_', '-')} = {getattr(args, key)}")
    with open(os.path.join(out_dir, "run_config.txt"), "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _ensure_out(args):
    os.makedirs(args.output_dir, exist_ok=True)
    return args.output_dir


def _simex_config(args):
    grid = tuple(float(v) for v in args.lambda_grid.split(","))
    return SimexConfig(
        lambda_grid=grid, B=args.B, extrapolant=args.extrapolant, seed=args.seed
    )


def cmd_cluster(args):
    out = _ensure_out(args)
    header, columns = read_csv(args.input)
    names, Z = covariate_matrix(header, columns)
    rng = np.random.default_rng(args.seed)
    if args.method == "gmm":
        fit = fit_gmm(Z, args.m, rng=rng)
        labels = label_points_gmm(fit.params, Z)
    else:
        fit = fit_kmeans(Z, args.m, rng=rng)
        labels = label_points_kmeans(fit, Z)
    save_model(os.path.join(out, "model.json"), args.method, fit)
    with open(os.path.join(out, "labels.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"])
        for lab in labels:
            writer.writerow([lab])
    write_run_config(out, "cluster", args)
    print(f"wrote {out}/model.json and {out}/labels.csv")
    return 0


def cmd_correct(args):
    out = _ensure_out(args)
    header, columns = read_csv(args.input)
    outcome = outcome_from_columns(columns, args.family)
    rng = np.random.default_rng(args.seed)
    if args.model:
        method, model = load_model(args.model)
        names, Z = covariate_matrix(header, columns)
        if method == "gmm":
            labels = label_points_gmm(model, Z)
            classify = lambda pts: label_points_gmm(model, pts)
            sample_model = model
        else:
            raise SchemaError(
                "correct needs a GMM model; for k-means supply labels and --pi"
            )
        m = model.m
        pi = estimate_misclass_mc(sample_model, classify, args.n_mc, rng)
    elif "label" in columns and args.pi:
        labels = columns["label"].astype(int)
        pi = load_misclass_csv(args.pi)
        m = pi.m
    else:
        raise SchemaError(
            "provide either --model, or a 'label' column together with --pi"
        )
    config = _simex_config(args)
    fit = run_mcsimex(outcome, labels, m, pi, args.family, config)
    write_simex_report(
        fit,
        os.path.join(out, "simex_report.txt"),
        os.path.join(out, "simex_curve.csv"),
    )
    write_run_config(out, "correct", args)
    print(f"wrote {out}/simex_report.txt and {out}/simex_curve.csv")
    return 0


def cmd_bootstrap(args):
    out = _ensure_out(args)
    header, columns = read_csv(args.input)
    outcome = outcome_from_columns(columns, args.family)
    names, Z = covariate_matrix(header, columns)
    config = _simex_config(args)
    result = bootstrap_simex(
        outcome, Z, args.m, args.family,
        config=config, n_boot=args.n_boot, seed=args.seed,
    )
    write_bootstrap_csv(
        result,
        os.path.join(out, "bootstrap_replicates.csv"),
        os.path.join(out, "bootstrap_summary.csv"),
    )
    write_run_config(out, "bootstrap", args)
    print(f"wrote {out}/bootstrap_replicates.csv and {out}/bootstrap_summary.csv")
    return 0


def load_scenario_text(name_or_path):
    if os.path.exists(name_or_path):
        with open(name_or_path) as fh:
            return fh.read()
    if name_or_path in BUNDLED_SCENARIOS:
        ref = resources.files("clusimex") / "configs" / f"{name_or_path}.cfg"
        return ref.read_text()
    raise SchemaError(
        f"unknown scenario {name_or_path!r}; bundled scenarios are "
        f"{', '.join(BUNDLED_SCENARIOS)}"
    )


def cmd_bench(args):
    out = _ensure_out(args)
    try:
        scenarios = parse_scenario_config(load_scenario_text(args.scenario))
    except ValueError as exc:
        raise SchemaError(str(exc)) from exc
    config = _simex_config(args)
    tables = []
    for scenario in scenarios:
        table = run_replications(
            scenario,
            R=args.replications,
            master_seed=args.seed,
            simex_config=config,
            n_jobs=args.threads,
        )
        tables.append(table)
    write_metrics_csv(tables, os.path.join(out, "metrics.csv"))
    with open(os.path.join(out, "metrics.txt"), "w") as fh:
        fh.write("\n\n".join(format_metrics_table(t) for t in tables) + "\n")
    write_run_config(out, "bench", args)
    print(f"wrote {out}/metrics.csv and {out}/metrics.txt")
    return 0


def _add_simex_flags(parser):
    parser.add_argument("--lambda-grid", default="0.5,1,1.5,2")
    parser.add_argument("--B", type=int, default=100)
    parser.add_argument(
        "--extrapolant", choices=("linear", "quadratic", "loglinear"),
        default="quadratic",
    )


def build_parser():
    parser = argparse.ArgumentParser(
        prog="clusimex",
        description="Misclassification-corrected regression on cluster labels.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cluster", help="fit a clustering model and label rows")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--method", choices=("gmm", "kmeans"), default="gmm")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("correct", help="simulation-extrapolation correction")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--model", help="model.json from the cluster command")
    p.add_argument("--pi", help="misclassification matrix CSV (with 'label' column)")
    p.add_argument("--family", choices=("logistic", "cox"), required=True)
    p.add_argument("--n-mc", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    _add_simex_flags(p)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("bootstrap", help="re-clustering bootstrap intervals")
    p.add_argument("--input", required=True)
    p.add_argument("--output-dir", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--family", choices=("logistic", "cox"), required=True)
    p.add_argument("--n-boot", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    _add_simex_flags(p)
    p.set_defaults(func=cmd_bootstrap)

    p = sub.add_parser("bench", help="replicated simulation scenarios")
    p.add_argument("--scenario", required=True,
                   help="bundled name or path to a key = value config")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--replications", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=-1)
    _add_simex_flags(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    if getattr(args, "m", 1) is not None and getattr(args, "m", 1) < 1:
        print("error: --m must be at least 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (
        SeparationError,
        MonotoneLikelihoodError,
        PowerExistenceError,
        DegenerateFitError,
        np.linalg.LinAlgError,
        ValueError,
        RuntimeError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
