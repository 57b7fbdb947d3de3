"""Command-line interface: ``robust-rrr {fit,predict,cv,simulate,pipeline,make-data,presets,rerun}``.

Every command writes its outputs plus a ``manifest.json`` into ``--out``.
On failure the process exits non-zero after printing one line of the form
``robust-rrr: error[<category>]: <message>`` to stderr.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import warnings
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .linalg import ShapeError, SvdError
from .loss import parse_tau
from .penalty import PenaltySpec
from .pipeline import (
    CsvFormatError,
    apply_standardization,
    format_float,
    mask_training_rows,
    read_matrix_csv,
    repeated_splits,
    screen_predictors,
    standardize,
    synthetic_standin,
    write_matrix_csv,
)
from .selection import DEFAULT_TAUS, GridError, build_grid, cross_validate, lambda_max
from .simulation import (
    METHODS,
    PRESETS,
    CvSettings,
    ScenarioFileError,
    SimScenario,
    fit_method,
    generate,
    load_scenario,
    run_replicates,
    scenario_to_text,
)
from .solver import DivergenceError, FitConfig, FitResult, estimated_rank, fit, predict

THREADS_ENV = "ROBUST_RRR_THREADS"


class CliError(Exception):
    def __init__(self, category: str, message: str):
        super().__init__(message)
        self.category = category


# ---------------------------------------------------------------------------
# output helpers


def human_number(x: float) -> str:
    """2-3 significant digits in the style of the simulation tables."""
    if not math.isfinite(x):
        return "nan" if math.isnan(x) else "inf"
    a = abs(x)
    if a >= 1e4:
        return f"{x:.2e}"
    if a >= 100:
        return f"{x:.0f}"
    if a >= 10:
        return f"{x:.1f}"
    return f"{x:.2f}"


def mean_sd(mean: float, sd: float) -> str:
    return f"{human_number(mean)} ({human_number(sd)})"


def write_rows(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow(format_float(v) if isinstance(v, (float, np.floating)) else v for v in row)


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=True)
        fh.write("\n")


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def jsonable(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, (list, tuple)):
        return [jsonable(v) for v in value]
    return value


def write_manifest(args, out: Path, inputs: dict) -> None:
    params = {k: jsonable(v) for k, v in sorted(vars(args).items()) if k not in ("func", "out", "command")}
    manifest = {
        "command": args.command,
        "version": __version__,
        "seed": getattr(args, "seed", None),
        "params": params,
        "inputs": {name: {"path": str(Path(p).resolve()), "sha256": sha256(p)} for name, p in inputs.items()},
    }
    write_json(out / "manifest.json", manifest)


def prepare_out(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError("io", f"cannot create output directory {out}: {exc}") from None
    return out


def write_fit_artifacts(out: Path, res: FitResult, y_header, x_header, extra: dict) -> None:
    write_matrix_csv(out / "B_hat.csv", res.B_hat, header=list(y_header))
    write_rows(out / "singular_values.csv", ["index", "singular_value"],
               [(i + 1, float(s)) for i, s in enumerate(res.singular_values)])
    write_rows(out / "objective_trace.csv", ["iteration", "objective"],
               [(i + 1, float(v)) for i, v in enumerate(res.objective_trace)])
    summary = {
        "converged": bool(res.converged),
        "iterations": int(res.iterations),
        "objective": float(res.objective),
        "rank": int(res.rank),
        "step_size": float(res.step_size),
        "tau": jsonable(res.config.tau),
        "penalty": res.config.penalty.family,
        "lambda": res.config.penalty.lam,
        "eta": res.config.penalty.eta,
        "predictors": list(x_header),
        "responses": list(y_header),
    }
    summary.update(extra)
    write_json(out / "summary.json", summary)


def load_xy(args):
    X, _, xh = read_matrix_csv(args.x)
    Y, mask, yh = read_matrix_csv(args.y, allow_missing=True)
    if X.shape[0] != Y.shape[0]:
        raise ShapeError(f"{args.x} has {X.shape[0]} rows but {args.y} has {Y.shape[0]}")
    if not mask.any():
        raise ValueError(f"{args.y} has no observed response entries")
    return X, Y, mask, xh, yh


def fit_config(args, lam: float) -> FitConfig:
    step = args.step_size if args.step_size == "auto" else float(args.step_size)
    return FitConfig(
        tau=parse_tau(str(getattr(args, "tau", "1.0"))),
        penalty=PenaltySpec(args.penalty, lam, args.eta),
        step_size=step,
        tol=args.tol,
        max_iter=args.max_iter,
        rank_tol_rel=args.rank_tol,
    )


def default_threads() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


# ---------------------------------------------------------------------------
# commands


def cmd_fit(args) -> None:
    X, Y, mask, xh, yh = load_xy(args)
    cfg = fit_config(args, args.lam)
    out = prepare_out(args.out)
    extra = {}
    try:
        lmax = lambda_max(X, Y, mask)
        extra["lambda_max"] = lmax
        if args.lam >= lmax:
            print(f"robust-rrr: warning: lambda {args.lam:g} >= lambda_max {lmax:.6g}; "
                  "expect a zero (rank 0) fit", file=sys.stderr)
    except (GridError, ValueError):
        pass
    res = fit(Y, X, mask, cfg)
    write_fit_artifacts(out, res, yh, xh, extra)
    write_manifest(args, out, {"x": args.x, "y": args.y})


def cmd_predict(args) -> None:
    X, _, _ = read_matrix_csv(args.x)
    B, _, header = read_matrix_csv(args.coef)
    out = prepare_out(args.out)
    write_matrix_csv(out / "predictions.csv", predict(X, B), header=header)
    write_manifest(args, out, {"x": args.x, "coef": args.coef})


def parse_taus(text: str):
    return tuple(parse_tau(t) for t in text.split(",") if t.strip())


def cmd_cv(args) -> None:
    if args.k_folds < 2:
        raise CliError("parameter", f"--k-folds must be at least 2, got {args.k_folds}")
    X, Y, mask, xh, yh = load_xy(args)
    taus = parse_taus(args.taus)
    grid = build_grid(X, Y, mask, args.n_lambda, args.lambda_min, taus)
    base = fit_config(args, 0.0)
    report = cross_validate(Y, X, mask, grid, args.k_folds, args.seed, base, n_jobs=args.threads)
    out = prepare_out(args.out)
    k = args.k_folds
    rows = []
    for i, tau in enumerate(report.taus):
        for j, lam in enumerate(report.lambdas):
            rows.append([jsonable(tau), lam, float(report.mean_mse[i, j])]
                        + [float(report.fold_mse[f, i, j]) for f in range(k)])
    write_rows(out / "cv_surface.csv", ["tau", "lambda", "mean_mse"] + [f"fold_{f + 1}" for f in range(k)], rows)
    write_rows(out / "fold_assignment.csv", ["row", "fold"],
               [(i + 1, int(f) + 1) for i, f in enumerate(report.fold_assignment)])
    write_json(out / "selected.json", {
        "tau": jsonable(report.selected_tau),
        "lambda": report.selected_lambda,
        "cv_mse": float(np.nanmin(report.mean_mse)),
        "warnings": report.warnings,
    })
    write_fit_artifacts(out, report.final_fit, yh, xh, {"selected_by": "cv"})
    write_manifest(args, out, {"x": args.x, "y": args.y})


def resolve_scenario(args) -> SimScenario:
    if (args.scenario is None) == (args.preset is None):
        raise CliError("parameter", "give exactly one of --scenario FILE or --preset NAME")
    if args.preset is not None:
        if args.preset not in PRESETS:
            raise CliError("parameter", f"unknown preset {args.preset!r}; run 'robust-rrr presets'")
        return PRESETS[args.preset]
    return load_scenario(args.scenario)


def parse_methods(text: str):
    methods = tuple(m.strip() for m in text.split(",") if m.strip())
    bad = [m for m in methods if m not in METHODS]
    if bad or not methods:
        raise CliError("parameter", f"unknown method(s) {bad}; choose from {','.join(sorted(METHODS))}")
    return methods


def cv_settings(args) -> CvSettings:
    if args.k_folds < 2:
        raise CliError("parameter", f"--k-folds must be at least 2, got {args.k_folds}")
    return CvSettings(k=args.k_folds, n_lambda=args.n_lambda, lambda_min=args.lambda_min,
                      tol=args.tol, max_iter=args.max_iter, rank_tol_rel=args.rank_tol)


def cmd_simulate(args) -> None:
    scenario = resolve_scenario(args)
    if args.n_test is not None:
        scenario = SimScenario(**{**vars_of(scenario), "n_test": args.n_test})
    methods = parse_methods(args.methods)
    if args.reps < 1:
        raise CliError("parameter", "--reps must be at least 1")
    settings = cv_settings(args)
    table = run_replicates(scenario, methods, args.reps, settings, base_seed=args.seed, workers=args.threads)
    out = prepare_out(args.out)
    cols = ["replicate", "seed", "method", "est_error", "mspe_test", "rank", "tau", "lambda", "error"]
    write_rows(out / "replicates.csv", cols,
               [[r["replicate"], r["seed"], r["method"], r["est_error"], r["mspe_test"], r["rank"],
                 jsonable(r["tau"]), r["lam"], r["error"]] for r in table.rows])
    write_rows(out / "summary.csv", ["method", "metric", "mean", "sd", "n_ok"],
               [[s["method"], s["metric"], s["mean"], s["sd"], s["n_ok"]] for s in table.summary])
    (out / "scenario.txt").write_text(scenario_to_text(scenario), encoding="utf-8")
    (out / "table.txt").write_text(simulation_table(scenario, args.reps, methods, table.summary), encoding="utf-8")
    inputs = {} if args.scenario is None else {"scenario": args.scenario}
    write_manifest(args, out, inputs)
    if table.failures:
        print(f"robust-rrr: warning: {len(table.failures)} replicate fit(s) failed; see replicates.csv",
              file=sys.stderr)


def vars_of(scenario: SimScenario) -> dict:
    from dataclasses import asdict

    return asdict(scenario)


def simulation_table(scenario: SimScenario, reps: int, methods, summary) -> str:
    lookup = {(s["method"], s["metric"]): s for s in summary}
    head = (f"{scenario.name}: n={scenario.n}, p={scenario.p}, q={scenario.q}, r={scenario.r}, "
            f"{reps} replicate(s); mean (sd)\n")
    cols = ["method", "||B-B0||_F^2", "MSPE_test", "rank"]
    body = [[m] + [mean_sd(lookup[m, k]["mean"], lookup[m, k]["sd"]) for k in ("est_error", "mspe_test", "rank")]
            for m in methods]
    return head + align([cols] + body)


def align(rows) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "".join("  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() + "\n" for r in rows)


def cmd_pipeline(args) -> None:
    X_raw, _, xh = read_matrix_csv(args.x)
    Y_raw, mask0, yh = read_matrix_csv(args.y, allow_missing=True)
    if X_raw.shape[0] != Y_raw.shape[0]:
        raise ShapeError(f"{args.x} has {X_raw.shape[0]} rows but {args.y} has {Y_raw.shape[0]}")
    if not 0 <= args.missing < 1:
        raise CliError("parameter", f"--missing must lie in [0, 1), got {args.missing}")
    if args.n_keep > X_raw.shape[1]:
        raise CliError("parameter", f"--n-keep {args.n_keep} exceeds the {X_raw.shape[1]} predictors")
    methods = parse_methods(args.methods)
    settings = cv_settings(args)
    n = X_raw.shape[0]
    out = prepare_out(args.out)

    whole = args.standardize == "whole"
    if whole:
        Xs, xm, xs = standardize(X_raw)
        Ys, ym, ys = standardize(Y_raw, mask0)
        screen = screen_predictors(Xs, Ys, mask0, args.n_keep)
        write_rows(out / "transform.csv", ["matrix", "column", "mean", "sd"],
                   [["X", h, float(a), float(b)] for h, a, b in zip(xh, xm, xs)]
                   + [["Y", h, float(a), float(b)] for h, a, b in zip(yh, ym, ys)])
        selected = set(screen.selected_indices.tolist())
        write_rows(out / "screening.csv", ["index", "predictor", "score", "selected"],
                   [[j, xh[j], float(screen.scores[j]), int(j in selected)] for j in range(len(xh))])

    splits = repeated_splits(n, args.n_test, args.reps, args.seed)
    miss_rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(1,)))
    fold_rng = np.random.default_rng(np.random.SeedSequence(args.seed, spawn_key=(2,)))
    rows = []
    for rep, (train, test) in enumerate(splits):
        if whole:
            X, Y, keep = Xs, Ys, screen.selected_indices
        else:
            _, xm_, xs_ = standardize(X_raw[train])
            _, ym_, ys_ = standardize(Y_raw[train], mask0[train])
            X = apply_standardization(X_raw, xm_, xs_)
            Y = apply_standardization(Y_raw, ym_, ys_, mask0)
            keep = screen_predictors(X[train], Y[train], mask0[train], args.n_keep).selected_indices
        mask = mask_training_rows(mask0, train, args.missing, miss_rng) if args.missing > 0 else mask0
        Xk = X[:, keep]
        fold_seed = int(fold_rng.integers(2**32))
        test_mask = mask0[test]
        for name in methods:
            cv = fit_method(METHODS[name], Xk[train], Y[train], mask[train], settings, fold_seed)
            R = np.where(test_mask, Y[test] - Xk[test] @ cv.final_fit.B_hat, 0.0)
            mse = float(np.sum(R * R) / max(1, test_mask.sum()))
            rows.append([rep + 1, name, mse, cv.final_fit.rank, jsonable(cv.selected_tau), cv.selected_lambda])
    write_rows(out / "repetitions.csv", ["repetition", "method", "prediction_mse", "rank", "tau", "lambda"], rows)
    summary = []
    for name in methods:
        for metric, col in (("prediction", 2), ("rank", 3)):
            vals = np.array([r[col] for r in rows if r[1] == name], dtype=float)
            sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
            summary.append([name, metric, float(vals.mean()), sd])
    write_rows(out / "summary.csv", ["method", "metric", "mean", "sd"], summary)
    lookup = {(s[0], s[1]): s for s in summary}
    table = [[""] + list(methods)]
    for metric, label in (("prediction", "prediction"), ("rank", "rank estimate")):
        table.append([label] + [mean_sd(lookup[m, metric][2], lookup[m, metric][3]) for m in methods])
    head = (f"n={n}, p={X_raw.shape[1]} -> {args.n_keep} screened, q={Y_raw.shape[1]}, "
            f"missing {args.missing:g}, {args.reps} repetition(s); mean (sd)\n")
    (out / "table.txt").write_text(head + align(table), encoding="utf-8")
    write_manifest(args, out, {"x": args.x, "y": args.y})


def toy_data():
    """The packaged toy dataset as ``(X, Y_with_nan)``; regenerated deterministically."""
    data = generate(SimScenario(n=60, p=6, q=4, r=2, noise_sd=0.5, missing_fraction=0.05, n_test=1, seed=2024))
    return data.X, np.where(data.mask, data.Y, np.nan)


def data_path(name: str) -> Path:
    return Path(str(resources.files("robust_rrr").joinpath("data", name)))


def cmd_make_data(args) -> None:
    out = prepare_out(args.out)
    if args.kind == "toy":
        X, Y = toy_data()
    else:
        X, Y = synthetic_standin(seed=args.seed)
    write_matrix_csv(out / "X.csv", X, header=[f"x{j + 1}" for j in range(X.shape[1])])
    write_matrix_csv(out / "Y.csv", np.nan_to_num(Y), header=[f"y{j + 1}" for j in range(Y.shape[1])],
                     mask=~np.isnan(Y))
    write_manifest(args, out, {})


def cmd_presets(args) -> None:
    for name in sorted(PRESETS):
        s = PRESETS[name]
        print(f"{name}\tn={s.n} p={s.p} q={s.q} r={s.r} design={s.design} noise={s.noise} "
              f"contamination={s.contamination:g} missing={s.missing_fraction:g}")


def cmd_rerun(args) -> None:
    with open(args.manifest, encoding="utf-8") as fh:
        manifest = json.load(fh)
    for name, info in manifest.get("inputs", {}).items():
        if not Path(info["path"]).exists() or sha256(info["path"]) != info["sha256"]:
            raise CliError("input", f"input {name!r} at {info['path']} is missing or its digest changed")
    command = manifest["command"]
    params = dict(manifest["params"])
    if args.threads is not None:
        params["threads"] = args.threads
    ns = argparse.Namespace(**params, out=args.out, command=command, func=COMMANDS[command])
    ns.func(ns)


COMMANDS = {
    "fit": cmd_fit,
    "predict": cmd_predict,
    "cv": cmd_cv,
    "simulate": cmd_simulate,
    "pipeline": cmd_pipeline,
    "make-data": cmd_make_data,
    "presets": cmd_presets,
    "rerun": cmd_rerun,
}


# ---------------------------------------------------------------------------
# parser


def _solver_args(p, with_lambda: bool) -> None:
    p.add_argument("--penalty", choices=("mcp", "scad", "nuclear"), default="scad")
    if with_lambda:
        p.add_argument("--lambda", dest="lam", type=float, required=True, help="penalty strength")
        p.add_argument("--tau", default="1.0", help="Huber threshold, a positive number or 'inf'")
    p.add_argument("--eta", type=float, default=None, help="concavity (default 3.0 MCP, 3.7 SCAD)")
    p.add_argument("--step-size", default="auto", help="gradient step, or 'auto' for n/||X||_2^2")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--rank-tol", type=float, default=1e-6, help="relative singular value cut for rank")


def _cv_args(p) -> None:
    p.add_argument("--k-folds", type=int, default=5)
    p.add_argument("--n-lambda", type=int, default=20)
    p.add_argument("--lambda-min", type=float, default=0.05)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--threads", type=int, default=default_threads(),
                   help=f"worker processes (default ${THREADS_ENV} or 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="robust-rrr", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit at a fixed (tau, lambda)")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None, help="recorded in the manifest; the fit is deterministic")
    _solver_args(p, with_lambda=True)

    p = sub.add_parser("predict", help="predict responses from a fitted B_hat.csv")
    p.add_argument("--x", required=True)
    p.add_argument("--coef", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("cv", help="select (tau, lambda) by K-fold cross-validation and refit")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--taus", default=",".join(f"{t:g}" for t in DEFAULT_TAUS),
                   help="comma-separated Huber thresholds ('inf' allowed)")
    _solver_args(p, with_lambda=False)
    _cv_args(p)

    p = sub.add_parser("simulate", help="seeded simulation replicates for a scenario")
    p.add_argument("--scenario", default=None, help="flat key = value scenario file")
    p.add_argument("--preset", default=None, help="named preset (see 'robust-rrr presets')")
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--methods", default="huber_scad,huber_mcp,huber_nucl")
    p.add_argument("--n-test", type=int, default=None, help="override the scenario's test-set size")
    p.add_argument("--out", required=True)
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--rank-tol", type=float, default=1e-6)
    _cv_args(p)

    p = sub.add_parser("pipeline", help="screening plus repeated random-split evaluation")
    p.add_argument("--x", required=True)
    p.add_argument("--y", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-keep", type=int, default=100)
    p.add_argument("--n-test", type=int, default=9)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--missing", type=float, default=0.0, help="fraction of training responses to mask")
    p.add_argument("--methods", default="huber_mcp,huber_scad,huber_nucl")
    p.add_argument("--standardize", choices=("whole", "split"), default="whole",
                   help="'whole' standardizes and screens once on all rows; 'split' uses training rows only")
    p.add_argument("--tol", type=float, default=1e-5)
    p.add_argument("--max-iter", type=int, default=500)
    p.add_argument("--rank-tol", type=float, default=1e-6)
    _cv_args(p)

    p = sub.add_parser("make-data", help="write the toy dataset or a synthetic cell-line stand-in")
    p.add_argument("--kind", choices=("toy", "standin"), default="toy")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    sub.add_parser("presets", help="list named simulation presets")

    p = sub.add_parser("rerun", help="re-run the command recorded in a manifest.json")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=None)
    return parser


def _category(exc: BaseException) -> str:
    if isinstance(exc, CliError):
        return exc.category
    if isinstance(exc, ScenarioFileError):
        return "scenario"
    if isinstance(exc, CsvFormatError):
        return "input"
    if isinstance(exc, (FileNotFoundError, IsADirectoryError, PermissionError)):
        return "input"
    if isinstance(exc, OSError):
        return "io"
    if isinstance(exc, ShapeError):
        return "shape"
    if isinstance(exc, GridError):
        return "grid"
    if isinstance(exc, (DivergenceError, SvdError)):
        return "numerical"
    if isinstance(exc, (ValueError, TypeError)):
        return "parameter"
    return "internal"


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func = COMMANDS[args.command]
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            args.func(args)
    except Exception as exc:  # reported as one machine-parsable line
        message = " ".join(str(exc).split()) or type(exc).__name__
        print(f"robust-rrr: error[{_category(exc)}]: {message}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
