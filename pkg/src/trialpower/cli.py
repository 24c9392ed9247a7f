"""Command-line interface: estimate-params, design, analyze, simulate.

CSV conventions
---------------
Historical files carry a control-arm outcome and covariates with header
``y0,x1,...,xd``; trial files carry assignment, outcome, and covariates
with header ``w,y,x1,...,xd``. UTF-8, comma-separated, decimal points,
one row per subject. Covariate cells may be empty and are imputed to the
column mean (the imputed-cell count is reported); outcome and assignment
cells must be present and finite.

Output conventions
------------------
Results are JSON documents with snake_case keys, ``schema_version: 1``,
sorted keys, and no timestamps, so a rerun with identical flags and seed
produces byte-identical output. ``simulate`` writes a tidy CSV of power
points plus a sibling ``<out>.summary.json`` with the resolved
configuration and enrollment targets.

Exit codes: 0 success, 2 validation error (bad flags or inputs),
3 infeasible design, 4 data error (malformed or degenerate data files).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from ._version import __version__
from .core import EffectDefinition, PopulationParams
from .design import estimate_population_params, plan_trial
from .estimators import AipwEstimator, AncovaEstimator, UnadjustedEstimator
from .exceptions import DataError, InfeasibleDesignError, ValidationError
from .learners import parse_learner
from .simulation import (
    EstimatorConfig,
    GridConfig,
    ScenarioSpec,
    experiment_grid,
    table1_scenario,
)

__all__ = ["main", "load_historical_csv", "load_trial_csv", "write_trial_csv"]


# ---------------------------------------------------------------- CSV I/O

def _parse_cell(text: str, line_no: int, column: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise DataError(f"line {line_no}: column {column!r} has "
                        f"unparseable value {text!r}") from None
    if not np.isfinite(value):
        raise DataError(f"line {line_no}: column {column!r} is non-finite ({text!r})")
    return value


def _read_rows(path: str, required: list[str]) -> tuple[list[str], list[list[str]]]:
    import csv

    try:
        handle = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    with handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        prefix = header[:len(required)]
        if prefix != required:
            raise DataError(
                f"{path}: header must start with {','.join(required)}; got "
                f"{','.join(header[:len(required)]) or '(nothing)'}")
        expected_x = [f"x{j + 1}" for j in range(len(header) - len(required))]
        if header[len(required):] != expected_x:
            raise DataError(
                f"{path}: covariate columns must be named x1..x{len(expected_x)} "
                f"in order; got {','.join(header[len(required):])}")
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue  # ignore blank lines
            if len(row) != len(header):
                raise DataError(f"{path}: line {line_no}: expected "
                                f"{len(header)} cells, got {len(row)}")
            rows.append([line_no] + [c.strip() for c in row])
        if not rows:
            raise DataError(f"{path}: no data rows")
    return header, rows


def _parse_covariates(rows: list[list], offset: int, d: int) -> tuple[np.ndarray, int]:
    """Parse covariate cells, imputing empties to per-column means."""
    n = len(rows)
    X = np.empty((n, d), dtype=np.float64)
    missing = np.zeros((n, d), dtype=bool)
    for i, row in enumerate(rows):
        line_no = row[0]
        for j in range(d):
            cell = row[offset + j]
            if cell == "":
                missing[i, j] = True
            else:
                X[i, j] = _parse_cell(cell, line_no, f"x{j + 1}")
    imputed = int(missing.sum())
    if imputed:
        for j in range(d):
            col_missing = missing[:, j]
            if col_missing.all():
                raise DataError(f"column x{j + 1} is entirely missing; "
                                "cannot impute a column mean")
            if col_missing.any():
                X[col_missing, j] = X[~col_missing, j].mean()
    return X, imputed


def load_historical_csv(path: str) -> tuple[np.ndarray, np.ndarray, int]:
    """Read a ``y0,x1,...,xd`` file -> (X, y0, imputed_cell_count)."""
    header, rows = _read_rows(path, required=["y0"])
    d = len(header) - 1
    y0 = np.empty(len(rows), dtype=np.float64)
    for i, row in enumerate(rows):
        if row[1] == "":
            raise DataError(f"line {row[0]}: y0 is missing (outcomes cannot be imputed)")
        y0[i] = _parse_cell(row[1], row[0], "y0")
    X, imputed = _parse_covariates(rows, offset=2, d=d)
    return X, y0, imputed


def load_trial_csv(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray, int]:
    """Read a ``w,y,x1,...,xd`` file -> (X, w, y, imputed_cell_count)."""
    header, rows = _read_rows(path, required=["w", "y"])
    d = len(header) - 2
    n = len(rows)
    w = np.empty(n, dtype=np.float64)
    y = np.empty(n, dtype=np.float64)
    for i, row in enumerate(rows):
        line_no = row[0]
        for col, arr, label in ((1, w, "w"), (2, y, "y")):
            if row[col] == "":
                raise DataError(f"line {line_no}: {label} is missing "
                                "(assignments and outcomes cannot be imputed)")
            arr[i] = _parse_cell(row[col], line_no, label)
        if w[i] not in (0.0, 1.0):
            raise DataError(f"line {line_no}: w must be 0 or 1, got {row[1]!r}")
    X, imputed = _parse_covariates(rows, offset=3, d=d)
    return X, w, y, imputed


def write_trial_csv(path: str, X: np.ndarray, w: np.ndarray, y: np.ndarray) -> None:
    """Write a trial dataset in the ``w,y,x1,...,xd`` schema.

    Floats are written with shortest round-trip repr, so reading the file
    back reproduces the arrays bit-for-bit.
    """
    X = np.asarray(X, dtype=np.float64)
    n, d = X.shape
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write("w,y," + ",".join(f"x{j + 1}" for j in range(d)) + "\n")
        for i in range(n):
            cells = [repr(int(w[i])), repr(float(y[i]))]
            cells += [repr(float(X[i, j])) for j in range(d)]
            handle.write(",".join(cells) + "\n")


# ---------------------------------------------------------------- output

def _emit_json(document: dict, out_path: str | None) -> None:
    text = json.dumps(document, indent=2, sort_keys=True) + "\n"
    if out_path:
        with open(out_path, "w", encoding="utf-8") as handle:
            handle.write(text)
    else:
        sys.stdout.write(text)


def _write_rows_csv(path: str, rows: list[dict]) -> None:
    columns = ["scenario", "estimator", "learner", "n", "reps", "rate", "mc_half_width"]
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(",".join(columns) + "\n")
        for row in rows:
            handle.write(",".join(str(row[c]) for c in columns) + "\n")


def _effect_from_flag(name: str) -> EffectDefinition:
    return EffectDefinition.from_name(name)


# ------------------------------------------------------------- commands

def cmd_estimate_params(args) -> int:
    X, y0, imputed = load_historical_csv(args.historical)
    effect = _effect_from_flag(args.effect)
    estimate = estimate_population_params(
        X, y0, learner=parse_learner(args.learner), folds=args.folds,
        random_state=args.seed, target_effect=args.target_effect,
        effect=effect, pi1=args.pi1, gamma=args.gamma)
    document = {
        "schema_version": 1,
        "params": estimate.params.to_dict(),
        "assumptions": estimate.assumptions,
        "warnings": estimate.warnings,
        "cv_rmse_raw": estimate.cv_rmse_raw,
        "n_rows": estimate.n_rows,
        "imputed_cells": imputed,
        "learner": args.learner,
        "effect": effect.kind,
        "target_effect": args.target_effect,
    }
    _emit_json(document, args.out)
    return 0


def cmd_design(args) -> int:
    try:
        with open(args.params, "r", encoding="utf-8") as handle:
            raw = json.load(handle)
    except OSError as exc:
        raise DataError(f"cannot read {args.params}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"{args.params}: invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise DataError(f"{args.params}: expected a JSON object")
    params = PopulationParams.from_dict(raw.get("params", raw))
    extra = raw.get("assumptions") if isinstance(raw.get("assumptions"), list) else None
    report = plan_trial(params, effect=_effect_from_flag(args.effect),
                        alpha=args.alpha, target_power=args.power,
                        max_n=args.max_n, extra_assumptions=extra)
    document = report.to_dict()
    document["schema_version"] = 1
    _emit_json(document, args.out)
    return 0


def cmd_analyze(args) -> int:
    X, w, y, imputed = load_trial_csv(args.trial)
    effect = _effect_from_flag(args.effect)
    if args.estimator == "unadj":
        estimator = UnadjustedEstimator(effect=effect, alpha=args.alpha)
    elif args.estimator == "ancova":
        estimator = AncovaEstimator(effect=effect, alpha=args.alpha)
    else:
        if args.seed is None:
            raise ValidationError("--seed is required for --estimator aipw "
                                  "(fold assignment is randomized)")
        estimator = AipwEstimator(
            learner=parse_learner(args.learner), n_folds=args.folds,
            effect=effect, alpha=args.alpha, pi1=args.pi1,
            random_state=args.seed)
    result = estimator.fit(X, w, y).result_
    document = result.to_dict(include_influence=args.full)
    document.update({
        "schema_version": 1,
        "estimator": args.estimator,
        "learner": args.learner if args.estimator == "aipw" else "",
        "effect": effect.kind,
        "imputed_cells": imputed,
    })
    _emit_json(document, args.out)
    return 0


def _resolve_threads(flag: str) -> int:
    if flag == "auto":
        return max(1, os.cpu_count() or 1)
    try:
        value = int(flag)
    except ValueError:
        raise ValidationError(f"--threads must be an integer or 'auto', got {flag!r}") from None
    if value < 1:
        raise ValidationError(f"--threads must be >= 1, got {value}")
    return value


def _load_scenario(text: str) -> ScenarioSpec:
    if text.endswith(".json") or os.path.sep in text:
        try:
            with open(text, "r", encoding="utf-8") as handle:
                raw = json.load(handle)
        except OSError as exc:
            raise DataError(f"cannot read scenario file {text}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise DataError(f"{text}: invalid JSON: {exc}") from exc
        return ScenarioSpec.from_dict(raw)
    return table1_scenario(text)


def cmd_simulate(args) -> int:
    from_file = args.scenario.endswith(".json") or os.path.sep in args.scenario
    scenario = _load_scenario(args.scenario)
    estimators = [EstimatorConfig.from_string(tok, n_folds=args.folds)
                  for tok in args.estimators.split(",") if tok.strip()]
    if not estimators:
        raise ValidationError("--estimators must name at least one estimator")
    if args.n_grid.strip() == "auto":
        n_grid = None
    else:
        try:
            n_grid = [int(tok) for tok in args.n_grid.split(",") if tok.strip()]
        except ValueError:
            raise ValidationError(
                f"--n-grid must be 'auto' or comma-separated integers, "
                f"got {args.n_grid!r}") from None
    config = GridConfig(
        scenarios=[scenario.name] if scenario.name else ["custom"],
        estimators=estimators,
        n_grid=n_grid,
        replications=args.reps,
        alpha=args.alpha,
        pi1=args.pi1,
        base_seed=args.seed,
        null_calibrate=args.null,
        n_jobs=_resolve_threads(args.threads),
    )
    if from_file:
        # a custom spec bypasses the name lookup inside experiment_grid
        rows, summary = _grid_for_custom(scenario, config)
    else:
        rows, summary = experiment_grid(config)
    _write_rows_csv(args.out, rows)
    summary_path = args.out + ".summary.json"
    _emit_json(summary, summary_path)
    return 0


def _grid_for_custom(spec: ScenarioSpec, config: GridConfig):
    """experiment_grid for a user-supplied spec not in the built-in table."""
    from dataclasses import replace

    from .simulation import empirical_rate, null_calibrated

    if config.n_grid is None:
        raise ValidationError("custom scenarios need an explicit --n-grid")
    if config.null_calibrate:
        spec = null_calibrated(spec)
    rows = []
    cell_index = 0
    label = spec.name or "custom"
    for est in config.estimators:
        for n in config.n_grid:
            cell_seed = config.base_seed + cell_index * config.replications
            point = empirical_rate(spec, n, est, alpha=config.alpha,
                                   replications=config.replications,
                                   base_seed=cell_seed, pi1=config.pi1,
                                   n_jobs=config.n_jobs)
            rows.append({"scenario": label, "estimator": est.label,
                         "learner": est.learner if est.kind == "aipw" else "",
                         "n": point.n, "reps": point.replications,
                         "rate": point.empirical_rate,
                         "mc_half_width": point.mc_half_width})
            cell_index += 1
    summary = {
        "schema_version": 1,
        "tool": {"name": "trialpower", "version": __version__},
        # resolved() canonicalizes scenario names, which a custom label fails
        "config": dict(replace(config, scenarios=[]).resolved(),
                       scenarios=[label], scenario_spec=spec.to_dict()),
        "targets": {},
        "n_rows": len(rows),
    }
    return rows, summary


# ---------------------------------------------------------------- parser

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trialpower",
        description="Design and analyze two-arm randomized trials with "
                    "covariate-adjusted (AIPW) estimators.")
    parser.add_argument("--version", action="version",
                        version=f"trialpower {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate-params",
                       help="estimate population parameters from historical control-arm CSV")
    p.add_argument("--historical", required=True, metavar="CSV",
                   help="historical data file with header y0,x1,...,xd")
    p.add_argument("--learner", default="ensemble",
                   help="conditional-mean learner: ensemble, ols, knn[:k], gbm")
    p.add_argument("--folds", type=int, default=5, help="cross-validation folds")
    p.add_argument("--target-effect", type=float, default=0.0,
                   help="effect size the trial should detect")
    p.add_argument("--effect", default="diff", choices=["diff", "or"],
                   help="effect scale: difference in means or odds ratio")
    p.add_argument("--pi1", type=float, default=0.5, help="treatment probability")
    p.add_argument("--gamma", type=float, default=0.0,
                   help="override for the cross-arm correlation (default 0)")
    p.add_argument("--seed", type=int, required=True, help="fold-split seed")
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_estimate_params)

    p = sub.add_parser("design", help="turn population parameters into sample sizes")
    p.add_argument("--params", required=True, metavar="JSON",
                   help="params file (output of estimate-params, or a bare params object)")
    p.add_argument("--alpha", type=float, default=0.05, help="two-sided level")
    p.add_argument("--power", type=float, default=0.8, help="target power")
    p.add_argument("--effect", default="diff", choices=["diff", "or"])
    p.add_argument("--max-n", type=int, default=10_000_000,
                   help="largest enrollment considered feasible")
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("analyze", help="analyze a completed trial CSV")
    p.add_argument("--trial", required=True, metavar="CSV",
                   help="trial data file with header w,y,x1,...,xd")
    p.add_argument("--estimator", default="aipw", choices=["unadj", "ancova", "aipw"])
    p.add_argument("--learner", default="ensemble", help=argparse.SUPPRESS)
    p.add_argument("--folds", type=int, default=10, help="cross-fitting folds (aipw)")
    p.add_argument("--pi1", type=float, default=0.5,
                   help="design treatment probability (aipw weights)")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--effect", default="diff", choices=["diff", "or"])
    p.add_argument("--seed", type=int, default=None,
                   help="fold-split seed (required for aipw)")
    p.add_argument("--full", action="store_true",
                   help="include the per-subject influence vector in the output")
    p.add_argument("--out", default=None, help="output JSON path (default stdout)")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="run a power or type-I-error experiment grid")
    p.add_argument("--scenario", required=True,
                   help="built-in name (e.g. linear-constant) or a ScenarioSpec JSON path")
    p.add_argument("--estimators", default="unadj,ancova,aipw,oracle",
                   help="comma list: unadj, ancova, aipw[-<learner>], oracle")
    p.add_argument("--n-grid", default="auto",
                   help="comma list of sample sizes, or 'auto'")
    p.add_argument("--reps", type=int, default=1000, help="replications per cell")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--pi1", type=float, default=0.5)
    p.add_argument("--folds", type=int, default=10, help="cross-fitting folds for aipw")
    p.add_argument("--null", action="store_true",
                   help="null-calibrate the scenario first (type-I-error mode)")
    p.add_argument("--threads", default="1", help="worker processes, or 'auto'")
    p.add_argument("--seed", type=int, required=True, help="base seed")
    p.add_argument("--out", required=True, metavar="CSV",
                   help="tidy results CSV; a sibling .summary.json is written too")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except InfeasibleDesignError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
