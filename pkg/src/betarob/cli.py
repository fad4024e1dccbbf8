"""Command-line front end.

Subcommands: ``fit``, ``test``, ``tune``, ``diagnose``, ``simulate``.
Every command writes machine-readable artifacts (CSV tables, JSON
summaries) plus a ``manifest.json`` recording the command, its
configuration, the package version, the seed, and a checksum of the
input file, enough to re-run it bit for bit. There is no plotting:
``diagnose`` emits tidy plot data for external tools.

Exit codes: 0 on success with all artifacts written, 2 for bad input
(unreadable files, unknown columns or coefficients, responses outside
the open unit interval), 3 when the optimizer does not converge, 4 when
the sandwich covariance is singular.
"""

import argparse
import csv
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np
from scipy import stats

from ._version import __version__
from .diagnostics import residuals_swr2, simulated_envelope
from .estimators import Estimator, EstimatorKind, FitOptions, fit
from .inference import HypothesisSpec, wald_test
from .model import ModelSpec, get_link
from .simulation import (ScenarioConfig, run_empirical_levels,
                         run_estimator_comparison, run_failure_rate)
from .tuning import TuningConfig, select_alpha

__all__ = ["main"]

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_NO_CONVERGENCE = 3
EXIT_SINGULAR = 4

_OUT_ENV = "BETAROB_OUT"


class CliError(Exception):
    """Fatal command error carrying its process exit status."""

    def __init__(self, status, message):
        super().__init__(message)
        self.status = status


def _fmt_rows(numbers, limit=12):
    shown = ", ".join(str(r) for r in numbers[:limit])
    if len(numbers) > limit:
        shown += f", ... ({len(numbers)} total)"
    return shown


def _read_columns(path, names):
    """Parse the named columns from a CSV file with a header row.

    Row numbers in error messages are file line numbers, counting the
    header as line 1.
    """
    try:
        handle = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise CliError(EXIT_BAD_INPUT, f"cannot open {path}: {exc}")
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [c for c in names if c not in header]
        if missing:
            raise CliError(
                EXIT_BAD_INPUT,
                f"columns missing from {path}: {', '.join(missing)}")
        records = list(reader)
    if not records:
        raise CliError(EXIT_BAD_INPUT, f"{path} has no data rows")
    columns = {c: np.empty(len(records)) for c in names}
    bad = []
    for i, record in enumerate(records):
        ok = True
        for c in names:
            cell = (record.get(c) or "").strip()
            try:
                columns[c][i] = float(cell)
            except ValueError:
                ok = False
        if not ok:
            bad.append(i + 2)
    if bad:
        raise CliError(
            EXIT_BAD_INPUT,
            "missing or unreadable values in used columns, rows "
            + _fmt_rows(bad))
    return columns


def _check_response(y):
    inside = np.isfinite(y) & (y > 0.0) & (y < 1.0)
    bad = (np.flatnonzero(~inside) + 2).tolist()
    if bad:
        raise CliError(
            EXIT_BAD_INPUT,
            "response values outside the open interval (0, 1) in rows "
            + _fmt_rows(bad))


def _split_terms(flag_value):
    return [c.strip() for c in flag_value.split(",") if c.strip()]


def _build_model(args):
    mean_cols = _split_terms(args.mean_covariates)
    prec_cols = _split_terms(args.precision_covariates)
    used = []
    for c in [args.response] + mean_cols + prec_cols:
        if c not in used:
            used.append(c)
    columns = _read_columns(args.data, used)
    y = columns[args.response]
    _check_response(y)
    n = y.size

    def design(cols, intercept, label):
        parts, names = [], []
        if intercept:
            parts.append(np.ones(n))
            names.append("(Intercept)")
        for c in cols:
            parts.append(columns[c])
            names.append(c)
        if not parts:
            raise CliError(EXIT_BAD_INPUT,
                           f"the {label} submodel has no terms")
        return np.column_stack(parts), tuple(names)

    x, mean_names = design(mean_cols, not args.no_intercept_mean, "mean")
    z, prec_names = design(prec_cols, not args.no_intercept_precision,
                           "precision")
    try:
        model = ModelSpec(x, z,
                          mean_link=get_link(args.mean_link),
                          precision_link=get_link(args.precision_link),
                          mean_names=mean_names,
                          precision_names=prec_names)
    except ValueError as exc:
        raise CliError(EXIT_BAD_INPUT, str(exc))
    return model, y


def _resolve_alpha(args, kind, model, y):
    """Turn the --alpha flag into a number, tuning when it says auto."""
    if args.alpha == "auto":
        if kind is EstimatorKind.MLE:
            raise CliError(EXIT_BAD_INPUT,
                           "--alpha auto needs a robust estimator")
        tuned = select_alpha(model, y, kind)
        return tuned.alpha, tuned
    try:
        alpha = float(args.alpha)
    except ValueError:
        raise CliError(EXIT_BAD_INPUT,
                       f"--alpha must be a number or 'auto', got "
                       f"{args.alpha!r}")
    if not 0.0 <= alpha < 1.0:
        raise CliError(EXIT_BAD_INPUT, "--alpha must lie in [0, 1)")
    if kind is EstimatorKind.MLE and alpha != 0.0:
        raise CliError(EXIT_BAD_INPUT,
                       "the maximum likelihood estimator takes no tuning "
                       "constant; drop --alpha or use a robust estimator")
    return alpha, None


def _fit_or_die(model, y, estimator):
    result = fit(model, y, estimator)
    if not result.converged or not np.all(np.isfinite(result.theta.theta)):
        raise CliError(EXIT_NO_CONVERGENCE,
                       f"estimation did not converge: {result.message}")
    if not result.cov_ok:
        raise CliError(EXIT_SINGULAR,
                       "the sandwich covariance matrix is singular or not "
                       "positive semidefinite")
    return result


def _coefficient_rows(result):
    model = result.model
    theta = result.theta.theta
    se = result.standard_errors
    zstat = theta / se
    pval = 2.0 * stats.norm.sf(np.abs(zstat))
    labels = ([("mean", nm) for nm in model.mean_names]
              + [("precision", nm) for nm in model.precision_names])
    return [{"submodel": sub, "term": nm,
             "estimate": float(theta[j]), "std_error": float(se[j]),
             "z_stat": float(zstat[j]), "p_value": float(pval[j])}
            for j, (sub, nm) in enumerate(labels)]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def _out_dir(args):
    out = args.out or os.environ.get(_OUT_ENV) or "."
    os.makedirs(out, exist_ok=True)
    return out


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(_jsonable(payload), handle, indent=2, sort_keys=True)
        handle.write("\n")


def _write_csv(path, rows, fieldnames):
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.DictWriter(handle, fieldnames=fieldnames)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _csv_cell(row.get(k)) for k in fieldnames})


def _csv_cell(value):
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float):
        return repr(value)
    return value


def _sha256(path):
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_manifest(out, command, config, seed=None, data_path=None):
    """RunManifest artifact.

    Everything in it except created_utc is deterministic, so re-running
    a command reproduces every artifact byte for byte once that one
    timestamp field is set aside.
    """
    manifest = {
        "command": command,
        "config": config,
        "seed": seed,
        "version": __version__,
        "input_sha256": _sha256(data_path) if data_path else None,
        "created_utc": datetime.now(timezone.utc).isoformat(
            timespec="seconds"),
    }
    _write_json(os.path.join(out, "manifest.json"), manifest)


def _model_config(args):
    return {
        "data": args.data,
        "response": args.response,
        "mean_covariates": args.mean_covariates,
        "precision_covariates": args.precision_covariates,
        "mean_link": args.mean_link,
        "precision_link": args.precision_link,
        "no_intercept_mean": args.no_intercept_mean,
        "no_intercept_precision": args.no_intercept_precision,
    }


_COEF_FIELDS = ("submodel", "term", "estimate", "std_error",
                "z_stat", "p_value")


def cmd_fit(args):
    out = _out_dir(args)
    model, y = _build_model(args)
    kind = EstimatorKind(args.estimator)
    alpha, tuned = _resolve_alpha(args, kind, model, y)
    result = _fit_or_die(model, y, Estimator(kind, alpha))
    rows = _coefficient_rows(result)
    _write_csv(os.path.join(out, "coefficients.csv"), rows, _COEF_FIELDS)
    payload = {
        "estimator": kind.value,
        "alpha": alpha,
        "converged": result.converged,
        "iterations": result.iterations,
        "objective": result.objective,
        "gradient_norm": result.gradient_norm,
        "n": model.n,
        "coefficients": rows,
    }
    if tuned is not None:
        payload["alpha_selected"] = tuned.alpha
        payload["alpha_stable"] = tuned.stable
    _write_json(os.path.join(out, "fit.json"), payload)
    _write_csv(os.path.join(out, "weights.csv"),
               [{"index": i + 1, "weight": float(w)}
                for i, w in enumerate(result.weights)],
               ("index", "weight"))
    config = _model_config(args)
    config.update({"estimator": args.estimator, "alpha": args.alpha})
    _write_manifest(out, "fit", config, data_path=args.data)
    print(f"fit: {kind.value} alpha={alpha:g} converged in "
          f"{result.iterations} iterations; artifacts in {out}")
    return EXIT_OK


def _parse_null(text, model):
    try:
        where, rest = text.split(":", 1)
        name, raw_value = rest.split("=", 1)
    except ValueError:
        raise CliError(
            EXIT_BAD_INPUT,
            f"--null must look like 'mean:NAME=VALUE' or "
            f"'prec:NAME=VALUE', got {text!r}")
    where = where.strip().lower()
    name = name.strip()
    try:
        value = float(raw_value)
    except ValueError:
        raise CliError(EXIT_BAD_INPUT,
                       f"the null value in {text!r} is not a number")
    if where == "mean":
        names, offset = model.mean_names, 0
    elif where in ("prec", "precision"):
        names, offset = model.precision_names, model.p1
    else:
        raise CliError(EXIT_BAD_INPUT,
                       f"unknown submodel {where!r}; use 'mean' or 'prec'")
    if name not in names:
        raise CliError(
            EXIT_BAD_INPUT,
            f"no coefficient named {name!r} in the {where} submodel "
            f"(have: {', '.join(names)})")
    return offset + names.index(name), value


def cmd_test(args):
    out = _out_dir(args)
    model, y = _build_model(args)
    kind = EstimatorKind(args.estimator)
    alpha, _ = _resolve_alpha(args, kind, model, y)
    result = _fit_or_die(model, y, Estimator(kind, alpha))
    parsed = [_parse_null(text, model) for text in args.null]
    indices = [idx for idx, _ in parsed]
    if len(set(indices)) != len(indices):
        raise CliError(EXIT_BAD_INPUT,
                       "--null restricts the same coefficient twice")
    values = [val for _, val in parsed]
    hypothesis = HypothesisSpec.coordinates(indices, values, model.p)
    try:
        test = wald_test(result, hypothesis)
    except np.linalg.LinAlgError as exc:
        raise CliError(EXIT_SINGULAR, f"test covariance is singular: {exc}")
    payload = {
        "statistic": test.statistic,
        "df": test.df,
        "p_value": test.p_value,
        "null": list(args.null),
        "estimator": kind.value,
        "alpha": alpha,
    }
    _write_json(os.path.join(out, "test.json"), payload)
    config = _model_config(args)
    config.update({"estimator": args.estimator, "alpha": args.alpha,
                   "null": list(args.null)})
    _write_manifest(out, "test", config, data_path=args.data)
    print(f"test: W = {test.statistic:.6g} on {test.df} df, "
          f"p = {test.p_value:.6g}; artifacts in {out}")
    return EXIT_OK


def cmd_tune(args):
    out = _out_dir(args)
    model, y = _build_model(args)
    kind = EstimatorKind(args.estimator)
    if kind is EstimatorKind.MLE:
        raise CliError(EXIT_BAD_INPUT,
                       "tuning applies to the robust estimators only")
    config = TuningConfig(grid_step=args.grid_step,
                          alpha_max=args.alpha_max)
    tuned = select_alpha(model, y, kind, config)
    if not tuned.trace or not tuned.trace[0].converged:
        raise CliError(EXIT_NO_CONVERGENCE,
                       "the baseline fit at alpha = 0 did not converge")
    _write_json(os.path.join(out, "tune.json"), {
        "alpha": tuned.alpha,
        "stable": tuned.stable,
        "estimator": kind.value,
        "grid_points": len(tuned.trace),
    })
    _write_csv(os.path.join(out, "trace.csv"),
               [{"alpha": float(pt.alpha), "converged": int(pt.converged),
                 "sqv": float(pt.sqv) if pt.sqv is not None else ""}
                for pt in tuned.trace],
               ("alpha", "converged", "sqv"))
    flag_config = _model_config(args)
    flag_config.update({"estimator": args.estimator,
                        "grid_step": args.grid_step,
                        "alpha_max": args.alpha_max})
    _write_manifest(out, "tune", flag_config, data_path=args.data)
    note = "stable" if tuned.stable else "no stable stretch, fell back to 0"
    print(f"tune: alpha = {tuned.alpha:g} ({note}); artifacts in {out}")
    return EXIT_OK


def cmd_diagnose(args):
    out = _out_dir(args)
    model, y = _build_model(args)
    kind = EstimatorKind(args.estimator)
    alpha, _ = _resolve_alpha(args, kind, model, y)
    result = _fit_or_die(model, y, Estimator(kind, alpha))
    bands = simulated_envelope(result, replications=args.replications,
                               coverage=args.coverage, seed=args.seed)
    raw = residuals_swr2(result)
    order = np.argsort(raw, kind="stable")
    weights = result.weights[order]
    rows = [{
        "index": int(order[i]) + 1,
        "theoretical_quantile": float(bands.theoretical_quantiles[i]),
        "residual": float(bands.residuals[i]),
        "lower": float(bands.lower[i]),
        "median": float(bands.median[i]),
        "upper": float(bands.upper[i]),
        "weight": float(weights[i]),
    } for i in range(model.n)]
    _write_csv(os.path.join(out, "envelope.csv"), rows,
               ("index", "theoretical_quantile", "residual",
                "lower", "median", "upper", "weight"))
    config = _model_config(args)
    config.update({"estimator": args.estimator, "alpha": args.alpha,
                   "replications": args.replications,
                   "coverage": args.coverage})
    _write_manifest(out, "diagnose", config, seed=args.seed,
                    data_path=args.data)
    if bands.unreliable:
        print(f"warning: {bands.failed_count} of {args.replications} "
              "envelope refits failed; bands are unreliable",
              file=sys.stderr)
    elif bands.coarse:
        print("note: fewer than 99 replications, envelope bands are coarse",
              file=sys.stderr)
    outside = np.sum((bands.residuals < bands.lower)
                     | (bands.residuals > bands.upper))
    print(f"diagnose: {model.n} residuals, {int(outside)} outside the "
          f"{args.coverage:.0%} envelope; artifacts in {out}")
    return EXIT_OK


def cmd_simulate(args):
    out = _out_dir(args)
    try:
        config = ScenarioConfig(scenario=args.scenario, n=args.n,
                                contaminated=args.contaminated,
                                replications=args.replications,
                                master_seed=args.seed)
    except ValueError as exc:
        raise CliError(EXIT_BAD_INPUT, str(exc))
    runner = {"failure": run_failure_rate,
              "compare": run_estimator_comparison,
              "levels": run_empirical_levels}[args.experiment]
    report = runner(config)
    report.to_csv(os.path.join(out, "results.csv"))
    _write_json(os.path.join(out, "summary.json"), report.summary)
    flag_config = report.manifest()
    _write_manifest(out, "simulate", flag_config, seed=args.seed)
    print(f"simulate: {args.experiment} on scenario {args.scenario}, "
          f"n={args.n}, {args.replications} replications; artifacts in {out}")
    return EXIT_OK


def _add_model_flags(sub):
    sub.add_argument("--data", required=True, help="CSV file with a header")
    sub.add_argument("--response", required=True,
                     help="response column, values strictly in (0, 1)")
    sub.add_argument("--mean-covariates", default="",
                     help="comma-separated covariate columns for the mean")
    sub.add_argument("--precision-covariates", default="",
                     help="comma-separated covariate columns for the "
                          "precision")
    sub.add_argument("--mean-link", default="logit")
    sub.add_argument("--precision-link", default="log")
    sub.add_argument("--no-intercept-mean", action="store_true")
    sub.add_argument("--no-intercept-precision", action="store_true")
    sub.add_argument("--out", default=None,
                     help=f"output directory (default: ${_OUT_ENV} or '.')")


def _add_estimator_flags(sub, default="mle"):
    sub.add_argument("--estimator", default=default,
                     choices=["mle", "lsmle", "lmdpde"])
    sub.add_argument("--alpha", default="0",
                     help="tuning constant in [0, 1), or 'auto'")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="betarob",
        description="Robust beta regression: fitting, testing, tuning, "
                    "diagnostics, and simulation experiments.")
    parser.add_argument("--version", action="version",
                        version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    sub = commands.add_parser("fit", help="fit one model")
    _add_model_flags(sub)
    _add_estimator_flags(sub)
    sub.set_defaults(handler=cmd_fit)

    sub = commands.add_parser("test", help="Wald-type coordinate tests")
    _add_model_flags(sub)
    _add_estimator_flags(sub)
    sub.add_argument("--null", action="append", required=True,
                     help="restriction like 'prec:Urb=0'; repeat for a "
                          "joint test")
    sub.set_defaults(handler=cmd_test)

    sub = commands.add_parser("tune", help="data-driven tuning constant")
    _add_model_flags(sub)
    sub.add_argument("--estimator", default="lsmle",
                     choices=["lsmle", "lmdpde"])
    sub.add_argument("--grid-step", type=float, default=0.02)
    sub.add_argument("--alpha-max", type=float, default=0.5)
    sub.set_defaults(handler=cmd_tune)

    sub = commands.add_parser("diagnose",
                              help="residuals and simulated envelope")
    _add_model_flags(sub)
    _add_estimator_flags(sub)
    sub.add_argument("--replications", type=int, default=100)
    sub.add_argument("--coverage", type=float, default=0.95)
    sub.add_argument("--seed", type=int, required=True)
    sub.set_defaults(handler=cmd_diagnose)

    sub = commands.add_parser("simulate", help="Monte Carlo experiments")
    sub.add_argument("--scenario", required=True, choices=["A", "B", "C"])
    sub.add_argument("--n", type=int, default=40)
    sub.add_argument("--contaminated", action="store_true")
    sub.add_argument("--replications", type=int, default=200)
    sub.add_argument("--seed", type=int, required=True)
    sub.add_argument("--experiment", required=True,
                     choices=["failure", "compare", "levels"])
    sub.add_argument("--out", default=None)
    sub.set_defaults(handler=cmd_simulate)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.handler(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.status


if __name__ == "__main__":
    sys.exit(main())
