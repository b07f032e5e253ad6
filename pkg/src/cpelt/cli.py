"""Command-line front end: dataset ingestion, dispatch and JSON reports.

Subcommands: detect, epidemic, supf, simulate, critical-value, gradcheck.
Exit codes: 0 success, 1 usage error, 2 computation error.  All reports are
JSON envelopes ``{schema_version, command, inputs_digest, payload,
timing_ms}`` with stable key order; per-replication records from
``simulate`` can additionally be dumped as CSV.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import sys
import time
from importlib import resources

import numpy as np

from . import __version__
from .epidemic import epidemic_scan
from .estimation import DataSet
from .eltest import critical_value, exact_statistic, scan, trimming_default, trimming_plan
from .exceptions import CpeltError, CsvFormatError
from .lsbaseline import sup_f
from .model import check_gradient, get_model
from .simlab import ErrorDistribution, SimConfig, run_replications

__all__ = [
    "ingest_csv",
    "write_dataset_csv",
    "build_report",
    "load_report_schema",
    "main",
]

SCHEMA_VERSION = "1"
ENV_SEED = "CPELT_SEED"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


# --------------------------------------------------------------------------
# dataset CSV I/O
# --------------------------------------------------------------------------

def ingest_csv(path: str, p: int) -> DataSet:
    """Read a dataset CSV with header ``x1,...,xp,y``.

    Rejects missing/extra columns, unparsable cells and non-finite values,
    naming the offending line.
    """
    expected = [f"x{j}" for j in range(1, p + 1)] + ["y"]
    rows = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}: empty file") from None
        if [c.strip() for c in header] != expected:
            raise CsvFormatError(
                f"{path}: header must be {','.join(expected)!r}, got {','.join(header)!r}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != p + 1:
                raise CsvFormatError(
                    f"{path}:{lineno}: expected {p + 1} columns, got {len(row)}"
                )
            try:
                values = [float(cell) for cell in row]
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: {exc}") from None
            if not all(math.isfinite(v) for v in values):
                raise CsvFormatError(f"{path}:{lineno}: non-finite value")
            rows.append(values)
    if len(rows) < 2:
        raise CsvFormatError(f"{path}: need at least 2 data rows, got {len(rows)}")
    arr = np.asarray(rows, dtype=float)
    return DataSet(x=arr[:, :p], y=arr[:, p])


def write_dataset_csv(data: DataSet, path: str) -> None:
    """Write a dataset in the exact format :func:`ingest_csv` reads."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow([f"x{j}" for j in range(1, data.p + 1)] + ["y"])
        for i in range(data.n):
            writer.writerow([f"{v:.17g}" for v in data.x[i]] + [f"{data.y[i]:.17g}"])


def _sniff_p(path: str) -> int:
    with open(path, newline="") as handle:
        header = next(csv.reader(handle), None)
    if not header:
        raise CsvFormatError(f"{path}: empty file")
    return max(len(header) - 1, 1)


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

def _digest(path: str) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def build_report(command: str, inputs_digest: str, payload: dict, timing_ms: float) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "inputs_digest": inputs_digest,
        "payload": payload,
        "timing_ms": timing_ms,
    }


def _emit(report: dict, path: str | None) -> None:
    text = json.dumps(report, sort_keys=True, indent=2)
    if path:
        with open(path, "w") as handle:
            handle.write(text + "\n")
    else:
        print(text)


def load_report_schema() -> dict:
    """The checked-in JSON schema that reports validate against."""
    with resources.files("cpelt").joinpath("report_schema.json").open() as handle:
        return json.load(handle)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _resolve_model_and_data(args):
    p = _sniff_p(args.data) if args.model == "linear" else 1
    model = get_model(args.model, dim_x=p)
    data = ingest_csv(args.data, model.dim_x)
    return model, data


def _plan_from_args(args, n, d):
    theta1 = getattr(args, "trim_theta1", None)
    theta2 = getattr(args, "trim_theta2", None)
    if theta1 is not None or theta2 is not None:
        if theta1 is None or theta2 is None:
            raise _UsageError("set both --trim-theta1 and --trim-theta2 or neither")
        return trimming_plan(n, theta1, theta2, d=d)
    return trimming_default(n, d=d)


def _cmd_detect(args) -> int:
    start = time.perf_counter()
    model, data = _resolve_model_and_data(args)
    plan = _plan_from_args(args, data.n, model.dim_beta)
    init = _parse_vector(args.init, model.dim_beta) if args.init else None
    res = scan(
        data, model, alpha=args.alpha, plan=plan, init=init,
        tol=args.tol, max_iter=args.max_iter,
    )
    payload = {
        "n": data.n,
        "d": model.dim_beta,
        "model": model.name,
        "alpha": args.alpha,
        "beta_hat": [float(v) for v in res.fit.beta_hat],
        "sigma2_hat": res.fit.sigma2_hat,
        "t_max": res.t_max,
        "sqrt_t_max": math.sqrt(res.t_max),
        "c_alpha": res.c_alpha,
        "reject": res.reject,
        "k_hat": res.k_hat,
        "theta_hat": res.theta_hat,
        "stats": [float(v) for v in res.stats],
    }
    if args.exact:
        state = exact_statistic(data, model, res.k_hat, init=res.fit.beta_hat)
        payload["exact"] = {
            "t_nk": state.t_nk,
            "lambda": [float(v) for v in state.lam],
            "beta": [float(v) for v in state.beta],
            "score_norm": state.score_norm,
        }
    _emit(
        build_report("detect", _digest(args.data), payload,
                     (time.perf_counter() - start) * 1000.0),
        args.report,
    )
    return 0


def _cmd_epidemic(args) -> int:
    start = time.perf_counter()
    model, data = _resolve_model_and_data(args)
    trim = None
    if args.trim:
        trim = (args.trim[0], args.trim[-1]) if len(args.trim) <= 2 else None
        if trim is None:
            raise _UsageError("--trim takes one or two integers")
    res = epidemic_scan(
        data, model, alpha=args.alpha, trim=trim,
        bootstrap_reps=args.bootstrap_reps, seed=args.seed,
    )
    payload = {
        "n": data.n,
        "d": model.dim_beta,
        "model": model.name,
        "alpha": args.alpha,
        "beta_hat": [float(v) for v in res.fit.beta_hat],
        "sigma2_hat": res.fit.sigma2_hat,
        "stat_max": res.stat_max,
        "k1_hat": res.k1_hat,
        "k2_hat": res.k2_hat,
        "theta_hat": res.theta_hat,
        "threshold": res.threshold,
        "threshold_method": "parametric-bootstrap",
        "bootstrap_reps": res.bootstrap_reps,
        "trim": list(res.trim),
        "reject": res.reject,
    }
    _emit(
        build_report("epidemic", _digest(args.data), payload,
                     (time.perf_counter() - start) * 1000.0),
        args.report,
    )
    return 0


def _cmd_supf(args) -> int:
    start = time.perf_counter()
    model, data = _resolve_model_and_data(args)
    plan = _plan_from_args(args, data.n, model.dim_beta)
    res = sup_f(data, model, plan=plan)
    payload = {
        "n": data.n,
        "model": model.name,
        "f_max": res.f_max,
        "k_at_max": res.k_at_max,
        "reject": res.reject,
        "per_k_failures": res.per_k_failures,
    }
    _emit(
        build_report("supf", _digest(args.data), payload,
                     (time.perf_counter() - start) * 1000.0),
        args.report,
    )
    return 0


def _config_from_json(path: str) -> tuple[SimConfig, str | None]:
    with open(path) as handle:
        raw = json.load(handle)
    if not isinstance(raw, dict):
        raise CsvFormatError(f"{path}: config must be a JSON object")
    if "dist" in raw:
        raw["dist"] = ErrorDistribution(raw["dist"])
    if "beta1" in raw:
        raw["beta1"] = tuple(raw["beta1"])
    if raw.get("beta2") is not None:
        raw["beta2"] = tuple(raw["beta2"])
    detector = raw.pop("detector", None)
    cfg = SimConfig(**raw)
    if ENV_SEED in os.environ:
        cfg = dataclasses.replace(cfg, seed=int(os.environ[ENV_SEED]))
    return cfg, detector


def _cmd_simulate(args) -> int:
    start = time.perf_counter()
    cfg, detector_from_cfg = _config_from_json(args.config)
    if args.reps is not None:
        cfg = dataclasses.replace(cfg, reps=args.reps)
    detector = args.detector or detector_from_cfg or (
        "epidemic" if cfg.scenario == "epidemic" else "el"
    )
    report = run_replications(cfg, detector=detector, n_jobs=args.threads)
    payload = {
        "detector": report.detector,
        "scenario": cfg.scenario,
        "n": cfg.n,
        "dist": cfg.dist.value,
        "reps": cfg.reps,
        "alpha": cfg.alpha,
        "seed": cfg.seed,
        "rejections": report.rejections,
        "reps_done": report.reps_done,
        "empirical_rate": report.empirical_rate,
        "failures": report.failures,
        "khat_summaries": report.khat_summaries,
        "wall_time_s": report.wall_time_s,
    }
    if args.csv:
        _write_per_rep_csv(report.per_rep, detector, args.csv)
    _emit(
        build_report("simulate", _digest(args.config), payload,
                     (time.perf_counter() - start) * 1000.0),
        args.report,
    )
    return 0


def _write_per_rep_csv(records, detector, path):
    if detector == "epidemic":
        fields = ["rep", "reject", "k1_hat", "k2_hat", "t_max"]
    else:
        fields = ["rep", "reject", "k_hat", "t_max"]
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(fields)
        for rec in records:
            writer.writerow([rec.get(name, "") for name in fields])


def _cmd_critical_value(args) -> int:
    if args.theta1 is not None or args.theta2 is not None:
        if args.theta1 is None or args.theta2 is None:
            raise _UsageError("set both --theta1 and --theta2 or neither")
        plan = trimming_plan(args.n, args.theta1, args.theta2)
    else:
        plan = trimming_default(args.n)
    print(f"{critical_value(args.alpha, plan):.6f}")
    return 0


def _cmd_gradcheck(args) -> int:
    model = get_model(args.model, dim_x=args.dim_x)
    if args.x is not None and args.beta is not None:
        points = [(
            _parse_vector(args.x, model.dim_x),
            _parse_vector(args.beta, model.dim_beta),
        )]
    else:
        rng = np.random.default_rng(args.seed)
        lo, hi = model.domain.lower, model.domain.upper
        points = []
        for _ in range(args.samples):
            x = rng.uniform(0.05, 1.0, size=model.dim_x)
            beta = lo + (0.1 + 0.8 * rng.random(model.dim_beta)) * (hi - lo)
            points.append((x, beta))
    worst = max(check_gradient(model, x, beta, step=args.step) for x, beta in points)
    print(f"{worst:.3e}")
    if args.tol is not None and worst > args.tol:
        print(f"gradcheck failed: {worst:.3e} > {args.tol:.3e}", file=sys.stderr)
        return 2
    return 0


def _parse_vector(text: str, length: int) -> np.ndarray:
    try:
        vec = np.asarray([float(v) for v in text.split(",")], dtype=float)
    except ValueError:
        raise _UsageError(f"cannot parse vector {text!r}") from None
    if vec.shape != (length,):
        raise _UsageError(f"expected {length} comma-separated values, got {text!r}")
    return vec


# --------------------------------------------------------------------------
# parser / dispatch
# --------------------------------------------------------------------------

def build_parser() -> _Parser:
    parser = _Parser(prog="cpelt", description=__doc__)
    parser.add_argument("--version", action="version", version=f"cpelt {__version__}")
    sub = parser.add_subparsers(dest="command")

    def add_data_opts(p):
        p.add_argument("--data", required=True, help="dataset CSV (header x1,...,xp,y)")
        p.add_argument("--model", default="ratio_power", choices=["ratio_power", "linear"])
        p.add_argument("--report", default=None, help="write the JSON report here")

    p = sub.add_parser("detect", help="single change-point test")
    add_data_opts(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--trim-theta1", type=float, default=None)
    p.add_argument("--trim-theta2", type=float, default=None)
    p.add_argument("--exact", action="store_true", help="add the exact-mode statistic at k_hat")
    p.add_argument("--init", default=None, help="comma-separated start for the fit")
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=200)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("epidemic", help="two change-point (epidemic) test")
    add_data_opts(p)
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--trim", type=int, nargs="+", default=None,
                   help="observations excluded at each end (one or two integers)")
    p.add_argument("--bootstrap-reps", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_epidemic)

    p = sub.add_parser("supf", help="least-squares sup-F baseline")
    add_data_opts(p)
    p.add_argument("--trim-theta1", type=float, default=None)
    p.add_argument("--trim-theta2", type=float, default=None)
    p.set_defaults(func=_cmd_supf)

    p = sub.add_parser("simulate", help="Monte-Carlo replications from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--csv", default=None, help="per-replication CSV output")
    p.add_argument("--reps", type=int, default=None, help="override the config's reps")
    p.add_argument("--detector", default=None, choices=["el", "supf", "epidemic"])
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("critical-value", help="print the asymptotic critical value")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--theta1", type=float, default=None)
    p.add_argument("--theta2", type=float, default=None)
    p.set_defaults(func=_cmd_critical_value)

    p = sub.add_parser("gradcheck", help="compare analytic and numeric gradients")
    p.add_argument("--model", default="ratio_power", choices=["ratio_power", "linear"])
    p.add_argument("--dim-x", type=int, default=1)
    p.add_argument("--x", default=None, help="comma-separated covariate")
    p.add_argument("--beta", default=None, help="comma-separated parameter")
    p.add_argument("--step", type=float, default=1e-6)
    p.add_argument("--samples", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tol", type=float, default=None, help="exit 2 when exceeded")
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if getattr(args, "command", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    except (CpeltError, FileNotFoundError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
