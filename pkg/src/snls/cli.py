"""Command-line entry point.

Exit codes: 0 when the solver converged, 1 when it stopped on the iteration
limit or failed (the report is still written), 2 on bad invocation, config
or input (diagnostic on stderr, no report).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import datetime as dt
import io
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import CorpusSpec, Lcg64, default_corpus, generate, run_comparison
from .errors import (
    ConfigError,
    InvalidInputError,
    InvalidStartError,
    ModelEvaluationError,
    ParseError,
    SubproblemFailedError,
)
from .io import dumps_report, file_digest, format_dataset, format_number, parse_config, parse_dataset
from .minimax import DualConfig, minimax_from_separable, solve_minimax
from .models import make_model
from .separable import eliminate_linear
from .solvers import SolverConfig, solve_separable_joint, solve_separable_varpro

SCHEMA_VERSION = "1"
COMMANDS = ("fit-varpro", "fit-joint", "fit-minimax", "compare", "gen-data")
EXIT_OK, EXIT_NOT_CONVERGED, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


# -- config decoding ---------------------------------------------------------

def _floats(value, key):
    if value == "":
        return ()
    try:
        return tuple(float(v) for v in value.split(","))
    except ValueError:
        raise ConfigError(f"{key}: expected comma-separated numbers, got {value!r}") from None


def _coerce(value, kind, key):
    try:
        if kind is bool:
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError
            return value.lower() in ("true", "1", "yes")
        return kind(value)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {value!r} as {kind.__name__}") from None


def _dataclass_overrides(cls, cfg, prefix, **extra):
    kwargs = dict(extra)
    fields = {f.name: f for f in dataclasses.fields(cls)}
    for key, value in cfg.items():
        if not key.startswith(prefix + "."):
            continue
        name = key[len(prefix) + 1:]
        if name not in fields or name in extra:
            raise ConfigError(f"unknown key {key!r}")
        default = fields[name].default
        kwargs[name] = _coerce(value, type(default), key)
    try:
        return cls(**kwargs)
    except InvalidInputError as exc:
        raise ConfigError(f"{prefix}: {exc}") from exc


def _t_grid(cfg, prefix):
    if f"{prefix}.t" in cfg:
        return _floats(cfg[f"{prefix}.t"], f"{prefix}.t")
    try:
        start = float(cfg[f"{prefix}.t_start"])
        stop = float(cfg[f"{prefix}.t_stop"])
        count = int(cfg[f"{prefix}.t_count"])
    except KeyError as exc:
        raise ConfigError(f"{prefix}: give either t or t_start/t_stop/t_count (missing {exc.args[0]})") from None
    except ValueError as exc:
        raise ConfigError(f"{prefix}: bad t grid ({exc})") from None
    return tuple(np.linspace(start, stop, count))


CORPUS_KEYS = {"family", "a", "alpha", "t", "t_start", "t_stop", "t_count", "noise_sigma", "seed", "alpha0", "name"}


def _corpus_spec(cfg, prefix, seed=None):
    for key in cfg:
        if key.startswith(prefix + ".") and key[len(prefix) + 1:] not in CORPUS_KEYS:
            raise ConfigError(f"unknown key {key!r}")
    try:
        family = cfg[f"{prefix}.family"]
    except KeyError:
        raise ConfigError(f"missing {prefix}.family") from None
    alpha0 = cfg.get(f"{prefix}.alpha0")
    try:
        return CorpusSpec(
            family=family,
            a=_floats(cfg.get(f"{prefix}.a", ""), f"{prefix}.a"),
            alpha=_floats(cfg.get(f"{prefix}.alpha", ""), f"{prefix}.alpha"),
            t=_t_grid(cfg, prefix),
            noise_sigma=_coerce(cfg.get(f"{prefix}.noise_sigma", "0"), float, f"{prefix}.noise_sigma"),
            seed=seed if seed is not None else _coerce(cfg.get(f"{prefix}.seed", "0"), int, f"{prefix}.seed"),
            alpha0=None if alpha0 is None else _floats(alpha0, f"{prefix}.alpha0"),
            name=cfg.get(f"{prefix}.name", ""),
        )
    except InvalidInputError as exc:
        raise ConfigError(f"{prefix}: {exc}") from exc


def _corpus_from_config(cfg):
    indices = sorted({int(k.split(".")[1]) for k in cfg if k.startswith("corpus.") and k.split(".")[1].isdigit()})
    stray = [k for k in cfg if k.startswith("corpus.") and not k.split(".")[1].isdigit()]
    if stray:
        raise ConfigError(f"unknown key {stray[0]!r}; corpus entries are corpus.<index>.<field>")
    if not indices:
        return default_corpus()
    return [_corpus_spec(cfg, f"corpus.{i}") for i in indices]


MODEL_KEYS = {"family", "terms", "alpha0", "a0", "jacobian"}


def _model_from_config(cfg):
    for key in cfg:
        if key.startswith("model.") and key[6:] not in MODEL_KEYS:
            raise ConfigError(f"unknown key {key!r}")
    if "model.family" not in cfg:
        raise ConfigError("missing model.family")
    terms = _coerce(cfg.get("model.terms", "1"), int, "model.terms")
    try:
        model = make_model(cfg["model.family"], terms)
    except InvalidInputError as exc:
        raise ConfigError(str(exc)) from exc
    alpha0 = np.array(_floats(cfg.get("model.alpha0", ""), "model.alpha0"))
    if alpha0.size != model.k_nonlinear:
        raise ConfigError(f"model.alpha0 needs {model.k_nonlinear} values, got {alpha0.size}")
    a0 = None
    if "model.a0" in cfg:
        a0 = np.array(_floats(cfg["model.a0"], "model.a0"))
        if a0.size != model.n_linear:
            raise ConfigError(f"model.a0 needs {model.n_linear} values, got {a0.size}")
    jacobian = cfg.get("model.jacobian", "full")
    if jacobian not in ("full", "kaufman", "fd"):
        raise ConfigError(f"model.jacobian must be full, kaufman or fd, got {jacobian!r}")
    return model, terms, alpha0, a0, jacobian


def _check_known_sections(cfg, allowed):
    for key in cfg:
        if key.split(".")[0] not in allowed:
            raise ConfigError(f"unknown key {key!r}")


# -- report assembly ---------------------------------------------------------

def _header(command, timestamp):
    head = {"schema_version": SCHEMA_VERSION, "tool": "snls", "version": __version__, "command": command}
    if timestamp:
        head["timestamp"] = dt.datetime.now(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")
    return head


def _input_digest(path, data):
    return {"rows": len(data), "sha256": file_digest(path)}


def _nls_trace(trace):
    return [
        {
            "iteration": r.iteration,
            "objective": r.objective,
            "gradient_norm": r.gradient_norm,
            "damping": r.damping,
            "step_norm": r.step_norm,
            "accepted": r.accepted,
        }
        for r in trace
    ]


def _dual_trace(trace):
    return [
        {
            "iteration": r.iteration,
            "primal": r.primal,
            "weighted_objective": r.weighted_objective,
            "dual_bound_sq": r.dual_bound,
            "step_size": r.step_size,
            "lambda": r.lam,
            "inner_status": r.inner_status,
        }
        for r in trace
    ]


def _failed(report, exc):
    report.update({"solution": None, "status": "failed", "iterations": 0, "error": str(exc)})
    return report, EXIT_NOT_CONVERGED


def _run_fit(args, cfg, joint):
    _check_known_sections(cfg, {"model", "solver", "data", "output"})
    model, terms, alpha0, a0, jacobian = _model_from_config(cfg)
    solver = _dataclass_overrides(SolverConfig, cfg, "solver")
    data_path = _data_path(args, cfg)
    data = parse_dataset(data_path)
    command = "fit-joint" if joint else "fit-varpro"
    report = _header(command, not args.no_timestamp)
    report["input"] = _input_digest(data_path, data)
    report["model"] = {"family": model.name, "terms": terms, "n_linear": model.n_linear, "k_nonlinear": model.k_nonlinear}
    try:
        if joint:
            start = a0 if a0 is not None else eliminate_linear(model, alpha0, data)
            fit = solve_separable_joint(model, data, start, alpha0, solver)
        else:
            fit = solve_separable_varpro(model, data, alpha0, solver, jacobian=jacobian)
    except (InvalidStartError, ModelEvaluationError) as exc:
        return _failed(report, exc)
    report["solution"] = {"a": fit.a, "alpha": fit.alpha}
    report["objective"] = fit.objective
    report["residual_norm_sq"] = fit.residual_norm_sq
    report["status"] = fit.status
    report["iterations"] = fit.iterations
    if args.trace:
        report["trace"] = _nls_trace(fit.trace)
    return report, EXIT_OK if fit.status.startswith("converged") else EXIT_NOT_CONVERGED


def _run_minimax(args, cfg):
    _check_known_sections(cfg, {"model", "solver", "dual", "data", "output"})
    model, terms, y0, x0, _ = _model_from_config(cfg)
    inner = _dataclass_overrides(SolverConfig, cfg, "solver")
    dual = _dataclass_overrides(DualConfig, cfg, "dual", inner=inner)
    data_path = _data_path(args, cfg)
    data = parse_dataset(data_path)
    report = _header("fit-minimax", not args.no_timestamp)
    report["input"] = _input_digest(data_path, data)
    report["model"] = {"family": model.name, "terms": terms, "n_linear": model.n_linear, "k_nonlinear": model.k_nonlinear}
    problem = minimax_from_separable(model, data)
    try:
        if x0 is None:
            x0 = eliminate_linear(model, y0, data)
        result = solve_minimax(problem, x0, y0, dual)
    except (InvalidStartError, ModelEvaluationError, SubproblemFailedError) as exc:
        return _failed(report, exc)
    report["solution"] = {"x": result.x, "y": result.y}
    report["primal_value"] = result.primal_value
    report["heuristic_dual_bound_sq"] = result.dual_value_sq
    report["lambda"] = result.lam
    report["status"] = result.status
    report["iterations"] = result.iterations
    if args.trace:
        report["trace"] = _dual_trace(result.trace)
    return report, EXIT_OK if result.status.startswith("converged") else EXIT_NOT_CONVERGED


def _run_compare(args, cfg):
    _check_known_sections(cfg, {"corpus", "solver", "output"})
    solver = _dataclass_overrides(SolverConfig, cfg, "solver")
    specs = _corpus_from_config(cfg)
    comparison = run_comparison(specs, solver)
    report = _header("compare", not args.no_timestamp)
    report["corpus"] = {"size": len(specs), "agreement_tolerance": comparison.agreement_tolerance}
    report["rows"] = [dataclasses.asdict(row) for row in comparison.rows]
    report["all_agree"] = comparison.all_agree
    report["status"] = "converged" if comparison.all_converged else "not_converged"
    return report, EXIT_OK if comparison.all_converged else EXIT_NOT_CONVERGED


def _data_path(args, cfg):
    if args.data:
        path = Path(args.data)
    elif "data.path" in cfg:
        path = Path(cfg["data.path"])
        if not path.is_absolute() and args.config:
            path = Path(args.config).parent / path
    else:
        raise UsageError("no dataset: pass --data or set data.path in the config")
    if not path.is_file():
        raise UsageError(f"data file not found: {path}")
    return path


# -- output --------------------------------------------------------------------

def _flatten(prefix, value, out):
    if isinstance(value, dict):
        for k, v in value.items():
            _flatten(f"{prefix}.{k}" if prefix else k, v, out)
    elif isinstance(value, (list, tuple, np.ndarray)) and len(value) and isinstance(value[0], dict):
        for i, v in enumerate(value):
            _flatten(f"{prefix}.{i}", v, out)
    elif isinstance(value, (list, tuple, np.ndarray)):
        out.append((prefix, ";".join(_scalar(v) for v in value)))
    else:
        out.append((prefix, _scalar(value)))


def _scalar(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format_number(v)
    return str(v)


def render(report, fmt):
    if fmt == "json":
        return dumps_report(report)
    rows = []
    _flatten("", report, rows)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["field", "value"])
    writer.writerows(rows)
    return buf.getvalue()


def _emit(text, out_path):
    if out_path:
        Path(out_path).write_text(text, encoding="utf-8", newline="")
    else:
        sys.stdout.write(text)


# -- entry point -----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="snls", description="Separable least-squares and minimax fitting.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, help_text in (
        ("fit-varpro", "fit by variable projection (linear parameters eliminated)"),
        ("fit-joint", "fit over linear and nonlinear parameters together"),
        ("fit-minimax", "minimize the largest absolute residual with the dual method"),
        ("compare", "run both least-squares drivers on a corpus and tabulate them"),
        ("gen-data", "write a synthetic t,y dataset from a generator spec"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="key = value config file")
        p.add_argument("--out", help="output file (default: stdout)")
        if name == "gen-data":
            p.add_argument("--seed", type=int, help="override gen.seed")
        else:
            p.add_argument("--data", help="t,y CSV (overrides data.path)")
            p.add_argument("--trace", action="store_true", help="include per-iteration records")
            p.add_argument("--no-timestamp", action="store_true", help="omit the timestamp field")
            p.add_argument("--format", choices=("json", "csv"), help="report format (overrides output.format)")
    return parser


def _dispatch(args):
    cfg = parse_config(args.config) if args.config else {}
    if args.command == "gen-data":
        _check_known_sections(cfg, {"gen"})
        if not cfg:
            raise UsageError("gen-data needs --config with gen.* keys")
        gen = generate(_corpus_spec(cfg, "gen", seed=args.seed))
        _emit(format_dataset(gen.data), args.out)
        return EXIT_OK
    if args.command in ("fit-varpro", "fit-joint", "fit-minimax") and not args.config:
        raise UsageError(f"{args.command} needs --config with model.* keys")
    fmt = args.format or cfg.pop("output.format", "json")
    cfg.pop("output.format", None)
    if fmt not in ("json", "csv"):
        raise ConfigError(f"output.format must be json or csv, got {fmt!r}")
    if args.command == "fit-minimax":
        report, code = _run_minimax(args, cfg)
    elif args.command == "compare":
        report, code = _run_compare(args, cfg)
    else:
        report, code = _run_fit(args, cfg, joint=args.command == "fit-joint")
    _emit(render(report, fmt), args.out)
    return code


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return _dispatch(args)
    except (UsageError, ConfigError, ParseError, InvalidInputError, OSError) as exc:
        print(f"snls: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
