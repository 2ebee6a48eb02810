"""Command-line front end: config parsing, experiment dispatch and report emission.

Exit codes: 0 success, 2 configuration or usage error, 3 estimation failure
(including the Monte Carlo failure cap), 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from . import __version__
from .errors import (
    CondIntError,
    ConfigurationError,
    EstimationFailedError,
    FailureCapExceededError,
    SingularInformationError,
)
from .estimation import fit
from .intervals import build_interval_2ip, build_interval_spl, build_interval_sta
from .metrics import d_bounded_lipschitz, d_kolmogorov, d_levy, from_samples
from .models import Ar1Params, Garch11Params, TimeSeries, TruncationConfig, get_model, read_series_csv
from .montecarlo import (
    EXPERIMENT_KINDS,
    CoverageReport,
    EquivalenceReport,
    ExperimentConfig,
    MergingReport,
    NegligibilityReport,
    run_experiment,
)

__all__ = [
    "EXIT_OK",
    "EXIT_CONFIG",
    "EXIT_ESTIMATION",
    "EXIT_IO",
    "parse_config",
    "parse_config_text",
    "render_config",
    "dumps_json",
    "load_report",
    "report_rows",
    "main",
]

EXIT_OK, EXIT_CONFIG, EXIT_ESTIMATION, EXIT_IO = 0, 2, 3, 4
SCHEMA_VERSION = 1

# --------------------------------------------------------------------------
# Config files


def _int(text: str) -> int:
    return int(text)


def _float(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _str_list(text: str) -> tuple[str, ...]:
    return tuple(p.strip() for p in text.split(",") if p.strip())


def _bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError("expected true or false")


def _l_t(text: str) -> str | float:
    return "log" if text == "log" else _float(text)


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], Any]
    default: Any
    help: str
    required: bool = False


CONFIG_KEYS: dict[str, _Key] = {
    "model": _Key(str, None, "ar1 or garch11", True),
    "T": _Key(_int_list, None, "sample length, or a comma-separated increasing grid", True),
    "gamma": _Key(_float, None, "total non-coverage, split evenly between the tails", True),
    "seed": _Key(_int, None, "master seed", True),
    "reps": _Key(_int, 1000, "Monte Carlo replications (at least 100)"),
    "gamma1": _Key(_float, None, "lower-tail level; overrides gamma together with gamma2"),
    "gamma2": _Key(_float, None, "upper-tail level"),
    "variants": _Key(_str_list, ("TwoIP", "SPL"), "coverage variants: TwoIP, SPL"),
    "split_gap": _Key(_int, None, "t_p - t_e; default floor(l_T log T)"),
    "split_horizon": _Key(_int, None, "T - t_p; default equals the default gap"),
    "l_t": _Key(_l_t, "log", "split multiplier: 'log' for log T, or a number"),
    "innovation": _Key(str, "gaussian", "GARCH innovations: gaussian or student-t"),
    "df": _Key(_float, None, "Student-t degrees of freedom (> 4)"),
    "start_values": _Key(str, "unconditional", "GARCH start values: zeros or unconditional"),
    "constants": _Key(str, "unconditional", "SPL constants before t_p: zeros or unconditional"),
    "offsets": _Key(_int_list, (5, 10, 20, 30, 40, 50, 60, 70, 80), "negligibility grid of T - t1"),
    "dump_samples": _Key(_bool, False, "write per-replication samples as rep,value CSV"),
    "beta": _Key(_float, None, "AR(1) slope or GARCH beta"),
    "noise_sd": _Key(_float, None, "AR(1) innovation sd (default 1)"),
    "omega": _Key(_float, None, "GARCH omega"),
    "alpha": _Key(_float, None, "GARCH alpha"),
}
PARAM_KEYS = {"ar1": ("beta", "noise_sd"), "garch11": ("omega", "alpha", "beta")}
REQUIRED_PARAMS = {"ar1": ("beta",), "garch11": ("omega", "alpha", "beta")}
PARAM_NAMES = ("beta", "noise_sd", "omega", "alpha")


def _range_checks(values: dict[str, Any], lines: dict[str, int]) -> None:
    for key in ("gamma", "gamma1", "gamma2"):
        v = values.get(key)
        if v is None:
            continue
        lowest_ok = 0.0 < v if key == "gamma" else 0.0 <= v
        if not (lowest_ok and v < 1.0):
            raise ConfigurationError(f"{key}={v} is out of range; it must lie in (0, 1)", lines[key], key)
    if values["seed"] < 0:
        raise ConfigurationError(f"seed={values['seed']} must be nonnegative", lines["seed"], "seed")
    if "reps" in values and values["reps"] < 100:
        raise ConfigurationError(f"reps={values['reps']} must be at least 100", lines.get("reps"), "reps")
    if any(t < 1 for t in values["T"]):
        raise ConfigurationError("T values must be positive", lines["T"], "T")


def _build_config(kind: str, label: str, values: dict[str, Any], lines: dict[str, int], header_line: int):
    for key, spec in CONFIG_KEYS.items():
        if spec.required and key not in values:
            section = f"{kind} {label}".strip()
            raise ConfigurationError(f"section [{section}] is missing required key {key!r}", header_line, key)
    _range_checks(values, lines)
    model = values["model"]
    if model not in PARAM_KEYS:
        raise ConfigurationError(f"model={model!r} is not one of {sorted(PARAM_KEYS)}", lines["model"], "model")
    params = {}
    for key in PARAM_NAMES:
        if key in values:
            if key not in PARAM_KEYS[model]:
                raise ConfigurationError(f"key {key!r} does not apply to model {model}", lines[key], key)
            params[key] = values[key]
    for key in REQUIRED_PARAMS[model]:
        if key not in params:
            raise ConfigurationError(f"model {model} needs key {key!r}", header_line, key)
    kwargs = {
        k: spec.default for k, spec in CONFIG_KEYS.items() if spec.default is not None and k not in PARAM_NAMES
    }
    kwargs.update((k, v) for k, v in values.items() if k not in PARAM_NAMES)
    try:
        return ExperimentConfig(kind=kind, params=params, label=label, **kwargs)
    except (CondIntError, ValueError) as exc:
        key = getattr(exc, "key", None)
        if key == "params" or key in PARAM_NAMES:
            key = None
        message = str(exc)
        if key is not None and key not in message:
            message = f"{key}: {message}"
        raise ConfigurationError(message, lines.get(key, header_line), key) from None


def parse_config_text(text: str) -> list[ExperimentConfig]:
    """Parse a config document.

    Sections start with ``[kind]`` or ``[kind label]`` where ``kind`` is an
    experiment kind; each section holds ``key = value`` lines.  Blank lines
    and lines starting with ``#`` or ``;`` are ignored.
    """
    configs: list[ExperimentConfig] = []
    seen: set[tuple[str, str]] = set()
    current: tuple[str, str, int] | None = None
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}

    def close() -> None:
        if current is not None:
            configs.append(_build_config(current[0], current[1], values, lines, current[2]))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigurationError(f"malformed section header {line!r}", lineno)
            close()
            parts = line[1:-1].split(None, 1)
            if not parts:
                raise ConfigurationError("empty section header", lineno)
            kind = parts[0]
            label = parts[1].strip() if len(parts) > 1 else ""
            if kind not in EXPERIMENT_KINDS:
                raise ConfigurationError(f"unknown experiment kind {kind!r}; expected one of {EXPERIMENT_KINDS}", lineno)
            if (kind, label) in seen:
                raise ConfigurationError(f"duplicate section [{line[1:-1]}]", lineno)
            seen.add((kind, label))
            current, values, lines = (kind, label, lineno), {}, {}
            continue
        if "=" not in line:
            raise ConfigurationError(f"expected key = value, got {line!r}", lineno)
        if current is None:
            raise ConfigurationError("key = value line before any [section] header", lineno)
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigurationError(f"unknown key {key!r}", lineno, key)
        if key in values:
            raise ConfigurationError(f"key {key!r} given twice in one section", lineno, key)
        try:
            values[key] = CONFIG_KEYS[key].parse(value)
        except ValueError as exc:
            raise ConfigurationError(f"cannot parse {key}={value!r}: {exc}", lineno, key) from None
        lines[key] = lineno
    close()
    if not configs:
        raise ConfigurationError("config defines no experiments")
    return configs


def parse_config(path: str | Path) -> list[ExperimentConfig]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _fmt_value(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return _fmt_float(v)
    if isinstance(v, (tuple, list)):
        return ", ".join(_fmt_value(p) for p in v)
    return str(v)


def render_config(configs: Sequence[ExperimentConfig]) -> str:
    """Config text that parses back to ``configs``."""
    out = []
    for cfg in configs:
        out.append(f"[{cfg.kind} {cfg.label}]" if cfg.label else f"[{cfg.kind}]")
        d = cfg.to_dict()
        for key in CONFIG_KEYS:
            if key in cfg.params:
                out.append(f"{key} = {_fmt_value(cfg.params[key])}")
            elif key in d and key not in ("kind", "label", "params") and d[key] is not None:
                out.append(f"{key} = {_fmt_value(d[key])}")
        out.append("")
    return "\n".join(out)


def _config_help() -> str:
    rows = ["config keys (required keys have no default):"]
    for key, spec in CONFIG_KEYS.items():
        default = "required" if spec.required else f"default {_fmt_value(spec.default)}" if spec.default is not None else "optional"
        rows.append(f"  {key:<14} {spec.help} [{default}]")
    rows.append("sections: [coverage], [merging], [equivalence] or [negligibility], optionally followed by a label")
    rows.append("environment: CONDINT_THREADS sets the number of worker processes (default: all cores)")
    return "\n".join(rows)


# --------------------------------------------------------------------------
# Serialization


def _fmt_float(v: float) -> str:
    if math.isnan(v):
        return "NaN"
    if math.isinf(v):
        return "Infinity" if v > 0 else "-Infinity"
    return "%.17g" % v


def _emit(obj: Any, level: int, out: list[str]) -> None:
    pad = "  " * (level + 1)
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(_fmt_float(float(obj)))
    elif isinstance(obj, str):
        out.append(json.dumps(obj, ensure_ascii=False))
    elif isinstance(obj, np.ndarray):
        _emit(obj.tolist(), level, out)
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad)
            _emit(str(k), level, out)
            out.append(": ")
            _emit(v, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append("  " * level + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.append("[]")
            return
        if all(isinstance(v, (int, float, np.number)) and not isinstance(v, bool) for v in obj):
            out.append("[")
            for i, v in enumerate(obj):
                _emit(v, level, out)
                if i < len(obj) - 1:
                    out.append(", ")
            out.append("]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append("  " * level + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps_json(obj: Any) -> str:
    """JSON text with floats written to 17 significant digits."""
    out: list[str] = []
    _emit(obj, 0, out)
    out.append("\n")
    return "".join(out)


REPORT_TYPES = {
    "coverage": CoverageReport,
    "merging": MergingReport,
    "equivalence": EquivalenceReport,
    "negligibility": NegligibilityReport,
}


def _report_document(kind: str, configs: Sequence[ExperimentConfig], results: list[tuple[int, Any]]) -> dict:
    seeds = sorted({c.seed for c in configs})
    entries = []
    for index, report in results:
        d = report.to_dict()
        d["experiment"] = index
        entries.append(d)
    return {
        "schema_version": SCHEMA_VERSION,
        "kind": kind,
        "config": [c.to_dict() for c in configs],
        "results": entries,
        "seed": seeds[0] if len(seeds) == 1 else seeds,
    }


def load_report(path: str | Path) -> tuple[str, list[ExperimentConfig], list[Any]]:
    """Read a report JSON written by the CLI back into report objects."""
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported schema_version {doc.get('schema_version')!r}")
    kind = doc["kind"]
    configs = [ExperimentConfig.from_dict(c) for c in doc["config"]]
    cls = REPORT_TYPES[kind]
    return kind, configs, [cls.from_dict(r) for r in doc["results"]]


def report_rows(report: Any) -> list[tuple[int, str, float]]:
    """``(T, metric, value)`` rows for the plot-ready CSV table."""
    if isinstance(report, CoverageReport):
        v = report.variant
        return [
            (report.T, f"coverage_{v}", report.coverage),
            (report.T, f"binomial_se_{v}", report.binomial_se),
            (report.T, f"hit_count_{v}", report.hit_count),
            (report.T, f"failure_count_{v}", report.failure_count),
        ]
    if isinstance(report, MergingReport):
        keys = ("d_bl", "d_k_2ip", "d_k_2ip_p90", "d_k_spl", "d_k_spl_p90")
        return [(row["T"], k, row[k]) for row in report.rows for k in keys]
    if isinstance(report, EquivalenceReport):
        keys = [k for k in report.rows[0] if "gap" in k]
        return [(row["T"], k, row[k]) for row in report.rows for k in keys]
    if isinstance(report, NegligibilityReport):
        rows = [(report.T, "slope", report.slope), (report.T, "log_beta", report.log_beta)]
        rows += [(report.T, f"default_t1_{q}", report.default_scaled_gap[q]) for q in ("median", "p90", "max")]
        for row in report.rows:
            rows += [(report.T, f"{q}_offset_{row['offset']}", row[q]) for q in ("median", "p10", "p90")]
        return rows
    raise TypeError(f"not a report: {type(report).__name__}")


def _csv_text(rows: Sequence[Sequence[Any]], header: Sequence[str]) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt_float(float(v)) if isinstance(v, float) else str(v) for v in row))
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Output staging


@dataclass
class _Outputs:
    """Files are staged in memory and written only after every computation succeeded."""

    texts: dict[str, str] = field(default_factory=dict)
    figures: list[Callable[[Path], list[Path]]] = field(default_factory=list)
    configs: list[ExperimentConfig] = field(default_factory=list)
    seed: Any = None
    echo: dict[str, Any] = field(default_factory=dict)


def _prepare_out(out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    probe = out / ".condint-write-probe"
    probe.write_text("")
    probe.unlink()


def _write_outputs(out: Path, staged: _Outputs, plots: bool) -> list[str]:
    written: list[Path] = []
    try:
        for name, text in staged.texts.items():
            path = out / name
            with open(path, "w", encoding="utf-8", newline="\n") as fh:
                fh.write(text)
            written.append(path)
        if plots:
            for render in staged.figures:
                written.extend(render(out))
    except OSError:
        for path in written:
            path.unlink(missing_ok=True)
        raise
    return [p.name for p in written]


def _manifest(args, staged: _Outputs | None, files: list[str], started: str, status: str,
              exit_code: int, error: str | None) -> dict:
    configs = staged.configs if staged else []
    return {
        "tool": "condint",
        "version": __version__,
        "subcommand": args.command,
        "status": status,
        "exit_code": exit_code,
        "error": error,
        "master_seed": staged.seed if staged else getattr(args, "seed", None),
        "config": render_config(configs) if configs else None,
        "experiments": [c.to_dict() for c in configs],
        "arguments": staged.echo if staged else {},
        "reports": files,
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
    }


# --------------------------------------------------------------------------
# Subcommands


def _experiments(args, kind: str) -> _Outputs:
    configs = [c for c in parse_config(args.config) if c.kind == kind]
    if not configs:
        raise ConfigurationError(f"config has no [{kind}] section")
    if args.seed is not None:
        configs = [ExperimentConfig.from_dict({**c.to_dict(), "seed": args.seed}) for c in configs]
    results: list[tuple[int, Any]] = []
    staged = _Outputs(configs=configs)
    for i, cfg in enumerate(configs):
        for report in run_experiment(cfg):
            results.append((i, report))
    staged.seed = _report_document(kind, configs, results)["seed"]
    staged.texts[f"{kind}.json"] = dumps_json(_report_document(kind, configs, results))
    multi = len(configs) > 1
    rows = []
    for i, report in results:
        prefix = f"{configs[i].label or i + 1}/" if multi else ""
        rows += [(T, prefix + m, v) for T, m, v in report_rows(report)]
    staged.texts[f"{kind}.csv"] = _csv_text(rows, ("T", "metric", "value"))
    for i, report in results:
        for name, values in _sample_dumps(kind, i, report):
            staged.texts[name] = _csv_text(list(enumerate(values)), ("rep", "value"))
    reports = [r for _, r in results]

    def render(out: Path) -> list[Path]:
        from .plotting import plot_report

        return plot_report(kind, reports, out / f"{kind}.png")

    staged.figures.append(render)
    return staged


def _sample_dumps(kind: str, index: int, report: Any):
    if isinstance(report, CoverageReport) and report.samples is not None:
        yield f"{kind}_samples_{index + 1}_{report.variant}_T{report.T}.csv", report.samples
    if isinstance(report, MergingReport) and report.samples is not None:
        for T, arms in report.samples.items():
            for arm, values in arms.items():
                yield f"{kind}_samples_{index + 1}_{arm}_T{T}.csv", values


def _parse_params(pairs: Sequence[str]) -> dict[str, float]:
    params = {}
    for pair in pairs or ():
        if "=" not in pair:
            raise ConfigurationError(f"--param expects key=value, got {pair!r}", key="param")
        k, v = pair.split("=", 1)
        try:
            params[k.strip()] = float(v)
        except ValueError:
            raise ConfigurationError(f"--param {k}: cannot parse {v!r}", key=k) from None
    return params


def _cmd_simulate(args) -> _Outputs:
    model = get_model(args.model)
    params = _parse_params(args.param)
    allowed = PARAM_KEYS[model.name]
    unknown = set(params) - set(allowed)
    if unknown:
        raise ConfigurationError(f"unknown parameters {sorted(unknown)} for {model.name}; expected {allowed}")
    if args.seed is None:
        raise ConfigurationError("simulate needs --seed", key="seed")
    true_params = Ar1Params(**params) if model.name == "ar1" else Garch11Params(**params)
    series = model.simulate(true_params, args.length, args.seed, innovation=args.innovation, df=args.df)
    staged = _Outputs(seed=args.seed, echo={"model": model.name, "params": params, "length": args.length,
                                           "innovation": args.innovation, "df": args.df})
    staged.texts["series.csv"] = _series_csv_text(series)

    def render(out: Path) -> list[Path]:
        from .plotting import plot_series

        return [plot_series(series, out / "series.png")]

    staged.figures.append(render)
    return staged


def _series_csv_text(series: TimeSeries) -> str:
    t = range(series.origin, series.origin + len(series))
    return _csv_text([(i, float(v)) for i, v in zip(t, series.values)], ("t", "x"))


def _cmd_estimate(args) -> _Outputs:
    series = read_series_csv(args.series)
    est = fit(args.model, series)
    result = {
        "model": est.model,
        "theta_hat": est.theta_hat.tolist(),
        "cov_hat": est.cov_hat.tolist(),
        "standard_errors": est.standard_errors().tolist(),
        "n_used": est.n_used,
        "diagnostics": est.diagnostics,
    }
    echo = {"model": args.model, "series": str(args.series)}
    staged = _Outputs(echo=echo)
    staged.texts["estimate.json"] = dumps_json(
        {"schema_version": SCHEMA_VERSION, "kind": "estimate", "config": echo, "results": result, "seed": None}
    )
    return staged


def _cmd_interval(args) -> _Outputs:
    series = read_series_csv(args.series)
    trunc = TruncationConfig(None, args.start_values, args.constants)
    kw = dict(gamma1=args.gamma1, gamma2=args.gamma2, trunc=trunc, ghat=args.ghat, n_boot=args.n_boot,
              seed=args.seed if args.seed is not None else 0)
    gamma = None if args.gamma1 is not None or args.gamma2 is not None else args.gamma
    if args.variant == "STA":
        iv = build_interval_sta(series, args.model, gamma, **kw)
    elif args.variant == "SPL":
        iv = build_interval_spl(series, None, args.model, gamma, **kw)
    else:
        if args.estimation_series is None:
            raise ConfigurationError("the TwoIP variant needs --estimation-series", key="estimation_series")
        iv = build_interval_2ip(series, read_series_csv(args.estimation_series), args.model, gamma, **kw)
    echo = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items() if k not in ("func", "out")}
    staged = _Outputs(seed=kw["seed"], echo=echo)
    staged.texts["interval.json"] = dumps_json(
        {"schema_version": SCHEMA_VERSION, "kind": "interval", "config": echo, "results": iv.to_dict(),
         "seed": kw["seed"]}
    )
    return staged


def _read_values(path: Path) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ConfigurationError(f"{path}: expected a header and at least one data row")
    try:
        return np.array([float(r[-1]) for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ConfigurationError(f"{path}: {exc}") from None


def _cmd_metrics(args) -> _Outputs:
    a, b = _read_values(args.a), _read_values(args.b)
    F, G = from_samples(a), from_samples(b)
    result = {
        "d_kolmogorov": d_kolmogorov(F, G),
        "d_levy": d_levy(F, G),
        "d_bounded_lipschitz": d_bounded_lipschitz(F, G),
        "n_a": int(a.size),
        "n_b": int(b.size),
    }
    echo = {"a": str(args.a), "b": str(args.b)}
    staged = _Outputs(echo=echo)
    staged.texts["metrics.json"] = dumps_json(
        {"schema_version": SCHEMA_VERSION, "kind": "metrics", "config": echo, "results": result, "seed": None}
    )
    return staged


# --------------------------------------------------------------------------
# Entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="condint",
        description="Conditional confidence intervals for time-series prediction functions.",
        epilog=_config_help(),
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--version", action="version", version=f"condint {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    common = _Parser(add_help=False)
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory [default results]")
    common.add_argument("--seed", type=int, default=None, help="override the master seed")
    common.add_argument("--no-plots", action="store_true", help="skip PNG figures; CSV and JSON are still written")

    for kind in EXPERIMENT_KINDS:
        p = sub.add_parser(kind, parents=[common], help=f"run the [{kind}] sections of a config",
                           epilog=_config_help(), formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", type=Path, required=True, help="experiment config file")
        p.set_defaults(func=lambda a, k=kind: _experiments(a, k))

    p = sub.add_parser("simulate", parents=[common], help="simulate a path and write series.csv")
    p.add_argument("--model", required=True, choices=sorted(PARAM_KEYS))
    p.add_argument("--param", action="append", metavar="KEY=VALUE", help="model parameter, repeatable")
    p.add_argument("--length", type=int, required=True)
    p.add_argument("--innovation", default="gaussian", choices=("gaussian", "student-t"))
    p.add_argument("--df", type=float, default=None)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("estimate", parents=[common], help="estimate model parameters from a t,x CSV")
    p.add_argument("--model", required=True, choices=sorted(PARAM_KEYS))
    p.add_argument("--series", type=Path, required=True)
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("interval", parents=[common], help="build a conditional interval from a t,x CSV")
    p.add_argument("--model", required=True, choices=sorted(PARAM_KEYS))
    p.add_argument("--series", type=Path, required=True, help="conditioning path")
    p.add_argument("--variant", default="SPL", choices=("STA", "SPL", "TwoIP"), help="[default SPL]")
    p.add_argument("--estimation-series", type=Path, default=None, help="independent path for TwoIP")
    p.add_argument("--gamma", type=float, default=0.1, help="[default 0.1]")
    p.add_argument("--gamma1", type=float, default=None)
    p.add_argument("--gamma2", type=float, default=None)
    p.add_argument("--ghat", default="normal", choices=("normal", "bootstrap"), help="[default normal]")
    p.add_argument("--n-boot", type=int, default=999, help="[default 999]")
    p.add_argument("--start-values", default="unconditional", choices=("zeros", "unconditional"))
    p.add_argument("--constants", default="unconditional", choices=("zeros", "unconditional"))
    p.set_defaults(func=_cmd_interval)

    p = sub.add_parser("metrics", parents=[common], help="distances between two empirical samples")
    p.add_argument("--a", type=Path, required=True, help="CSV whose last column holds the first sample")
    p.add_argument("--b", type=Path, required=True, help="CSV whose last column holds the second sample")
    p.set_defaults(func=_cmd_metrics)
    return parser


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (FailureCapExceededError, EstimationFailedError, SingularInformationError)):
        return EXIT_ESTIMATION
    if isinstance(exc, OSError):
        return EXIT_IO
    return EXIT_CONFIG


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    out: Path = args.out
    try:
        _prepare_out(out)
    except OSError as exc:
        print(f"condint: cannot write to {out}: {exc}", file=sys.stderr)
        return EXIT_IO
    staged = None
    try:
        staged = args.func(args)
        files = _write_outputs(out, staged, plots=not args.no_plots)
    except (CondIntError, ValueError, OSError) as exc:
        code = _exit_code(exc)
        print(f"condint: {exc}", file=sys.stderr)
        try:
            (out / "manifest.json").write_text(
                dumps_json(_manifest(args, staged, [], started, "error", code, str(exc))), encoding="utf-8"
            )
        except OSError:
            pass
        return code
    try:
        (out / "manifest.json").write_text(
            dumps_json(_manifest(args, staged, files, started, "ok", EXIT_OK, None)), encoding="utf-8"
        )
    except OSError as exc:
        print(f"condint: cannot write manifest: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
