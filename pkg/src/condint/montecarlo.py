"""Monte Carlo experiments for conditional coverage, merging and equivalence.

Every replication draws from its own counter-based stream keyed by
``(master_seed, experiment tag, rep)``, so a report is a pure function of
the configuration whatever the degree of parallelism.
"""

from __future__ import annotations

import hashlib
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Sequence

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import CondIntError, ConfigurationError, FailureCapExceededError, PreconditionError
from .estimation import EstimationResult, QmleOptions, fit
from .intervals import (
    SplitPlan,
    build_interval_2ip,
    build_interval_spl,
    default_split_plan,
    delta_variance,
    make_split_plan,
)
from .metrics import d_bounded_lipschitz, d_kolmogorov_continuous, from_samples
from .models import (
    Ar1Params,
    Garch11Params,
    TimeSeries,
    TruncationConfig,
    get_model,
    truncation_gap,
)
from .rng import substream_seed

__all__ = [
    "ExperimentConfig",
    "CoverageReport",
    "MergingReport",
    "EquivalenceReport",
    "NegligibilityReport",
    "run_coverage_2ip",
    "run_coverage_spl",
    "run_merging",
    "run_equivalence",
    "run_negligibility",
    "run_experiment",
    "default_workers",
]

EXPERIMENT_KINDS = ("coverage", "merging", "equivalence", "negligibility")
FAILURE_CAP = 0.01
MIN_REPS = 100


@dataclass(frozen=True)
class ExperimentConfig:
    kind: str
    model: str
    params: dict[str, float]
    T: tuple[int, ...]
    reps: int
    gamma: float
    seed: int
    gamma1: float | None = None
    gamma2: float | None = None
    variants: tuple[str, ...] = ("TwoIP", "SPL")
    split_gap: int | None = None
    split_horizon: int | None = None
    l_t: str | float = "log"
    innovation: str = "gaussian"
    df: float | None = None
    start_values: str = "unconditional"
    constants: str = "unconditional"
    offsets: tuple[int, ...] = (5, 10, 20, 30, 40, 50, 60, 70, 80)
    dump_samples: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "T", tuple(int(t) for t in np.atleast_1d(self.T)))
        object.__setattr__(self, "variants", tuple(self.variants))
        object.__setattr__(self, "offsets", tuple(int(o) for o in self.offsets))
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})
        if self.kind not in EXPERIMENT_KINDS:
            raise ConfigurationError(f"unknown experiment kind {self.kind!r}", key="kind")
        get_model(self.model)
        if self.reps < MIN_REPS:
            raise PreconditionError(f"need at least {MIN_REPS} replications, got {self.reps}")
        if not self.T or any(b <= a for a, b in zip(self.T, self.T[1:])):
            raise ConfigurationError("T grid must be nonempty and strictly increasing", key="T")
        g1, g2 = self.gammas
        if not (0 <= g1 < 1 and 0 <= g2 < 1 and 0 < g1 + g2 < 1):
            raise ConfigurationError(f"invalid gammas {g1}, {g2}", key="gamma")
        for v in self.variants:
            if v not in ("TwoIP", "SPL", "STA"):
                raise ConfigurationError(f"unknown variant {v!r}", key="variants")
        self.true_params()

    @property
    def gammas(self) -> tuple[float, float]:
        if self.gamma1 is None and self.gamma2 is None:
            return self.gamma / 2.0, self.gamma / 2.0
        return float(self.gamma1), float(self.gamma2)

    def true_params(self):
        name = get_model(self.model).name
        try:
            if name == "ar1":
                return Ar1Params(self.params["beta"], self.params.get("noise_sd", 1.0))
            return Garch11Params(self.params["omega"], self.params["alpha"], self.params["beta"])
        except KeyError as exc:
            raise ConfigurationError(f"missing model parameter {exc.args[0]!r}", key=exc.args[0]) from None

    def truncation(self) -> TruncationConfig:
        return TruncationConfig(None, self.start_values, self.constants)

    def split_plan(self, T: int) -> SplitPlan:
        if self.split_gap is None and self.split_horizon is None:
            return default_split_plan(T, self.l_t)
        base = default_split_plan(T, self.l_t)
        gap = self.split_gap if self.split_gap is not None else base.gap
        horizon = self.split_horizon if self.split_horizon is not None else base.T - base.t_p
        return make_split_plan(T, gap, horizon, base.l_t)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["T"] = list(self.T)
        d["variants"] = list(self.variants)
        d["offsets"] = list(self.offsets)
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> ExperimentConfig:
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


def default_workers() -> int:
    env = os.environ.get("CONDINT_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigurationError(f"CONDINT_THREADS must be an integer, got {env!r}") from None
        if n < 1:
            raise ConfigurationError("CONDINT_THREADS must be positive")
        return n
    return os.cpu_count() or 1


# --------------------------------------------------------------------------
# Replication plumbing


def _simulate(cfg: ExperimentConfig, length: int, seed: int) -> TimeSeries:
    return get_model(cfg.model).simulate(cfg.true_params(), length, seed, innovation=cfg.innovation, df=cfg.df)


def _run_chunk(task: Callable, cfg: ExperimentConfig, shared: Any, start: int, stop: int) -> list:
    out = []
    for b in range(start, stop):
        try:
            out.append(task(cfg, shared, b))
        except CondIntError as exc:
            out.append(("failed", type(exc).__name__))
    return out


def _map_reps(task: Callable, cfg: ExperimentConfig, shared: Any, reps: int, workers: int | None) -> list:
    workers = default_workers() if workers is None else int(workers)
    if workers <= 1:
        return _run_chunk(task, cfg, shared, 0, reps)
    n_chunks = min(reps, workers * 4)
    bounds = np.linspace(0, reps, n_chunks + 1).astype(int)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [
            pool.submit(_run_chunk, task, cfg, shared, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])
        ]
        results: list = []
        for fut in futures:
            results.extend(fut.result())
    return results


def _is_failure(r) -> bool:
    return isinstance(r, tuple) and len(r) == 2 and r[0] == "failed"


def _check_failures(results: list, reps: int, what: str) -> int:
    failures = sum(1 for r in results if _is_failure(r))
    if failures >= FAILURE_CAP * reps and failures > 0:
        raise FailureCapExceededError(
            f"{what}: {failures} of {reps} replications failed to estimate (cap {FAILURE_CAP:.0%})",
            failures,
            reps,
        )
    return failures


def _fingerprint(values: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(values, dtype="<f8").tobytes()).hexdigest()[:16]


def _quantiles(values: np.ndarray) -> dict[str, float]:
    v = np.asarray(values, dtype=float)
    return {
        "median": float(np.median(v)),
        "p10": float(np.quantile(v, 0.1)),
        "p90": float(np.quantile(v, 0.9)),
        "max": float(np.max(v)),
    }


# --------------------------------------------------------------------------
# Reports


@dataclass(frozen=True)
class CoverageReport:
    variant: str
    T: int
    R: int
    hit_count: int
    miss_count: int
    failure_count: int
    coverage: float
    binomial_se: float
    target: float
    target_value: float
    path_fingerprint: str
    x_T: float
    split: dict[str, Any] | None = None
    samples: tuple[float, ...] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        if self.hit_count + self.miss_count + self.failure_count != self.R:
            raise ValueError("hit, miss and failure counts must add up to R")
        if not 0.0 <= self.coverage <= 1.0:
            raise ValueError("coverage outside [0, 1]")

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d.pop("samples")
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> CoverageReport:
        names = {f.name for f in fields(cls)} - {"samples"}
        return cls(**{k: v for k, v in d.items() if k in names})


@dataclass(frozen=True)
class MergingReport:
    model: str
    T_grid: tuple[int, ...]
    rows: tuple[dict[str, Any], ...]
    samples: dict[int, dict[str, tuple[float, ...]]] | None = field(default=None, compare=False, repr=False)

    def __post_init__(self) -> None:
        for row in self.rows:
            if not 0.0 <= row["d_bl"] <= 2.0:
                raise ValueError("bounded-Lipschitz distance outside [0, 2]")
            for key in ("d_k_2ip", "d_k_spl"):
                if not 0.0 <= row[key] <= 1.0:
                    raise ValueError("Kolmogorov distance outside [0, 1]")

    def column(self, key: str) -> list[float]:
        return [row[key] for row in self.rows]

    def to_dict(self) -> dict[str, Any]:
        return {"model": self.model, "T_grid": list(self.T_grid), "rows": [dict(r) for r in self.rows]}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> MergingReport:
        return cls(d["model"], tuple(d["T_grid"]), tuple(dict(r) for r in d["rows"]))


@dataclass(frozen=True)
class EquivalenceReport:
    model: str
    T_grid: tuple[int, ...]
    u_lower: float
    u_upper: float
    rows: tuple[dict[str, Any], ...]

    def __post_init__(self) -> None:
        for row in self.rows:
            for key, value in row.items():
                if key != "T" and isinstance(value, float) and value < 0:
                    raise ValueError(f"negative entry {key}={value}")

    def column(self, key: str) -> list[float]:
        return [row[key] for row in self.rows]

    def to_dict(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "T_grid": list(self.T_grid),
            "u_lower": self.u_lower,
            "u_upper": self.u_upper,
            "rows": [dict(r) for r in self.rows],
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> EquivalenceReport:
        return cls(d["model"], tuple(d["T_grid"]), d["u_lower"], d["u_upper"], tuple(dict(r) for r in d["rows"]))


@dataclass(frozen=True)
class NegligibilityReport:
    T: int
    R: int
    log_beta: float
    slope: float
    default_t1: int
    default_scaled_gap: dict[str, float]
    rows: tuple[dict[str, Any], ...]

    def column(self, key: str) -> list[float]:
        return [row[key] for row in self.rows]

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["rows"] = [dict(r) for r in self.rows]
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> NegligibilityReport:
        return cls(
            d["T"], d["R"], d["log_beta"], d["slope"], d["default_t1"],
            dict(d["default_scaled_gap"]), tuple(dict(r) for r in d["rows"]),
        )


# --------------------------------------------------------------------------
# Coverage


def _single_T(cfg: ExperimentConfig, T: int | None) -> int:
    if T is not None:
        return int(T)
    if len(cfg.T) != 1:
        raise ConfigurationError("coverage runs take a single T; pass T explicitly for a grid")
    return cfg.T[0]


def _coverage_2ip_rep(cfg: ExperimentConfig, shared, b: int):
    x, target, T = shared
    y = _simulate(cfg, T, substream_seed(cfg.seed, "coverage-2ip", b))
    g1, g2 = cfg.gammas
    iv = build_interval_2ip(x, y, cfg.model, None, gamma1=g1, gamma2=g2, trunc=cfg.truncation())
    return iv.contains(target), iv.center


def _coverage_spl_rep(cfg: ExperimentConfig, shared, b: int):
    x, target, plan = shared
    block = _simulate(cfg, plan.t_e, substream_seed(cfg.seed, "coverage-spl", b))
    est = fit(cfg.model, block)
    g1, g2 = cfg.gammas
    iv = build_interval_spl(x, plan, cfg.model, None, gamma1=g1, gamma2=g2, trunc=cfg.truncation(), estimate=est)
    return iv.contains(target), iv.center


def _coverage_report(cfg, variant, T, results, target_value, x, split) -> CoverageReport:
    failures = _check_failures(results, cfg.reps, f"{variant} coverage at T={T}")
    ok = [r for r in results if not _is_failure(r)]
    hits = sum(1 for r in ok if r[0])
    n = len(ok)
    cov = hits / n
    return CoverageReport(
        variant=variant,
        T=T,
        R=cfg.reps,
        hit_count=hits,
        miss_count=n - hits,
        failure_count=failures,
        coverage=cov,
        binomial_se=math.sqrt(cov * (1.0 - cov) / n),
        target=1.0 - sum(cfg.gammas),
        target_value=float(target_value),
        path_fingerprint=_fingerprint(x.values),
        x_T=x.terminal,
        split=split,
        samples=tuple(float(r[1]) for r in ok) if cfg.dump_samples else None,
    )


def run_coverage_2ip(cfg: ExperimentConfig, T: int | None = None, workers: int | None = None) -> CoverageReport:
    """Conditional coverage of the two-independent-processes interval.

    One conditioning path ``x`` is drawn from ``cfg.seed``; each replication
    estimates on a fresh independent path and checks whether the interval
    covers the prediction function at the true parameter on ``x``.
    """
    T = _single_T(cfg, T)
    model = get_model(cfg.model)
    x = _simulate(cfg, T, cfg.seed)
    target = model.predict(cfg.true_params().as_vector(), x, cfg.truncation()).psi
    results = _map_reps(_coverage_2ip_rep, cfg, (x, target, T), cfg.reps, workers)
    return _coverage_report(cfg, "TwoIP", T, results, target, x, None)


def run_coverage_spl(cfg: ExperimentConfig, T: int | None = None, workers: int | None = None) -> CoverageReport:
    """Conditional coverage of the sample-split interval.

    The conditioning block ``x_{t_p}..x_T`` of one path is held fixed.  Each
    replication draws a fresh stationary estimation block of length ``t_e``,
    independent of the conditioning block; this is the weak-dependence limit
    and its quality is governed by the recorded gap.
    """
    T = _single_T(cfg, T)
    plan = cfg.split_plan(T)
    model = get_model(cfg.model)
    x = _simulate(cfg, T, cfg.seed)
    trunc = cfg.truncation().with_t1(x.origin + plan.t_p - 1)
    target = model.predict(cfg.true_params().as_vector(), x, trunc).psi
    results = _map_reps(_coverage_spl_rep, cfg, (x, target, plan), cfg.reps, workers)
    split = {"t_e": plan.t_e, "t_p": plan.t_p, "gap": plan.gap, "l_t": plan.l_t}
    return _coverage_report(cfg, "SPL", T, results, target, x, split)


# --------------------------------------------------------------------------
# Merging


def _merging_rep(cfg: ExperimentConfig, shared, b: int):
    x, plan, psi_full, psi_block = shared
    T = len(x)
    model = get_model(cfg.model)
    trunc = cfg.truncation()
    # the SPL estimation block is the prefix of the 2IP estimation path
    y = _simulate(cfg, T, substream_seed(cfg.seed, "merging", b))
    est_y = fit(cfg.model, y)
    pred_2ip = model.predict(est_y.theta_hat, x, trunc)
    est_b = fit(cfg.model, y.head(plan.t_e))
    pred_spl = model.predict_window(est_b.theta_hat, x.values[plan.t_p - 1 :], T, trunc)
    rate = math.sqrt(T)
    return (
        rate * (pred_2ip.psi - psi_full),
        rate * (pred_spl.psi - psi_block),
        delta_variance(pred_2ip, est_y),
        delta_variance(pred_spl, est_b),
    )


def _plug_in_kolmogorov(errors: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """``d_K`` between the empirical error law and each replication's plug-in normal."""
    F = from_samples(errors)
    z = F.support
    left = np.concatenate(([0.0], F.cum[:-1]))
    out = np.empty(variances.size)
    for i, v in enumerate(variances):
        g = ndtr(z / math.sqrt(v))
        out[i] = max(np.max(np.abs(F.cum - g)), np.max(np.abs(left - g)))
    return out


def run_merging(cfg: ExperimentConfig, workers: int | None = None) -> MergingReport:
    """Distance between the 2IP and SPL conditional error laws along a T grid.

    All grid points condition on the terminal segment of one path of length
    ``max(T)``, so every T shares the same final observations.  Per T the
    report holds the bounded-Lipschitz distance between the two empirical
    error laws and, for each arm, the median and 90th percentile over
    replications of the Kolmogorov distance to the replication's plug-in
    normal law.
    """
    if len(cfg.T) < 3:
        raise PreconditionError("merging needs a T grid of at least three points")
    model = get_model(cfg.model)
    theta0 = cfg.true_params().as_vector()
    master = _simulate(cfg, cfg.T[-1], cfg.seed)
    rows, samples = [], {}
    for T in cfg.T:
        x = master.tail(T)
        x = TimeSeries(x.values)
        plan = cfg.split_plan(T)
        trunc = cfg.truncation()
        psi_full = model.predict(theta0, x, trunc).psi
        psi_block = model.predict_window(theta0, x.values[plan.t_p - 1 :], T, trunc).psi
        results = _map_reps(_merging_rep, cfg, (x, plan, psi_full, psi_block), cfg.reps, workers)
        failures = _check_failures(results, cfg.reps, f"merging at T={T}")
        ok = np.array([r for r in results if not _is_failure(r)], dtype=float)
        e2, es, v2, vs = ok.T
        dk2 = _plug_in_kolmogorov(e2, v2)
        dks = _plug_in_kolmogorov(es, vs)
        rows.append(
            {
                "T": T,
                "d_bl": d_bounded_lipschitz(from_samples(e2), from_samples(es)),
                "d_k_2ip": float(np.median(dk2)),
                "d_k_2ip_p90": float(np.quantile(dk2, 0.9)),
                "d_k_spl": float(np.median(dks)),
                "d_k_spl_p90": float(np.quantile(dks, 0.9)),
                "n_2ip": int(e2.size),
                "n_spl": int(es.size),
                "failures": failures,
                "t_e": plan.t_e,
                "t_p": plan.t_p,
                "gap": plan.gap,
                "x_T": x.terminal,
            }
        )
        if cfg.dump_samples:
            samples[T] = {"TwoIP": tuple(e2.tolist()), "SPL": tuple(es.tolist())}
    return MergingReport(model.name, cfg.T, tuple(rows), samples if cfg.dump_samples else None)


# --------------------------------------------------------------------------
# Equivalence of STA and SPL


def _equivalence_rep(cfg: ExperimentConfig, shared, b: int):
    T, plan = shared
    model = get_model(cfg.model)
    trunc = cfg.truncation()
    x = _simulate(cfg, T, substream_seed(cfg.seed, "equivalence", b))
    est_full = fit(cfg.model, x)
    sta = model.predict(est_full.theta_hat, x, trunc)
    est_block = fit(cfg.model, x.head(plan.t_e))
    spl = model.predict_window(est_block.theta_hat, x.values[plan.t_p - 1 :], T, trunc)
    return (
        sta.psi,
        spl.psi,
        delta_variance(sta, est_full),
        delta_variance(spl, est_block),
        x.terminal,
    )


def run_equivalence(cfg: ExperimentConfig, workers: int | None = None) -> EquivalenceReport:
    """Location and quantile gaps between the STA and SPL intervals on the same paths."""
    if len(cfg.T) < 3:
        raise PreconditionError("equivalence needs a T grid of at least three points")
    g1, g2 = cfg.gammas
    u_lo, u_hi = g1, 1.0 - g2
    z_lo = float(ndtri(u_lo)) if u_lo > 0 else -math.inf
    z_hi = float(ndtri(u_hi))
    rows = []
    for T in cfg.T:
        plan = cfg.split_plan(T)
        results = _map_reps(_equivalence_rep, cfg, (T, plan), cfg.reps, workers)
        failures = _check_failures(results, cfg.reps, f"equivalence at T={T}")
        ok = np.array([r for r in results if not _is_failure(r)], dtype=float)
        c_sta, c_spl, v_sta, v_spl, x_last = ok.T
        center_gap = np.abs(c_sta - c_spl)
        sd_gap = np.abs(np.sqrt(v_sta) - np.sqrt(v_spl))
        q_hi = sd_gap * abs(z_hi)
        q_lo = sd_gap * abs(z_lo)
        rows.append(
            {
                "T": T,
                "median_center_gap": float(np.median(center_gap)),
                "p90_center_gap": float(np.quantile(center_gap, 0.9)),
                "median_quantile_gap_lower": float(np.median(q_lo)),
                "p90_quantile_gap_lower": float(np.quantile(q_lo, 0.9)),
                "median_quantile_gap_upper": float(np.median(q_hi)),
                "p90_quantile_gap_upper": float(np.quantile(q_hi, 0.9)),
                "median_scaled_center_gap": float(np.median(center_gap / np.maximum(np.abs(x_last), 1e-300))),
                "n": int(ok.shape[0]),
                "failures": failures,
                "t_e": plan.t_e,
                "t_p": plan.t_p,
            }
        )
    return EquivalenceReport(get_model(cfg.model).name, cfg.T, u_lo, u_hi, tuple(rows))


# --------------------------------------------------------------------------
# Negligibility of the initial condition


def _negligibility_rep(cfg: ExperimentConfig, shared, b: int):
    T, t1_grid = shared
    params = cfg.true_params()
    x = _simulate(cfg, T, substream_seed(cfg.seed, "negligibility", b))
    trunc = cfg.truncation()
    return tuple(truncation_gap(params, x, t1, trunc) for t1 in t1_grid)


def run_negligibility(cfg: ExperimentConfig, T: int | None = None, workers: int | None = None) -> NegligibilityReport:
    """Quantiles of ``sqrt(T) * truncation_gap`` as the conditioning block grows.

    ``slope`` is the least-squares slope of the log median gap against
    ``T - t1``; geometric forgetting predicts ``log(beta)``.
    """
    params = cfg.true_params()
    if not isinstance(params, Garch11Params):
        raise ConfigurationError("negligibility experiments need a GARCH(1,1) model", key="model")
    T = cfg.T[-1] if T is None else int(T)
    plan = cfg.split_plan(T)
    offsets = [d for d in cfg.offsets if 0 <= d <= T - 1]
    t1_grid = [T - d for d in offsets] + [plan.t_p, 1]
    results = _map_reps(_negligibility_rep, cfg, (T, t1_grid), cfg.reps, workers)
    gaps = math.sqrt(T) * np.array(results, dtype=float)
    rows = []
    for j, d in enumerate(offsets):
        rows.append({"offset": d, "t1": T - d, **_quantiles(gaps[:, j])})
    rows.append({"offset": T - 1, "t1": 1, **_quantiles(gaps[:, -1])})
    med = np.array([r["median"] for r in rows[:-1]])
    off = np.array(offsets, dtype=float)
    keep = med > 0
    slope = float(np.polyfit(off[keep], np.log(med[keep]), 1)[0]) if keep.sum() >= 2 else float("nan")
    return NegligibilityReport(
        T=T,
        R=cfg.reps,
        log_beta=math.log(params.beta) if params.beta > 0 else float("-inf"),
        slope=slope,
        default_t1=plan.t_p,
        default_scaled_gap=_quantiles(gaps[:, len(offsets)]),
        rows=tuple(rows),
    )


def run_experiment(cfg: ExperimentConfig, workers: int | None = None) -> list:
    """Dispatch a configuration to its runner(s); coverage yields one report per (variant, T)."""
    if cfg.kind == "coverage":
        out = []
        for T in cfg.T:
            for variant in cfg.variants:
                if variant == "TwoIP":
                    out.append(run_coverage_2ip(cfg, T, workers))
                elif variant == "SPL":
                    out.append(run_coverage_spl(cfg, T, workers))
                else:
                    raise ConfigurationError("coverage is defined for the TwoIP and SPL variants", key="variants")
        return out
    if cfg.kind == "merging":
        return [run_merging(cfg, workers)]
    if cfg.kind == "equivalence":
        return [run_equivalence(cfg, workers)]
    return [run_negligibility(cfg, workers=workers)]
