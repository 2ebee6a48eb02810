"""Conditional confidence intervals for prediction functions.

Three estimators of the prediction function are supported:

* ``TwoIP``: parameters estimated on an independent copy ``y`` of the
  process, prediction evaluated on the observed path ``x``;
* ``SPL``: parameters estimated on ``x_1..x_{T_E}``, prediction evaluated on
  the conditioning block ``x_{T_P}..x_T`` with ``T_E < T_P``;
* ``STA``: the usual practice of estimating and conditioning on the same
  path.

Intervals take the form ``[center - Q(1 - g2)/m_T, center - Q(g1)/m_T]``
where ``Q`` is the quantile function of a plug-in estimate of the law of
``m_T (psi_hat - psi)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np
from scipy.special import ndtri

from .errors import (
    ContractError,
    InsufficientDrawsError,
    InsufficientResolutionError,
    PlanInfeasibleError,
    PreconditionError,
)
from .estimation import (
    CdfEstimate,
    EstimationResult,
    QmleOptions,
    fit,
    ghat_bootstrap_ar1,
    ghat_parametric_normal,
)
from .metrics import StepCdf, from_samples, generalized_inverse
from .models import PredictionOutput, TimeSeries, TruncationConfig, get_model
from .rng import generator

__all__ = [
    "SplitPlan",
    "IntervalResult",
    "NormalLaw",
    "default_split_plan",
    "make_split_plan",
    "delta_variance",
    "plug_in_law",
    "normal_interval",
    "quantile_interval",
    "build_interval_2ip",
    "build_interval_spl",
    "build_interval_sta",
    "gaussian_innovation_cdf",
    "prediction_interval_convolution",
    "VARIANTS",
]

VARIANTS = ("TwoIP", "SPL", "STA")
VARIANCE_FLOOR = 1e-12
MIN_DRAWS = 100


@dataclass(frozen=True)
class SplitPlan:
    """Estimation block ``1..t_e`` and conditioning block ``t_p..T``."""

    T: int
    t_e: int
    t_p: int
    l_t: float

    def __post_init__(self) -> None:
        if not 1 < self.t_e < self.t_p <= self.T:
            raise ContractError(f"split plan needs 1 < t_e < t_p <= T, got {self}")
        if self.T - self.t_p < 1:
            raise ContractError(f"conditioning block too short in {self}")

    @property
    def gap(self) -> int:
        return self.t_p - self.t_e


def make_split_plan(T: int, gap: int, horizon: int | None = None, l_t: float | None = None) -> SplitPlan:
    """Plan with ``t_p = T - horizon`` and ``t_e = t_p - gap`` (``horizon`` defaults to ``gap``)."""
    horizon = gap if horizon is None else horizon
    t_p = T - horizon
    t_e = t_p - gap
    if t_e <= 1:
        raise PlanInfeasibleError(f"T={T} too short for gap={gap}, horizon={horizon}")
    return SplitPlan(T, t_e, t_p, math.log(T) if l_t is None else float(l_t))


def default_split_plan(T: int, l_t_rule: str | float = "log") -> SplitPlan:
    """Default split with ``g = floor(l_T * ln T)``, ``t_p = T - g``, ``t_e = T - 2g``.

    With ``l_T = ln T`` the conditioning block grows like ``(ln T)**2`` while
    ``t_e / T -> 1``.  A numeric ``l_t_rule`` fixes ``l_T`` directly.
    """
    if T < 200:
        raise PlanInfeasibleError(f"default split needs T >= 200, got {T}")
    l_t = math.log(T) if l_t_rule == "log" else float(l_t_rule)
    if not l_t > 0:
        raise PlanInfeasibleError(f"l_T must be positive, got {l_t}")
    g = int(math.floor(l_t * math.log(T)))
    if g < 1:
        raise PlanInfeasibleError(f"split gap rounds to zero for T={T}, l_T={l_t}")
    return make_split_plan(T, g, g, l_t)


@dataclass(frozen=True)
class NormalLaw:
    """Centered normal law with the given variance."""

    variance: float


@dataclass(frozen=True, eq=False)
class IntervalResult:
    lower: float
    upper: float
    center: float
    gamma1: float
    gamma2: float
    variant: str
    rate: float
    variance: float | None = None
    quantiles: tuple[float, float] | None = None
    details: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.variant not in VARIANTS:
            raise ContractError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if not self.lower <= self.upper:
            raise ContractError(f"interval endpoints out of order: [{self.lower}, {self.upper}]")
        if self.variance is not None and self.variance < 0:
            raise ContractError("variance must be nonnegative")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def to_dict(self) -> dict[str, Any]:
        return {
            "lower": self.lower,
            "upper": self.upper,
            "center": self.center,
            "gamma1": self.gamma1,
            "gamma2": self.gamma2,
            "variant": self.variant,
            "rate": self.rate,
            "variance": self.variance,
            "quantiles": None if self.quantiles is None else list(self.quantiles),
            "details": self.details,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> IntervalResult:
        q = d.get("quantiles")
        return cls(
            d["lower"], d["upper"], d["center"], d["gamma1"], d["gamma2"], d["variant"],
            d["rate"], d.get("variance"), None if q is None else tuple(q), d.get("details", {}),
        )


def _check_gammas(gamma1: float, gamma2: float) -> None:
    if not (0.0 <= gamma1 < 1.0 and 0.0 <= gamma2 < 1.0 and 0.0 < gamma1 + gamma2 < 1.0):
        raise PreconditionError(f"need gamma1, gamma2 in [0, 1) with sum in (0, 1); got {gamma1}, {gamma2}")


def _split_gamma(gamma: float | None, gamma1: float | None, gamma2: float | None) -> tuple[float, float]:
    if gamma1 is None and gamma2 is None:
        if gamma is None:
            raise PreconditionError("give gamma or both gamma1 and gamma2")
        gamma1 = gamma2 = gamma / 2.0
    elif gamma1 is None or gamma2 is None:
        raise PreconditionError("gamma1 and gamma2 must be given together")
    _check_gammas(gamma1, gamma2)
    return float(gamma1), float(gamma2)


def delta_variance(pred: PredictionOutput, est: EstimationResult) -> float:
    """``grad' cov grad`` with a floor of ``1e-12``."""
    g = np.asarray(pred.gradient, dtype=float)
    if g.shape != (est.cov_hat.shape[0],):
        raise ContractError(f"gradient of length {g.size} does not match a {est.cov_hat.shape} covariance")
    return max(float(g @ est.cov_hat @ g), VARIANCE_FLOOR)


def plug_in_law(gradient: np.ndarray, ghat: CdfEstimate) -> NormalLaw | StepCdf:
    """Law of ``w' Z`` for ``Z`` distributed as ``ghat`` and weights ``w = gradient``."""
    w = np.asarray(gradient, dtype=float)
    if w.size != ghat.dim:
        raise ContractError(f"gradient of length {w.size} vs {ghat.dim}-dimensional law")
    if ghat.kind == "normal":
        return NormalLaw(max(float(w @ ghat.cov @ w), VARIANCE_FLOOR))
    if ghat.draws.shape[0] < MIN_DRAWS:
        raise InsufficientDrawsError(f"need at least {MIN_DRAWS} draws, got {ghat.draws.shape[0]}")
    return from_samples(ghat.draws @ w)


def normal_interval(
    center: float,
    variance: float,
    rate: float,
    gamma1: float,
    gamma2: float,
    variant: str = "STA",
    details: dict[str, Any] | None = None,
) -> IntervalResult:
    """``[c - sqrt(v) z(1-g2)/m, c - sqrt(v) z(g1)/m]`` with ``z`` the normal quantile."""
    _check_gammas(gamma1, gamma2)
    v = max(float(variance), VARIANCE_FLOOR)
    sd = math.sqrt(v)
    lower = center - sd * float(ndtri(1.0 - gamma2)) / rate
    upper = center - sd * float(ndtri(gamma1)) / rate
    return IntervalResult(lower, upper, float(center), gamma1, gamma2, variant, float(rate), v, None, details or {})


def quantile_interval(
    center: float,
    fhat: NormalLaw | StepCdf,
    rate: float,
    gamma1: float,
    gamma2: float,
    variant: str = "STA",
    details: dict[str, Any] | None = None,
) -> IntervalResult:
    """Interval from the generalized inverse of a plug-in law ``fhat``."""
    if isinstance(fhat, NormalLaw):
        return normal_interval(center, fhat.variance, rate, gamma1, gamma2, variant, details)
    _check_gammas(gamma1, gamma2)
    q_hi = generalized_inverse(fhat, 1.0 - gamma2)
    q_lo = generalized_inverse(fhat, gamma1) if gamma1 > 0 else -math.inf
    return IntervalResult(
        center - q_hi / rate, center - q_lo / rate, float(center), gamma1, gamma2, variant,
        float(rate), None, (float(q_lo), float(q_hi)), details or {},
    )


Ghat = Union[str, CdfEstimate]


def _ghat_for(ghat: Ghat, est: EstimationResult, sample: TimeSeries, n_boot: int, seed: int) -> CdfEstimate:
    if isinstance(ghat, CdfEstimate):
        return ghat
    if ghat == "normal":
        return ghat_parametric_normal(est)
    if ghat == "bootstrap":
        if est.model != "ar1":
            raise ContractError("bootstrap limit-law estimates are implemented for AR(1) only")
        return ghat_bootstrap_ar1(sample, n_boot, seed)
    raise ContractError(f"unknown limit-law estimate {ghat!r}")


def _assemble(
    variant: str,
    model,
    est: EstimationResult,
    window: np.ndarray,
    T: int,
    trunc: TruncationConfig,
    rate: float,
    gamma1: float,
    gamma2: float,
    ghat: Ghat,
    est_sample: TimeSeries,
    n_boot: int,
    seed: int,
    details: dict[str, Any],
) -> IntervalResult:
    pred = get_model(model).predict_window(est.theta_hat, window, T, trunc)
    details = {"theta_hat": est.theta_hat.tolist(), "n_used": est.n_used, "gradient_at": "theta_hat", **details}
    if ghat == "normal":
        return normal_interval(pred.psi, delta_variance(pred, est), rate, gamma1, gamma2, variant, details)
    law = plug_in_law(pred.gradient, _ghat_for(ghat, est, est_sample, n_boot, seed))
    return quantile_interval(pred.psi, law, rate, gamma1, gamma2, variant, details)


def build_interval_2ip(
    x_series: TimeSeries,
    y_series: TimeSeries,
    model,
    gamma: float | None = 0.1,
    *,
    gamma1: float | None = None,
    gamma2: float | None = None,
    trunc: TruncationConfig | None = None,
    estimate: EstimationResult | None = None,
    ghat: Ghat = "normal",
    qmle_options: QmleOptions | None = None,
    n_boot: int = 999,
    seed: int = 0,
    variant: str = "TwoIP",
) -> IntervalResult:
    """Interval with parameters estimated on the independent path ``y_series``.

    The center is the prediction on the full observed path ``x_series``.
    ``estimate`` may carry a precomputed fit on ``y_series``.
    """
    if len(x_series) != len(y_series):
        raise ContractError("x and y paths must have the same length")
    g1, g2 = _split_gamma(gamma, gamma1, gamma2)
    trunc = (trunc or TruncationConfig()).with_t1(None)
    est = estimate if estimate is not None else fit(model, y_series, qmle_options)
    return _assemble(
        variant, model, est, x_series.values, len(x_series), trunc, est.rate, g1, g2,
        ghat, y_series, n_boot, seed, {},
    )


def build_interval_sta(
    series: TimeSeries,
    model,
    gamma: float | None = 0.1,
    **kwargs,
) -> IntervalResult:
    """The standard interval: the same path is used for estimation and conditioning."""
    return build_interval_2ip(series, series, model, gamma, variant="STA", **kwargs)


def build_interval_spl(
    series: TimeSeries,
    plan: SplitPlan | None,
    model,
    gamma: float | None = 0.1,
    *,
    gamma1: float | None = None,
    gamma2: float | None = None,
    trunc: TruncationConfig | None = None,
    estimate: EstimationResult | None = None,
    ghat: Ghat = "normal",
    qmle_options: QmleOptions | None = None,
    n_boot: int = 999,
    seed: int = 0,
) -> IntervalResult:
    """Sample-split interval.

    Parameters are estimated on ``x_1..x_{t_e}`` and the prediction uses
    only ``x_{t_p}..x_T``, with earlier observations replaced by constants.
    Observations strictly between ``t_e`` and ``t_p`` are never read.  The
    interval is scaled by ``sqrt(T)``.
    """
    T = len(series)
    plan = plan or default_split_plan(T)
    if plan.T != T:
        raise ContractError(f"plan built for T={plan.T}, series has length {T}")
    g1, g2 = _split_gamma(gamma, gamma1, gamma2)
    trunc = (trunc or TruncationConfig()).with_t1(series.origin + plan.t_p - 1)
    block = series.head(plan.t_e)
    est = estimate if estimate is not None else fit(model, block, qmle_options)
    window = series.values[plan.t_p - 1 :]
    details = {"t_e": plan.t_e, "t_p": plan.t_p, "gap": plan.gap, "l_t": plan.l_t}
    return _assemble(
        "SPL", model, est, window, T, trunc, math.sqrt(T), g1, g2, ghat, block, n_boot, seed, details,
    )


# --------------------------------------------------------------------------
# Prediction intervals for squared GARCH observations


def gaussian_innovation_cdf(n: int = 100_000) -> StepCdf:
    """Tabulated law of ``eps**2 - 1`` for standard normal ``eps``.

    Support points are chi-square(1) quantiles at the midpoints ``(i - 1/2)/n``.
    """
    from scipy.stats import chi2

    u = (np.arange(n) + 0.5) / n
    return from_samples(chi2.ppf(u, 1) - 1.0)


def prediction_interval_convolution(
    center_law: NormalLaw | StepCdf,
    innovation_cdf: StepCdf,
    sigma2_hat: float,
    gamma: float | None = 0.1,
    *,
    gamma1: float | None = None,
    gamma2: float | None = None,
    rate: float = 1.0,
    n_grid: int = 100_000,
    seed: int = 0,
    variant: str = "STA",
) -> IntervalResult:
    """Equal-tailed prediction interval for ``X_{T+1}**2``.

    ``X**2 = sigma2_hat + E / rate + sigma2_hat * eta`` where ``E`` follows
    ``center_law`` (the parameter-estimation error) and ``eta`` follows
    ``innovation_cdf`` (the law of ``eps**2 - 1``).  The convolution is
    evaluated by Monte Carlo with ``n_grid`` paired draws.
    """
    if not sigma2_hat > 0:
        raise PreconditionError(f"sigma2_hat must be positive, got {sigma2_hat}")
    if n_grid < 10_000:
        raise InsufficientResolutionError(f"n_grid must be at least 10000, got {n_grid}")
    g1, g2 = _split_gamma(gamma, gamma1, gamma2)
    rng_param = generator(seed, "convolution-parameter")
    rng_innov = generator(seed, "convolution-innovation")
    if isinstance(center_law, NormalLaw):
        e = math.sqrt(center_law.variance) * rng_param.standard_normal(n_grid)
    else:
        e = center_law.sample(rng_param, n_grid)
    eta = innovation_cdf.sample(rng_innov, n_grid)
    draws = from_samples(sigma2_hat + e / rate + sigma2_hat * eta)
    lo = generalized_inverse(draws, g1) if g1 > 0 else -math.inf
    hi = generalized_inverse(draws, 1.0 - g2)
    return IntervalResult(
        float(lo), float(hi), float(sigma2_hat), g1, g2, variant, float(rate), None,
        (float(lo), float(hi)), {"n_grid": n_grid},
    )
