"""AR(1) and GARCH(1,1) models: parameters, simulators and prediction functions.

The prediction function of a model maps a parameter vector and an observed
path to the conditional object of interest (the conditional mean of an AR(1),
the conditional variance of a GARCH(1,1)).  The unobservable past is replaced
by starting values, and observations before the conditioning index ``t1`` by
constants; both are controlled by :class:`TruncationConfig`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import ClassVar, Sequence, Union

import numpy as np
from scipy.signal import lfilter

from .errors import ConfigurationError, InvalidParameterError, PreconditionError
from .rng import generator

__all__ = [
    "Ar1Params",
    "Garch11Params",
    "TimeSeries",
    "TruncationConfig",
    "PredictionOutput",
    "PredictionModel",
    "Ar1Model",
    "Garch11Model",
    "MODELS",
    "get_model",
    "simulate_ar1",
    "simulate_garch11",
    "predict_ar1",
    "predict_garch11",
    "truncation_gap",
    "read_series_csv",
    "write_series_csv",
]

GARCH_BURN_IN = 1000
# beta**k below this is dropped from explicit start-value sums
_HORIZON_EPS = np.finfo(float).eps

Policy = Union[str, Sequence[float]]
_POLICY_NAMES = ("zeros", "unconditional")


def _finite(*values: float) -> bool:
    return all(math.isfinite(float(v)) for v in values)


@dataclass(frozen=True)
class Ar1Params:
    beta: float
    noise_sd: float = 1.0

    n_params: ClassVar[int] = 1

    def __post_init__(self) -> None:
        if not _finite(self.beta, self.noise_sd):
            raise InvalidParameterError(f"non-finite AR(1) parameters: {self}")
        if not abs(self.beta) < 1.0:
            raise InvalidParameterError(f"AR(1) requires |beta| < 1, got {self.beta}")
        if not self.noise_sd > 0.0:
            raise InvalidParameterError(f"noise_sd must be positive, got {self.noise_sd}")

    def as_vector(self) -> np.ndarray:
        return np.array([self.beta])

    @property
    def stationary_variance(self) -> float:
        return self.noise_sd**2 / (1.0 - self.beta**2)


@dataclass(frozen=True)
class Garch11Params:
    omega: float
    alpha: float
    beta: float

    n_params: ClassVar[int] = 3

    def __post_init__(self) -> None:
        if not _finite(self.omega, self.alpha, self.beta):
            raise InvalidParameterError(f"non-finite GARCH parameters: {self}")
        if not self.omega > 0.0:
            raise InvalidParameterError(f"omega must be positive, got {self.omega}")
        if not self.alpha >= 0.0:
            raise InvalidParameterError(f"alpha must be nonnegative, got {self.alpha}")
        if not 0.0 <= self.beta < 1.0:
            raise InvalidParameterError(f"beta must lie in [0, 1), got {self.beta}")

    def as_vector(self) -> np.ndarray:
        return np.array([self.omega, self.alpha, self.beta])

    @property
    def is_covariance_stationary(self) -> bool:
        return self.alpha + self.beta < 1.0

    @property
    def unconditional_variance(self) -> float:
        if not self.is_covariance_stationary:
            raise InvalidParameterError("alpha + beta >= 1: no finite unconditional variance")
        return self.omega / (1.0 - self.alpha - self.beta)


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Observed or simulated path ``x_origin, ..., x_{origin+T-1}``."""

    values: np.ndarray
    origin: int = 1

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 1:
            raise PreconditionError("a time series needs at least one observation")
        if not np.all(np.isfinite(values)):
            raise PreconditionError("time series values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "origin", int(self.origin))

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TimeSeries):
            return NotImplemented
        return self.origin == other.origin and np.array_equal(self.values, other.values)

    @property
    def last_index(self) -> int:
        return self.origin + len(self) - 1

    @property
    def terminal(self) -> float:
        return float(self.values[-1])

    def position(self, t: int) -> int:
        """1-based position of index ``t`` within the series."""
        p = int(t) - self.origin + 1
        if not 1 <= p <= len(self):
            raise PreconditionError(
                f"index {t} outside [{self.origin}, {self.last_index}]"
            )
        return p

    def head(self, n: int) -> TimeSeries:
        return TimeSeries(self.values[:n], self.origin)

    def tail(self, n: int) -> TimeSeries:
        """Last ``n`` observations, keeping their original indices."""
        return TimeSeries(self.values[-n:], self.origin + len(self) - n)


@dataclass(frozen=True)
class TruncationConfig:
    """Conditioning index and the fill-in values for unobserved data.

    ``start_values`` replaces the infinite past ``s_0, s_{-1}, ...``;
    ``constants`` replaces observations ``c_1, ..., c_{t1-1}`` before the
    conditioning index.  Each is ``"zeros"``, ``"unconditional"`` (the
    stationary mean level of the quantity entering the recursion) or an
    explicit list; explicit start values are ordered ``s_0, s_{-1}, ...`` and
    explicit constants ``c_1, c_2, ...``.  ``t1=None`` conditions on the
    whole series.
    """

    t1: int | None = None
    start_values: Policy = "unconditional"
    constants: Policy = "unconditional"

    def __post_init__(self) -> None:
        for name in ("start_values", "constants"):
            policy = getattr(self, name)
            if isinstance(policy, str):
                if policy not in _POLICY_NAMES:
                    raise ConfigurationError(
                        f"{name} policy must be one of {_POLICY_NAMES} or a list, got {policy!r}"
                    )
            else:
                arr = np.asarray(policy, dtype=float)
                if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                    raise ConfigurationError(f"explicit {name} must be a finite 1-d list")
                object.__setattr__(self, name, tuple(float(v) for v in arr))

    def with_t1(self, t1: int | None) -> TruncationConfig:
        return TruncationConfig(t1, self.start_values, self.constants)


@dataclass(frozen=True, eq=False)
class PredictionOutput:
    psi: float
    gradient: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "psi", float(self.psi))
        object.__setattr__(self, "gradient", np.asarray(self.gradient, dtype=float))


# --------------------------------------------------------------------------
# Simulation


def simulate_ar1(params: Ar1Params, length: int, seed: int) -> TimeSeries:
    """Stationary Gaussian AR(1) path of ``length`` observations.

    ``x_0`` is drawn from the stationary law, so the path is stationary from
    the first observation.  Draws are consumed in order (``x_0``, then the
    innovations), which makes a shorter path with the same seed a prefix of
    a longer one.
    """
    if length < 1:
        raise PreconditionError("length must be at least 1")
    rng = generator(seed)
    x0 = rng.standard_normal() * math.sqrt(params.stationary_variance)
    eps = params.noise_sd * rng.standard_normal(int(length))
    x, _ = lfilter([1.0], [1.0, -params.beta], eps, zi=[params.beta * x0])
    return TimeSeries(x)


def _innovations(rng: np.random.Generator, n: int, innovation: str, df: float | None) -> np.ndarray:
    if innovation == "gaussian":
        return rng.standard_normal(n)
    if innovation in ("student-t", "t"):
        if df is None or not df > 4:
            raise InvalidParameterError("student-t innovations need df > 4")
        return rng.standard_t(df, n) * math.sqrt((df - 2.0) / df)
    raise InvalidParameterError(f"unknown innovation law {innovation!r}")


def simulate_garch11(
    params: Garch11Params,
    length: int,
    seed: int,
    innovation: str = "gaussian",
    df: float | None = None,
) -> tuple[TimeSeries, np.ndarray]:
    """Simulate a GARCH(1,1) path and its latent conditional variances.

    Returns ``(series, sigma2)`` with ``sigma2[t]`` the conditional variance
    of ``series.values[t]``.  The recursion starts at the unconditional
    variance and discards ``GARCH_BURN_IN`` steps.
    """
    if length < 1:
        raise PreconditionError("length must be at least 1")
    if not params.is_covariance_stationary:
        raise InvalidParameterError("stationary simulation requires alpha + beta < 1")
    n = int(length) + GARCH_BURN_IN
    eps = _innovations(generator(seed), n, innovation, df)
    omega, alpha, beta = params.omega, params.alpha, params.beta
    x = np.empty(n)
    s2 = np.empty(n)
    v = params.unconditional_variance
    for t in range(n):
        s2[t] = v
        xt = math.sqrt(v) * eps[t]
        x[t] = xt
        v = omega + alpha * xt * xt + beta * v
    return TimeSeries(x[GARCH_BURN_IN:]), s2[GARCH_BURN_IN:]


# --------------------------------------------------------------------------
# Prediction functions on raw parameter vectors


def _conditioning_position(series: TimeSeries, t1: int | None) -> int:
    return 1 if t1 is None else series.position(t1)


def ar1_prediction(theta: np.ndarray, series: TimeSeries, trunc: TruncationConfig) -> PredictionOutput:
    p = _conditioning_position(series, trunc.t1)
    return ar1_window_prediction(theta, series.values[p - 1 :], len(series), trunc)


def ar1_window_prediction(theta, window: np.ndarray, T: int, trunc: TruncationConfig) -> PredictionOutput:
    x_last = float(window[-1])
    return PredictionOutput(float(theta[0]) * x_last, np.array([x_last]))


def start_value_horizon(beta: float) -> int:
    """Number of start-value terms whose weight ``beta**k`` exceeds machine epsilon."""
    if beta <= 0.0:
        return 1
    return int(math.ceil(math.log(_HORIZON_EPS) / math.log(beta)))


def _unconditional_square(theta: np.ndarray) -> tuple[float, np.ndarray]:
    """Stationary mean of ``X_t**2`` and its gradient; zero when not stationary."""
    omega, alpha, beta = theta
    denom = 1.0 - alpha - beta
    if denom <= 0.0:
        return 0.0, np.zeros(3)
    level = omega / denom
    return level, np.array([1.0 / denom, omega / denom**2, omega / denom**2])


def _power_weights(beta: float, exps: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``beta**e`` and its derivative ``e * beta**(e - 1)``."""
    w = np.power(beta, exps)
    dw = np.zeros_like(w)
    pos = exps > 0
    dw[pos] = exps[pos] * np.power(beta, exps[pos] - 1)
    return w, dw


def garch_prediction(theta: np.ndarray, series: TimeSeries, trunc: TruncationConfig) -> PredictionOutput:
    p = _conditioning_position(series, trunc.t1)
    return garch_window_prediction(theta, series.values[p - 1 :], len(series), trunc)


def garch_window_prediction(theta, window: np.ndarray, T: int, trunc: TruncationConfig) -> PredictionOutput:
    """Truncated GARCH(1,1) conditional variance for period ``T+1``.

    ``window`` holds the observations ``x_{t1}, ..., x_T``; nothing before
    ``t1`` is read.  With ``z_i = c_i`` for ``i < t1`` and ``z_i = x_i``
    otherwise,

        psi = omega/(1-beta) + alpha * sum_i beta**(T-i) z_i**2
              + alpha * beta**T * sum_k beta**k s_{-k}**2,

    differentiated term by term.  The unconditional-moment policy uses
    ``omega/(1-alpha-beta)`` for the squares, which depends on theta and
    contributes to the gradient; it falls back to zero when
    ``alpha + beta >= 1``.
    """
    omega, alpha, beta = (float(v) for v in theta)
    obs = np.asarray(window, dtype=float) ** 2
    p = T - obs.size + 1
    if p < 1:
        raise PreconditionError("window longer than the sample")

    psi = omega / (1.0 - beta)
    grad = np.array([1.0 / (1.0 - beta), 0.0, omega / (1.0 - beta) ** 2])

    # observed block, exponents T - i for i = t1..T
    w, dw = _power_weights(beta, np.arange(obs.size - 1, -1, -1, dtype=float))
    a_sum = float(w @ obs)
    psi += alpha * a_sum
    grad[1] += a_sum
    grad[2] += alpha * float(dw @ obs)

    # constants c_1..c_{t1-1}, exponents T - i
    if p > 1 and trunc.constants != "zeros":
        wc, dwc = _power_weights(beta, np.arange(T - 1, T - p, -1, dtype=float))
        if trunc.constants == "unconditional":
            level, dlevel = _unconditional_square(theta)
            s_w = float(wc.sum())
            psi += alpha * level * s_w
            grad += alpha * s_w * dlevel
            grad[1] += level * s_w
            grad[2] += alpha * level * float(dwc.sum())
        else:
            c = np.asarray(trunc.constants, dtype=float)
            if c.size < p - 1:
                raise ConfigurationError(f"explicit constants need {p - 1} values, got {c.size}")
            c2 = c[: p - 1] ** 2
            s_c = float(wc @ c2)
            psi += alpha * s_c
            grad[1] += s_c
            grad[2] += alpha * float(dwc @ c2)

    # infinite past
    if trunc.start_values == "unconditional":
        level, dlevel = _unconditional_square(theta)
        if level > 0.0:
            bt = beta**T
            tail = bt / (1.0 - beta)
            dtail = T * beta ** (T - 1) / (1.0 - beta) + bt / (1.0 - beta) ** 2
            psi += alpha * level * tail
            grad += alpha * tail * dlevel
            grad[1] += level * tail
            grad[2] += alpha * level * dtail
    elif trunc.start_values != "zeros":
        s = np.asarray(trunc.start_values, dtype=float)
        horizon = start_value_horizon(beta)
        if s.size < horizon:
            raise ConfigurationError(
                f"explicit start values need {horizon} terms at beta={beta:g}, got {s.size}"
            )
        s2 = s[:horizon] ** 2
        ws, dws = _power_weights(beta, T + np.arange(horizon, dtype=float))
        s_s = float(ws @ s2)
        psi += alpha * s_s
        grad[1] += s_s
        grad[2] += alpha * float(dws @ s2)

    return PredictionOutput(psi, grad)


# --------------------------------------------------------------------------
# Model registry


class PredictionModel:
    """Interface a model implements to take part in interval construction."""

    name: str
    n_params: int
    param_names: tuple[str, ...]

    def predict(self, theta: np.ndarray, series: TimeSeries, trunc: TruncationConfig) -> PredictionOutput:
        raise NotImplementedError

    def predict_window(self, theta: np.ndarray, window: np.ndarray, T: int, trunc: TruncationConfig) -> PredictionOutput:
        """Prediction from the last ``len(window)`` observations of a length-``T`` sample."""
        raise NotImplementedError

    def params(self, theta: np.ndarray):
        raise NotImplementedError

    def simulate(self, params, length: int, seed: int, **kwargs) -> TimeSeries:
        raise NotImplementedError


class Ar1Model(PredictionModel):
    name = "ar1"
    n_params = 1
    param_names = ("beta",)

    def predict(self, theta, series, trunc):
        return ar1_prediction(np.asarray(theta, dtype=float), series, trunc)

    def predict_window(self, theta, window, T, trunc):
        return ar1_window_prediction(np.asarray(theta, dtype=float), window, T, trunc)

    def params(self, theta, noise_sd: float = 1.0) -> Ar1Params:
        return Ar1Params(float(theta[0]), noise_sd)

    def simulate(self, params, length, seed, **kwargs):
        return simulate_ar1(params, length, seed)


class Garch11Model(PredictionModel):
    name = "garch11"
    n_params = 3
    param_names = ("omega", "alpha", "beta")

    def predict(self, theta, series, trunc):
        return garch_prediction(np.asarray(theta, dtype=float), series, trunc)

    def predict_window(self, theta, window, T, trunc):
        return garch_window_prediction(np.asarray(theta, dtype=float), window, T, trunc)

    def params(self, theta) -> Garch11Params:
        return Garch11Params(*(float(v) for v in theta))

    def simulate(self, params, length, seed, innovation="gaussian", df=None, **kwargs):
        return simulate_garch11(params, length, seed, innovation, df)[0]


MODELS: dict[str, PredictionModel] = {"ar1": Ar1Model(), "garch11": Garch11Model()}


def get_model(model: str | PredictionModel | Ar1Params | Garch11Params) -> PredictionModel:
    if isinstance(model, PredictionModel):
        return model
    if isinstance(model, Ar1Params):
        return MODELS["ar1"]
    if isinstance(model, Garch11Params):
        return MODELS["garch11"]
    try:
        return MODELS[str(model).lower()]
    except KeyError:
        raise ConfigurationError(f"unknown model {model!r}; expected one of {sorted(MODELS)}") from None


# --------------------------------------------------------------------------
# Public prediction API


def predict_ar1(
    params: Ar1Params, series: TimeSeries, trunc: TruncationConfig | None = None
) -> PredictionOutput:
    """One-step conditional mean ``beta * x_T``; the truncation setting is irrelevant."""
    return ar1_prediction(params.as_vector(), series, trunc or TruncationConfig())


def predict_garch11(
    params: Garch11Params, series: TimeSeries, trunc: TruncationConfig | None = None
) -> PredictionOutput:
    return garch_prediction(params.as_vector(), series, trunc or TruncationConfig())


def truncation_gap(
    params: Garch11Params,
    series: TimeSeries,
    t1: int,
    trunc: TruncationConfig | None = None,
) -> float:
    """Change in the GARCH prediction from replacing data before ``t1`` by constants."""
    trunc = trunc or TruncationConfig()
    series.position(t1)
    theta = params.as_vector()
    partial = garch_prediction(theta, series, trunc.with_t1(t1)).psi
    full = garch_prediction(theta, series, trunc.with_t1(None)).psi
    return abs(partial - full)


# --------------------------------------------------------------------------
# CSV I/O


def write_series_csv(series: TimeSeries, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "x"])
        for i, v in enumerate(series.values):
            writer.writerow([series.origin + i, repr(float(v))])


def read_series_csv(path: str | Path) -> TimeSeries:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t", "x"]:
            raise ConfigurationError(f"{path}: expected header 't,x'")
        ts, xs = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                ts.append(int(row[0]))
                xs.append(float(row[1]))
            except (ValueError, IndexError):
                raise ConfigurationError(f"{path}: malformed row", lineno=lineno) from None
    if not xs:
        raise ConfigurationError(f"{path}: no observations")
    if any(b - a != 1 for a, b in zip(ts, ts[1:])):
        raise ConfigurationError(f"{path}: index column must be consecutive")
    return TimeSeries(np.array(xs), ts[0])
