"""Parameter estimators, covariance estimates and estimates of the limit law.

AR(1) uses least squares with the textbook asymptotic variance ``1 - beta**2``.
GARCH(1,1) uses Gaussian quasi maximum likelihood with a sandwich
covariance.  :class:`CdfEstimate` carries an estimate of the law of
``m_T (theta_hat - theta_0)``, either parametric normal or a bootstrap sample.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy.optimize import minimize
from scipy.signal import lfilter

from .errors import (
    DegenerateSampleError,
    EstimationFailedError,
    InsufficientDrawsError,
    PreconditionError,
    SingularInformationError,
)
from .models import TimeSeries, get_model
from .rng import generator

__all__ = [
    "EstimationResult",
    "CdfEstimate",
    "QmleOptions",
    "estimate_ar1_ols",
    "estimate_garch11_qmle",
    "garch_qmle_objective",
    "ghat_parametric_normal",
    "ghat_bootstrap_ar1",
    "fit",
]

AR1_VARIANCE_FLOOR = 1e-10
PSD_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class EstimationResult:
    model: str
    theta_hat: np.ndarray
    cov_hat: np.ndarray
    n_used: int
    diagnostics: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        theta = np.atleast_1d(np.asarray(self.theta_hat, dtype=float))
        cov = np.atleast_2d(np.asarray(self.cov_hat, dtype=float))
        if cov.shape != (theta.size, theta.size):
            raise ValueError(f"covariance shape {cov.shape} does not match {theta.size} parameters")
        cov = 0.5 * (cov + cov.T)
        if np.any(np.diag(cov) < 0) or np.linalg.eigvalsh(cov).min() < -PSD_TOLERANCE:
            raise SingularInformationError("covariance estimate is not positive semidefinite")
        object.__setattr__(self, "theta_hat", theta)
        object.__setattr__(self, "cov_hat", cov)

    @property
    def rate(self) -> float:
        return math.sqrt(self.n_used)

    def standard_errors(self) -> np.ndarray:
        """Standard errors of ``theta_hat`` itself (covariance over ``n_used``)."""
        return np.sqrt(np.diag(self.cov_hat) / self.n_used)


@dataclass(frozen=True, eq=False)
class CdfEstimate:
    """Estimate of the limit law of the scaled estimation error."""

    kind: str
    mean: np.ndarray | None = None
    cov: np.ndarray | None = None
    draws: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind == "normal":
            cov = np.atleast_2d(np.asarray(self.cov, dtype=float))
            if np.linalg.eigvalsh(0.5 * (cov + cov.T)).min() < -PSD_TOLERANCE:
                raise ValueError("normal covariance must be positive semidefinite")
            mean = np.zeros(cov.shape[0]) if self.mean is None else np.asarray(self.mean, dtype=float)
            object.__setattr__(self, "cov", cov)
            object.__setattr__(self, "mean", mean)
        elif self.kind == "sample":
            draws = np.asarray(self.draws, dtype=float)
            if draws.ndim == 1:
                draws = draws[:, None]
            if draws.shape[0] < 100:
                raise InsufficientDrawsError("a sample CDF estimate needs at least 100 draws")
            if not np.all(np.isfinite(draws)):
                raise ValueError("bootstrap draws must be finite")
            object.__setattr__(self, "draws", draws)
        else:
            raise ValueError(f"unknown CDF estimate kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.cov.shape[0] if self.kind == "normal" else self.draws.shape[1]


# --------------------------------------------------------------------------
# AR(1)


def _ols_beta(values: np.ndarray) -> float:
    lagged = values[:-1]
    den = float(lagged @ lagged)
    if den == 0.0:
        raise DegenerateSampleError("all lagged observations are zero")
    return float(values[1:] @ lagged) / den


def estimate_ar1_ols(series: TimeSeries, *, min_length: int = 10) -> EstimationResult:
    """Least-squares AR(1) slope with covariance ``max(1 - beta_hat**2, 1e-10)``."""
    x = series.values
    if x.size < min_length:
        raise PreconditionError(f"AR(1) estimation needs at least {min_length} observations, got {x.size}")
    beta = _ols_beta(x)
    resid = x[1:] - beta * x[:-1]
    diagnostics = {"residual_sd": float(np.sqrt(np.mean(resid**2)))}
    var = max(1.0 - beta**2, AR1_VARIANCE_FLOOR)
    return EstimationResult("ar1", np.array([beta]), np.array([[var]]), x.size, diagnostics)


# --------------------------------------------------------------------------
# GARCH(1,1) QMLE


@dataclass(frozen=True)
class QmleOptions:
    starts: tuple[tuple[float, float, float], ...] = (
        (0.05, 0.05, 0.9),
        (0.1, 0.1, 0.8),
        (0.2, 0.2, 0.5),
    )
    maxiter: int = 4000
    xatol: float = 1e-7
    fatol: float = 1e-10
    fd_step: float = 1e-5
    # box on (log omega, log alpha, logit beta); keeps flat directions from drifting
    bounds: tuple[tuple[float, float], ...] = ((-30.0, 10.0), (-20.0, 0.0), (-20.0, 20.0))
    unidentified_alpha: float = 0.02
    # 0.95 quantile of chi-square(2); T times the objective is -2 log L up to a constant
    lr_critical: float = 5.991464547107979
    min_length: int = 250


def _to_natural(phi: np.ndarray) -> np.ndarray:
    return np.array([math.exp(phi[0]), math.exp(phi[1]), 1.0 / (1.0 + math.exp(-phi[2]))])


def _to_unconstrained(theta) -> np.ndarray:
    omega, alpha, beta = theta
    return np.array([math.log(omega), math.log(alpha), math.log(beta / (1.0 - beta))])


def _sigma2_path(theta, x2: np.ndarray, sigma2_init: float) -> np.ndarray:
    omega, alpha, beta = theta
    out = np.empty_like(x2)
    out[0] = sigma2_init
    out[1:], _ = lfilter([1.0], [1.0, -beta], omega + alpha * x2[:-1], zi=[beta * sigma2_init])
    return out


def garch_qmle_objective(theta, x: np.ndarray, sigma2_init: float | None = None) -> float:
    """Average Gaussian quasi negative log-likelihood ``mean(log s2 + x**2 / s2)``."""
    x2 = np.asarray(x, dtype=float) ** 2
    if sigma2_init is None:
        sigma2_init = float(np.var(x))
    s2 = _sigma2_path(theta, x2, sigma2_init)
    if np.any(s2 <= 0) or not np.all(np.isfinite(s2)):
        return np.inf
    return float(np.mean(np.log(s2) + x2 / s2))


def _sandwich(theta: np.ndarray, x2: np.ndarray, sigma2_init: float, rel_step: float, allow_singular: bool):
    """``J^-1 I J^-1`` from finite-difference derivatives of the variance path."""
    s2 = _sigma2_path(theta, x2, sigma2_init)
    grads = np.empty((3, x2.size))
    for j in range(3):
        h = rel_step * abs(theta[j]) if theta[j] != 0 else rel_step
        up, dn = theta.copy(), theta.copy()
        up[j] += h
        dn[j] -= h
        grads[j] = (_sigma2_path(up, x2, sigma2_init) - _sigma2_path(dn, x2, sigma2_init)) / (2 * h)
    g = grads / s2
    scores = g * (1.0 - x2 / s2)
    n = x2.size
    info = g @ g.T / n
    outer = scores @ scores.T / n
    if not np.all(np.isfinite(info)) or not np.all(np.isfinite(outer)):
        raise SingularInformationError("non-finite information matrix")
    cond = np.linalg.cond(info)
    if not np.isfinite(cond) or cond > 1e12:
        if not allow_singular:
            raise SingularInformationError(f"information matrix is singular (cond={cond:.3g})")
        inv = np.linalg.pinv(info, rcond=1e-10, hermitian=True)
    else:
        inv = np.linalg.inv(info)
    cov = inv @ outer @ inv
    cov = 0.5 * (cov + cov.T)
    # clip round-off negatives so the result is numerically PSD
    vals, vecs = np.linalg.eigh(cov)
    if vals.min() < 0:
        cov = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    return cov, float(cond)


def estimate_garch11_qmle(
    series: TimeSeries, options: QmleOptions | None = None, *, callback=None
) -> EstimationResult:
    """Gaussian QMLE for a zero-mean GARCH(1,1).

    Nelder-Mead runs in ``(log omega, log alpha, logit beta)`` from each
    start in ``options.starts``; the lowest objective wins.  ``callback`` is
    forwarded to the optimizer and receives the best vertex of each
    iteration.

    Raises
    ------
    PreconditionError
        Fewer than ``options.min_length`` observations.
    EstimationFailedError
        The winning start did not converge within ``options.maxiter``.
    SingularInformationError
        The sandwich covariance cannot be inverted at an identified estimate.
    """
    opts = options or QmleOptions()
    x = series.values
    if x.size < opts.min_length:
        raise PreconditionError(f"GARCH QMLE needs at least {opts.min_length} observations, got {x.size}")
    x2 = x**2
    sigma2_init = float(np.var(x))
    if sigma2_init <= 0.0:
        raise DegenerateSampleError("series has zero sample variance")

    def objective(phi):
        return garch_qmle_objective(_to_natural(phi), x, sigma2_init)

    best = None
    total_iter = total_fev = 0
    for i, start in enumerate(opts.starts):
        res = minimize(
            objective,
            _to_unconstrained(start),
            method="Nelder-Mead",
            bounds=opts.bounds,
            callback=callback,
            options={"maxiter": opts.maxiter, "xatol": opts.xatol, "fatol": opts.fatol},
        )
        total_iter += int(res.nit)
        total_fev += int(res.nfev)
        if best is None or res.fun < best[1].fun:
            best = (i, res)
    start_index, res = best
    theta = _to_natural(res.x)
    if not res.success or not np.isfinite(res.fun):
        raise EstimationFailedError(
            f"Nelder-Mead did not converge: {res.message}", best_point=theta, best_value=float(res.fun)
        )
    objective_value = float(res.fun)
    # with alpha near zero beta is not identified and the optimum drifts
    # along a flat ridge; if a likelihood-ratio test cannot reject constant
    # variance, report the constant-variance point instead
    flat = np.array([float(np.mean(x2[1:])), 0.0, 0.0])
    flat_value = garch_qmle_objective(flat, x, sigma2_init)
    lr_statistic = float(x.size * (flat_value - objective_value))
    unidentified = bool(lr_statistic <= opts.lr_critical and theta[1] < opts.unidentified_alpha)
    collapsed = unidentified
    if collapsed:
        theta, objective_value = flat, flat_value
    cov, cond = _sandwich(theta, x2, sigma2_init, opts.fd_step, allow_singular=unidentified)
    diagnostics = {
        "iterations": total_iter,
        "function_evaluations": total_fev,
        "objective": objective_value,
        "start_index": start_index,
        "information_condition": cond,
        "lr_statistic": lr_statistic,
        "unidentified": unidentified,
        "collapsed_to_constant_variance": collapsed,
    }
    return EstimationResult("garch11", theta, cov, x.size, diagnostics)


def fit(model, series: TimeSeries, options: QmleOptions | None = None) -> EstimationResult:
    """Estimate ``model`` ("ar1" or "garch11") on ``series``."""
    name = get_model(model).name
    if name == "ar1":
        return estimate_ar1_ols(series)
    return estimate_garch11_qmle(series, options)


# --------------------------------------------------------------------------
# Estimates of the limit law


def ghat_parametric_normal(est: EstimationResult) -> CdfEstimate:
    return CdfEstimate("normal", mean=np.zeros(est.theta_hat.size), cov=est.cov_hat.copy())


def ghat_bootstrap_ar1(series: TimeSeries, n_boot: int, seed: int) -> CdfEstimate:
    """Residual bootstrap of ``sqrt(T) (beta* - beta_hat)`` for the AR(1) slope.

    Replication ``b`` draws its residuals from the substream ``(seed, b)``,
    so the draw matrix does not depend on evaluation order.
    """
    x = series.values
    T = x.size
    if T < 50:
        raise PreconditionError(f"bootstrap needs at least 50 observations, got {T}")
    if n_boot < 100:
        raise PreconditionError(f"n_boot must be at least 100, got {n_boot}")
    beta = _ols_beta(x)
    resid = x[1:] - beta * x[:-1]
    resid = resid - resid.mean()
    if np.ptp(resid) == 0.0:
        raise DegenerateSampleError("all residuals are equal")
    idx = np.empty((n_boot, T - 1), dtype=np.int64)
    for b in range(n_boot):
        idx[b] = generator(seed, "ar1-bootstrap", b).integers(0, T - 1, size=T - 1)
    shocks = resid[idx]
    paths = np.empty((n_boot, T))
    paths[:, 0] = x[0]
    paths[:, 1:], _ = lfilter([1.0], [1.0, -beta], shocks, axis=1, zi=np.full((n_boot, 1), beta * x[0]))
    lagged = paths[:, :-1]
    den = np.einsum("ij,ij->i", lagged, lagged)
    if np.any(den == 0.0):
        raise DegenerateSampleError("bootstrap path with all-zero lags")
    beta_star = np.einsum("ij,ij->i", paths[:, 1:], lagged) / den
    return CdfEstimate("sample", draws=(math.sqrt(T) * (beta_star - beta))[:, None])
