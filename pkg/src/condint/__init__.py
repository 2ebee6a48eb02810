"""Conditional confidence intervals for prediction functions of time-series models."""

__version__ = "0.1.0"

from .errors import CondIntError
from .estimation import EstimationResult, fit
from .intervals import (
    IntervalResult,
    SplitPlan,
    build_interval_2ip,
    build_interval_spl,
    build_interval_sta,
    default_split_plan,
)
from .metrics import StepCdf, d_bounded_lipschitz, d_kolmogorov, d_levy, from_samples
from .models import Ar1Params, Garch11Params, TimeSeries, TruncationConfig, get_model

__all__ = [
    "__version__",
    "CondIntError",
    "EstimationResult",
    "fit",
    "IntervalResult",
    "SplitPlan",
    "build_interval_2ip",
    "build_interval_spl",
    "build_interval_sta",
    "default_split_plan",
    "StepCdf",
    "d_bounded_lipschitz",
    "d_kolmogorov",
    "d_levy",
    "from_samples",
    "Ar1Params",
    "Garch11Params",
    "TimeSeries",
    "TruncationConfig",
    "get_model",
]
