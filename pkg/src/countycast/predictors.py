"""The five baseline trend forecasters.

Each maps a panel truncated at day ``t`` to a per-county point forecast of
cumulative deaths at day ``t + h``:

* p1 separate_linear      - per-county least-squares line on the fit window
* p2 separate_exp         - per-county least-squares line on log(y + shift)
* p3 shared_exp           - one pooled log-space growth rate, per-county level
* p4 demographic_shared   - pooled log-space model with county covariates
* p5 neighbor_exp         - p2 plus the neighbouring counties' death total
                            as an exogenous regressor

Every forecast is clamped to the county's last observed cumulative count,
since cumulative counts cannot decrease.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import DegenerateWindow
from .model import validate_horizon, window

logger = logging.getLogger(__name__)

# Exponent cap: keeps pathological fits finite without touching sane ones.
_MAX_EXP_ARG = 50.0


class Predictor(str, Enum):
    """The five registered baselines; values are the wire/report codes."""

    SEPARATE_LINEAR = "p1"
    SEPARATE_EXP = "p2"
    SHARED_EXP = "p3"
    DEMOGRAPHIC_SHARED = "p4"
    NEIGHBOR_EXP = "p5"


PREDICTOR_ORDER = tuple(Predictor)


@dataclass(frozen=True)
class FitConfig:
    """Window and transform settings shared by all baselines."""

    k_fit: int = 7
    log_shift: float = 1.0
    min_points: int = 3

    def __post_init__(self):
        if self.min_points < 2:
            raise ValueError("min_points must be >= 2")
        if self.k_fit < self.min_points:
            raise ValueError("k_fit must be >= min_points")
        if self.log_shift <= 0:
            raise ValueError("log_shift must be positive")


@dataclass(frozen=True)
class PointForecast:
    predictor: str
    fips: str
    as_of: int
    horizon: int
    value: float

    def __post_init__(self):
        if not (self.value >= 0 and math.isfinite(self.value)):
            raise ValueError(f"forecast value must be finite and >= 0, got {self.value}")


def _ols(x, y):
    """Closed-form least squares of y on x; returns (slope, intercept)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    xm = x.mean()
    ym = y.mean()
    sxx = float(((x - xm) ** 2).sum())
    if sxx == 0.0:
        return 0.0, float(ym)
    slope = float(((x - xm) * (y - ym)).sum()) / sxx
    return slope, float(ym - slope * xm)


def _usable(y, min_points):
    y = np.asarray(y, dtype=float)
    mask = np.isfinite(y)
    if mask.sum() < min_points:
        raise DegenerateWindow(int(mask.sum()), min_points)
    x = np.arange(len(y), dtype=float)
    return x[mask], y[mask]


def fit_linear(y, min_points=2):
    """Least-squares line through (i, y_i), i = 0..k-1.

    Non-finite entries are dropped (keeping their original index); fewer than
    ``min_points`` usable points raises :class:`DegenerateWindow`.
    Returns ``(slope, intercept)``.
    """
    x, yv = _usable(y, min_points)
    return _ols(x, yv)


def fit_exponential(y, log_shift=1.0, min_points=2):
    """Least squares of log(y_i + shift) on i; returns (growth_rate, level)."""
    x, yv = _usable(y, min_points)
    if (yv + log_shift <= 0).any():
        raise ValueError("log transform needs y + log_shift > 0 everywhere")
    return _ols(x, np.log(yv + log_shift))


def _clamp(value, last_obs):
    if not math.isfinite(value):
        value = float(last_obs)
    return max(float(value), float(last_obs), 0.0)


def forecast_linear(y, horizon, min_points=2):
    """p1 point value: extrapolate the fitted line, clamped to the last count."""
    slope, intercept = fit_linear(y, min_points)
    x_star = len(y) - 1 + horizon
    return _clamp(intercept + slope * x_star, y[-1])


def forecast_exponential(y, horizon, log_shift=1.0, min_points=2):
    """p2 point value: extrapolate in log space, back-transform, clamp."""
    growth, level = fit_exponential(y, log_shift, min_points)
    x_star = len(y) - 1 + horizon
    value = math.exp(min(level + growth * x_star, _MAX_EXP_ARG)) - log_shift
    return _clamp(value, y[-1])


# Cumulative-death floor for a county to inform the pooled growth rate.
SHARED_POOL_MIN_DEATHS = 10


def _pooled_growth(log_windows, x):
    """One growth rate across counties: per-county demeaned least squares."""
    if not log_windows:
        return 0.0
    xc = x - x.mean()
    sxx = float((xc**2).sum()) * len(log_windows)
    if sxx == 0.0:
        return 0.0
    sxy = 0.0
    for z in log_windows:
        sxy += float((xc * (z - z.mean())).sum())
    return sxy / sxx


def _county_covariates(panel, fips):
    pop = max(panel.feature(fips, "population", 1.0), 1.0)
    return (
        math.log(pop),
        panel.feature(fips, "density", 0.0),
        panel.feature(fips, "icu_beds", 0.0) / pop,
    )


def predict_all(panel, as_of, horizon, config=None):
    """Run all five baselines for every county at ``as_of`` for ``horizon``.

    Returns a map ``(Predictor, fips) -> PointForecast`` with exactly five
    entries per county. Counties whose window is shorter than
    ``config.min_points`` fall back to the persistence forecast (their last
    observed value) for all five baselines; fallbacks are logged.
    """
    config = config or FitConfig()
    horizon = validate_horizon(horizon)
    if not 0 <= as_of <= panel.n_days - 1:
        raise ValueError(f"as_of day {as_of} outside panel range 0..{panel.n_days - 1}")
    k = min(config.k_fit, as_of + 1)
    counties = panel.counties
    eps = config.log_shift

    out = {}
    if k < config.min_points:
        for fips in counties:
            last = float(panel.last_observed(fips, as_of))
            logger.info("county %s: %d-day window too short, persistence fallback", fips, k)
            for pid in PREDICTOR_ORDER:
                out[(pid, fips)] = PointForecast(pid.value, fips, as_of, horizon, last)
        return out

    x = np.arange(k, dtype=float)
    x_star = k - 1 + horizon
    windows = {fips: window(panel.series[fips], as_of, k) for fips in counties}
    log_windows = {fips: np.log(windows[fips].astype(float) + eps) for fips in counties}

    # p3: pooled growth over counties with enough signal, each county keeps
    # its own level (log-window mean).
    pool = [log_windows[f] for f in counties if windows[f][-1] >= SHARED_POOL_MIN_DEATHS]
    shared_growth = _pooled_growth(pool, x)
    x_mean = x.mean()

    # p4: one pooled log-space regression with standardized county covariates.
    cov = np.array([_county_covariates(panel, f) for f in counties], dtype=float)
    cov_mean = cov.mean(axis=0)
    cov_std = cov.std(axis=0)
    cov_std[cov_std == 0.0] = 1.0
    cov_z = (cov - cov_mean) / cov_std
    design = np.empty((len(counties) * k, 5), dtype=float)
    target = np.empty(len(counties) * k, dtype=float)
    for idx, fips in enumerate(counties):
        rows = slice(idx * k, (idx + 1) * k)
        design[rows, 0] = 1.0
        design[rows, 1] = x
        design[rows, 2:] = cov_z[idx]
        target[rows] = log_windows[fips]
    beta, *_ = np.linalg.lstsq(design, target, rcond=None)

    for idx, fips in enumerate(counties):
        y = windows[fips]
        z = log_windows[fips]
        last = float(y[-1])

        p1 = forecast_linear(y, horizon, config.min_points)
        p2 = forecast_exponential(y, horizon, eps, config.min_points)

        level = float(z.mean()) - shared_growth * x_mean
        p3 = _clamp(math.exp(min(level + shared_growth * x_star, _MAX_EXP_ARG)) - eps, last)

        zhat = beta[0] + beta[1] * x_star + float(cov_z[idx] @ beta[2:])
        p4 = _clamp(math.exp(min(zhat, _MAX_EXP_ARG)) - eps, last)

        u = np.log(panel.neighbor_deaths(fips)[as_of - k + 1 : as_of + 1].astype(float) + eps)
        nd = np.column_stack([np.ones(k), x, u])
        nb, *_ = np.linalg.lstsq(nd, z, rcond=None)
        # Future neighbour totals are unobserved; hold the regressor at its
        # last observed value.
        zhat_n = nb[0] + nb[1] * x_star + nb[2] * u[-1]
        p5 = _clamp(math.exp(min(zhat_n, _MAX_EXP_ARG)) - eps, last)

        for pid, value in zip(PREDICTOR_ORDER, (p1, p2, p3, p4, p5)):
            out[(pid, fips)] = PointForecast(pid.value, fips, as_of, horizon, value)
    return out


def forecasts_by_county(forecast_map):
    """Regroup a ``predict_all`` result as ``fips -> {wire code -> value}``."""
    grouped = {}
    for (pid, fips), fc in forecast_map.items():
        grouped.setdefault(fips, {})[pid.value] = fc.value
    return grouped
