"""County-level epidemic death forecasting.

Baseline trend predictors, an adaptively weighted combined forecast, maximum
absolute relative error prediction intervals, and a hospital severity index,
with file-based ingestion, rolling-origin backtesting, and report export
around them.
"""

__version__ = "0.1.0"

from .backtest import BacktestReport, SynthSpec, generate_synthetic, losses, rolling_backtest
from .ensemble import CLEP, EnsembleConfig, EnsembleState, clep_predict, update_weights
from .errors import CountycastError
from .ingest import Hospital, RunConfig, SourceDescriptor, build_panel, load_run_config
from .intervals import Interval, coverage, mepi_interval
from .model import (
    DaySeries,
    MonotoneFixPolicy,
    Panel,
    validate_cumulative,
    validate_fips,
    window,
)
from .predictors import FitConfig, PointForecast, Predictor, predict_all
from .severity import SeverityRecord, impute_hospital, severity_index

__all__ = [
    "BacktestReport",
    "CLEP",
    "CountycastError",
    "DaySeries",
    "EnsembleConfig",
    "EnsembleState",
    "FitConfig",
    "Hospital",
    "Interval",
    "MonotoneFixPolicy",
    "Panel",
    "PointForecast",
    "Predictor",
    "RunConfig",
    "SeverityRecord",
    "SourceDescriptor",
    "SynthSpec",
    "build_panel",
    "clep_predict",
    "coverage",
    "generate_synthetic",
    "impute_hospital",
    "load_run_config",
    "losses",
    "mepi_interval",
    "predict_all",
    "rolling_backtest",
    "severity_index",
    "update_weights",
    "validate_cumulative",
    "validate_fips",
    "window",
]
