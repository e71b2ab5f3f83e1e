"""Day-by-day forecast driver shared by the CLI and the backtester.

One `advance` call replays a single origin day: it first scores every pending
forecast whose target day has arrived (updating ensemble weights and the
per-horizon interval history in day order), then issues fresh baseline,
combined, and interval forecasts. State round-trips through a versioned JSON
document so daily runs resume without refitting history.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

from .ensemble import (
    CLEP,
    EnsembleConfig,
    EnsembleState,
    clep_predict,
    update_weights,
)
from .intervals import HISTORY_DAYS, Interval, build_interval
from .predictors import FitConfig, forecasts_by_county, predict_all

STATE_DOC_VERSION = 1


@dataclass
class PendingForecast:
    """A forecast waiting for its target day's actual."""

    fips: str
    made_at: int
    target: int
    horizon: int
    values: dict  # wire code (p1..p5, clep) -> value


@dataclass(frozen=True)
class ScoredRecord:
    fips: str
    made_at: int
    target: int
    horizon: int
    predictor: str
    predicted: float
    actual: int


@dataclass(frozen=True)
class ForecastRow:
    """Everything emitted for one (county, origin, horizon)."""

    fips: str
    as_of: int
    horizon: int
    values: dict
    interval: Interval


@dataclass
class PipelineState:
    ensembles: dict  # horizon -> EnsembleState
    mepi: dict = field(default_factory=dict)  # horizon -> fips -> [(y_hat, y), ...]
    pending: list = field(default_factory=list)
    last_origin: int | None = None


def new_state(horizons, ens_config=None):
    ens_config = ens_config or EnsembleConfig()
    return PipelineState(
        ensembles={h: EnsembleState(config=ens_config, eval_lag=h) for h in horizons},
        mepi={h: {} for h in horizons},
    )


def score_through(panel, state, day):
    """Score every pending forecast with target <= day, in day order.

    Returns the scored records (one per predictor plus the combined value).
    Weight updates use the ensemble's tracking loss; the interval history
    keeps the last 5 combined-forecast errors per (county, horizon).
    """
    due = [p for p in state.pending if p.target <= day]
    if not due:
        return []
    state.pending = [p for p in state.pending if p.target > day]
    records = []
    for target in sorted({p.target for p in due}):
        todays = [p for p in due if p.target == target]
        by_horizon = {}
        for p in todays:
            by_horizon.setdefault(p.horizon, []).append(p)
        for horizon in sorted(by_horizon):
            ens = state.ensembles[horizon]
            loss_fn = ens.config.loss_fn
            losses_by_county = {}
            for p in by_horizon[horizon]:
                actual = panel.last_observed(p.fips, p.target)
                losses = {}
                for pid, value in p.values.items():
                    records.append(
                        ScoredRecord(p.fips, p.made_at, p.target, horizon, pid, value, actual)
                    )
                    if pid != CLEP:
                        losses[pid] = loss_fn(value, actual)
                losses_by_county[p.fips] = losses
                history = state.mepi[horizon].setdefault(p.fips, [])
                history.append((p.values[CLEP], float(actual)))
                del history[:-HISTORY_DAYS]
            update_weights(ens, losses_by_county, target)
    return records


def advance(panel, state, origin, horizons, fit_config=None):
    """Replay one origin day: score what has arrived, then forecast ahead.

    Returns ``(rows, scored)`` where ``rows`` holds one :class:`ForecastRow`
    per (county, horizon) and ``scored`` the records settled on this day.
    """
    fit_config = fit_config or FitConfig()
    if state.last_origin is not None and origin <= state.last_origin:
        raise ValueError(f"origin {origin} does not advance past {state.last_origin}")
    scored = score_through(panel, state, origin)
    rows = []
    for horizon in sorted(horizons):
        baselines = predict_all(panel, origin, horizon, fit_config)
        combined = clep_predict(
            panel, origin, horizon, state.ensembles[horizon], baselines=baselines
        )
        grouped = forecasts_by_county(baselines)
        for fips in panel.counties:
            values = dict(grouped[fips])
            values[CLEP] = combined[fips].value
            last_obs = panel.last_observed(fips, origin)
            interval = build_interval(
                state.mepi[horizon].get(fips, []),
                combined[fips].value,
                last_obs,
                fips=fips,
                as_of=origin,
                horizon=horizon,
            )
            rows.append(ForecastRow(fips, origin, horizon, values, interval))
            state.pending.append(
                PendingForecast(fips, origin, origin + horizon, horizon, values)
            )
    state.last_origin = origin
    return rows, scored


def run_origins(panel, state, origins, horizons, fit_config=None):
    """Advance through consecutive origin days, keeping only the last day's rows."""
    rows = []
    scored = []
    for origin in origins:
        rows, day_scored = advance(panel, state, origin, horizons, fit_config)
        scored.extend(day_scored)
    return rows, scored


def state_to_doc(state):
    from .ensemble import state_to_doc as ens_doc

    return {
        "version": STATE_DOC_VERSION,
        "last_origin": state.last_origin,
        "ensembles": {str(h): ens_doc(s) for h, s in sorted(state.ensembles.items())},
        "mepi": {
            str(h): {fips: [[yh, y] for yh, y in pairs] for fips, pairs in sorted(hist.items())}
            for h, hist in sorted(state.mepi.items())
        },
        "pending": [
            {
                "fips": p.fips,
                "made_at": p.made_at,
                "target": p.target,
                "horizon": p.horizon,
                "values": dict(sorted(p.values.items())),
            }
            for p in state.pending
        ],
    }


def state_from_doc(doc):
    from .ensemble import state_from_doc as ens_from

    if doc.get("version") != STATE_DOC_VERSION:
        raise ValueError(f"unsupported pipeline state version {doc.get('version')!r}")
    return PipelineState(
        ensembles={int(h): ens_from(d) for h, d in doc["ensembles"].items()},
        mepi={
            int(h): {fips: [(yh, y) for yh, y in pairs] for fips, pairs in hist.items()}
            for h, hist in doc["mepi"].items()
        },
        pending=[
            PendingForecast(p["fips"], p["made_at"], p["target"], p["horizon"], dict(p["values"]))
            for p in doc["pending"]
        ],
        last_origin=doc["last_origin"],
    )


def save_state(state, path):
    Path(path).write_text(json.dumps(state_to_doc(state), sort_keys=True), encoding="utf-8")


def load_state(path):
    return state_from_doc(json.loads(Path(path).read_text(encoding="utf-8")))
