"""Rolling-origin backtesting and the synthetic panel generator.

The backtest replays history one origin day at a time: every fit sees only
data up to its origin (no leakage), forecasts are scored as their target days
arrive, and ensemble weights plus interval histories update in day order.
Reports aggregate three losses per predictor and horizon, and interval
coverage per horizon.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ensemble import CLEP, EnsembleConfig
from .errors import InsufficientWarmup
from .intervals import coverage
from .model import DaySeries, Panel, day_from_iso, day_to_iso
from .pipeline import advance, new_state, score_through
from .predictors import PREDICTOR_ORDER, FitConfig

SCORE_KEYS = tuple(p.value for p in PREDICTOR_ORDER) + (CLEP,)
LOSS_NAMES = ("mae", "rmse", "mare")


def losses(y_hat, y):
    """Mean absolute, root-mean-square, and smoothed relative absolute error."""
    y_hat = np.asarray(y_hat, dtype=float)
    y = np.asarray(y, dtype=float)
    if y_hat.shape != y.shape or y_hat.size == 0:
        raise ValueError("losses need two equal-length non-empty arrays")
    if not (np.isfinite(y_hat).all() and np.isfinite(y).all()):
        raise ValueError("losses need finite inputs")
    err = y_hat - y
    return {
        "mae": float(np.mean(np.abs(err))),
        "rmse": float(np.sqrt(np.mean(err**2))),
        "mare": float(np.mean(np.abs(err) / (y + 1.0))),
    }


REGIMES = ("linear", "exponential", "logistic", "switching")
SYNTH_START = day_from_iso("2020-03-01")


@dataclass(frozen=True)
class SynthSpec:
    """Deterministic synthetic panel: regime shape, size, and noise level.

    ``sigma`` is the standard deviation of multiplicative log-normal noise
    applied to the base curve before the cumulative max and floor that keep
    counts integer and non-decreasing. ``growth`` is the per-day ratio of the
    exponential regime; level/slope parameters are drawn per county from the
    seeded generator.
    """

    regime: str
    counties: int = 10
    days: int = 40
    sigma: float = 0.0
    seed: int = 0
    growth: float = 2.0
    level_range: tuple = (1, 8)

    def __post_init__(self):
        if self.regime not in REGIMES:
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.counties < 1 or self.days < 2:
            raise ValueError("need at least 1 county and 2 days")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.growth <= 1.0:
            raise ValueError("growth ratio must exceed 1")


def _synth_fips(i):
    state = 1 + i // 999
    if state > 56:
        raise ValueError("too many synthetic counties")
    return f"{state:02d}{(i % 999) + 1:03d}"


def _base_curve(spec, rng, t):
    lo, hi = spec.level_range
    if spec.regime == "linear":
        start = float(rng.integers(lo, hi + 1)) * 10.0
        slope = float(rng.integers(1, 9))
        return start + slope * t
    if spec.regime == "exponential":
        level = float(rng.integers(lo, hi + 1))
        return level * spec.growth**t - 1.0
    if spec.regime == "logistic":
        cap = float(rng.integers(lo, hi + 1)) * 200.0
        rate = float(rng.uniform(0.15, 0.45))
        mid = float(rng.uniform(0.3, 0.7)) * spec.days
        return cap / (1.0 + np.exp(-rate * (t - mid)))
    # switching: linear until a seeded flip day, exponential continuation after
    start = float(rng.integers(lo, hi + 1)) * 10.0
    slope = float(rng.integers(1, 9))
    flip = int(rng.integers(spec.days // 3, 2 * spec.days // 3))
    curve = start + slope * t
    after = t > flip
    curve[after] = curve[flip] * spec.growth ** (t[after] - flip)
    return curve


def generate_synthetic(spec):
    """Build a deterministic panel from a :class:`SynthSpec`.

    Counties sit on a ring (county i borders i-1 and i+1). Counts are floored
    after a cumulative max so they stay integer and non-decreasing; with
    ``sigma=0`` the linear regime is exactly arithmetic and the exponential
    regime exactly shifted-geometric (growth ratio 2 on integer levels).
    """
    rng = np.random.default_rng(spec.seed)
    t = np.arange(spec.days, dtype=float)
    series = {}
    features = {}
    fips_codes = [_synth_fips(i) for i in range(spec.counties)]
    for fips in fips_codes:
        base = _base_curve(spec, rng, t)
        if spec.sigma > 0:
            base = base * np.exp(spec.sigma * rng.standard_normal(spec.days))
        values = np.floor(np.maximum.accumulate(np.maximum(base, 0.0))).astype(np.int64)
        series[fips] = DaySeries(fips=fips, start_day=SYNTH_START, cum_deaths=values)
        features[fips] = {
            "population": float(rng.integers(10_000, 1_000_000)),
            "density": float(np.round(rng.uniform(10.0, 5000.0), 3)),
            "icu_beds": float(rng.integers(0, 500)),
        }
    adjacency = {}
    n = spec.counties
    if n >= 2:
        for i, fips in enumerate(fips_codes):
            neighbors = {fips_codes[(i - 1) % n], fips_codes[(i + 1) % n]} - {fips}
            adjacency[fips] = neighbors
    return Panel(series, features=features, adjacency=adjacency)


@dataclass
class BacktestReport:
    """Aggregated scores per (predictor, horizon, loss) plus interval coverage."""

    scores: dict  # predictor -> {horizon -> {loss -> value}}
    coverage: dict  # horizon -> float | None
    n_scored: dict  # horizon -> scored forecasts per predictor
    n_intervals: dict  # horizon -> (covered-evaluable, provisional) counts
    metadata: dict = field(default_factory=dict)

    def to_doc(self):
        return {
            "scores": {
                pid: {str(h): dict(sorted(v.items())) for h, v in sorted(per_h.items())}
                for pid, per_h in sorted(self.scores.items())
            },
            "coverage": {str(h): v for h, v in sorted(self.coverage.items())},
            "n_scored": {str(h): v for h, v in sorted(self.n_scored.items())},
            "n_intervals": {str(h): list(v) for h, v in sorted(self.n_intervals.items())},
            "metadata": self.metadata,
        }

    def to_table(self):
        lines = []
        header = f"{'predictor':<12}{'horizon':>8}" + "".join(f"{n:>12}" for n in LOSS_NAMES)
        lines.append(header)
        lines.append("-" * len(header))
        for pid in SCORE_KEYS:
            for h in sorted(self.scores.get(pid, {})):
                row = self.scores[pid][h]
                lines.append(
                    f"{pid:<12}{h:>8}" + "".join(f"{row[n]:>12.4f}" for n in LOSS_NAMES)
                )
        lines.append("")
        for h in sorted(self.coverage):
            cov = self.coverage[h]
            n_eval, n_prov = self.n_intervals[h]
            shown = "n/a" if cov is None else f"{cov:.4f}"
            lines.append(
                f"coverage h={h}: {shown}  ({n_eval} intervals scored, {n_prov} provisional)"
            )
        return "\n".join(lines) + "\n"


def save_report(report, json_path, table_path=None):
    Path(json_path).write_text(
        json.dumps(report.to_doc(), sort_keys=True, indent=2), encoding="utf-8"
    )
    if table_path:
        Path(table_path).write_text(report.to_table(), encoding="utf-8")


def rolling_backtest(panel, start_day, end_day, horizons, fit_config=None, ens_config=None):
    """Replay [start_day, end_day] as forecast origins and aggregate scores.

    Day indices are panel-relative (0 = panel start). Every origin must leave
    room for a full fit window before it and for its targets inside the
    panel, so each forecast in range gets scored; otherwise
    :class:`InsufficientWarmup`.
    """
    fit_config = fit_config or FitConfig()
    ens_config = ens_config or EnsembleConfig()
    horizons = sorted(set(horizons))
    max_h = max(horizons)
    if start_day < fit_config.k_fit - 1:
        raise InsufficientWarmup(
            f"start day {start_day} leaves fewer than k_fit={fit_config.k_fit} days of history"
        )
    if end_day < start_day:
        raise InsufficientWarmup(f"empty origin range {start_day}..{end_day}")
    if end_day + max_h > panel.n_days - 1:
        raise InsufficientWarmup(
            f"end day {end_day} + horizon {max_h} runs past the panel "
            f"({panel.n_days} days); forecasts could never be scored"
        )

    state = new_state(horizons, ens_config)
    all_rows = []
    scored = []
    for origin in range(start_day, end_day + 1):
        rows, day_scored = advance(panel, state, origin, horizons, fit_config)
        all_rows.extend(rows)
        scored.extend(day_scored)
    scored.extend(score_through(panel, state, end_day + max_h))

    by_key = {}
    for rec in scored:
        by_key.setdefault((rec.predictor, rec.horizon), []).append(rec)
    scores = {}
    n_scored = {h: {} for h in horizons}
    for (pid, h), recs in by_key.items():
        scores.setdefault(pid, {})[h] = losses(
            [r.predicted for r in recs], [r.actual for r in recs]
        )
        n_scored[h][pid] = len(recs)

    cov = {}
    n_intervals = {}
    actuals = {}
    for row in all_rows:
        target = row.as_of + row.horizon
        actuals[(row.fips, target)] = float(panel.last_observed(row.fips, target))
    for h in horizons:
        evaluable = [r.interval for r in all_rows if r.horizon == h and not r.interval.provisional]
        provisional = sum(1 for r in all_rows if r.horizon == h and r.interval.provisional)
        n_intervals[h] = (len(evaluable), provisional)
        cov[h] = coverage(evaluable, actuals) if evaluable else None

    report = BacktestReport(
        scores=scores,
        coverage=cov,
        n_scored=n_scored,
        n_intervals=n_intervals,
        metadata={
            "start_date": day_to_iso(panel.start_day + start_day),
            "end_date": day_to_iso(panel.start_day + end_day),
            "origin_days": end_day - start_day + 1,
            "county_count": len(panel.counties),
            "horizons": horizons,
            "fit": {
                "k_fit": fit_config.k_fit,
                "log_shift": fit_config.log_shift,
                "min_points": fit_config.min_points,
            },
            "ensemble": {"mu": ens_config.mu, "c": ens_config.c, "loss": ens_config.loss},
        },
    )
    return report


def grid_search(panel, start_day, end_day, horizons, mu_values, c_values, k_values):
    """Backtest every (mu, c, k_fit) combination; no optimization, just the grid."""
    results = []
    for mu in mu_values:
        for c in c_values:
            for k in k_values:
                fit = FitConfig(k_fit=k)
                ens = EnsembleConfig(mu=mu, c=c)
                report = rolling_backtest(panel, start_day, end_day, horizons, fit, ens)
                results.append({"mu": mu, "c": c, "k_fit": k, "report": report})
    return results
