"""Command-line surface: ingest, forecast, severity, backtest, export, sample.

Every command reads a TOML run config (``--config`` or the
``CLEP_FORECAST_CONFIG`` environment variable), writes only under the
configured output directory, and is idempotent for identical inputs.
Diagnostics go to stderr as line-delimited JSON; exit codes are stable:

    0 success            4 as-of date outside the panel range
    1 unexpected error   5 hospital source missing
    2 schema/config      6 insufficient warm-up for a backtest
    3 I/O                7 geometry file missing
"""

import csv
import json
import logging
import os
import sys
from pathlib import Path

import click

from . import errors as E
from .backtest import SynthSpec, generate_synthetic, rolling_backtest, save_report
from .ensemble import CLEP
from .ingest import ingest_run, load_run_config, write_jsonl
from .model import day_from_iso, day_to_iso, load_panel, save_panel
from .pipeline import load_state, new_state, run_origins, save_state
from .predictors import PREDICTOR_ORDER
from .report import (
    county_levels,
    export_geojson,
    figure_backtest_scores,
    render_figures,
    render_html,
)
from .severity import build_severity

logger = logging.getLogger("countycast")

EXIT_SCHEMA = 2
EXIT_IO = 3
EXIT_RANGE = 4
EXIT_NO_HOSPITALS = 5
EXIT_WARMUP = 6
EXIT_NO_GEOMETRY = 7

CONFIG_ENV = "CLEP_FORECAST_CONFIG"

FORECAST_COLUMNS = ["fips", "as_of", "horizon", "predictor", "value", "lower", "upper"]
SEVERITY_COLUMNS = [
    "hospital_id",
    "fips",
    "current_imputed",
    "predicted_imputed",
    "icu_beds",
    "score",
    "level",
]


class _JsonLineHandler(logging.Handler):
    def emit(self, record):
        line = json.dumps(
            {"level": record.levelname.lower(), "logger": record.name, "msg": record.getMessage()},
            sort_keys=True,
        )
        print(line, file=sys.stderr)


def _diagnostic(error, code):
    print(
        json.dumps(
            {"level": "error", "error": type(error).__name__, "detail": str(error), "exit": code},
            sort_keys=True,
        ),
        file=sys.stderr,
    )


_ERROR_EXITS = (
    ((E.SchemaMismatch, E.BadFips, E.ParseError, E.ConfigError, E.CalendarMismatch,
      E.OrphanCounty, E.UnknownCounty, E.DuplicateHospital, E.NonPositiveEmployees), EXIT_SCHEMA),
    ((FileNotFoundError, PermissionError, IsADirectoryError, OSError), EXIT_IO),
    ((E.InsufficientWarmup,), EXIT_WARMUP),
)


def _run(fn):
    try:
        fn()
    except SystemExit:
        raise
    except Exception as exc:  # map typed failures onto the documented exit codes
        for types, code in _ERROR_EXITS:
            if isinstance(exc, types):
                _diagnostic(exc, code)
                raise SystemExit(code) from exc
        _diagnostic(exc, 1)
        raise


def _load_config(config_path):
    path = config_path or os.environ.get(CONFIG_ENV)
    if not path:
        raise E.ConfigError(f"no config: pass --config or set {CONFIG_ENV}")
    return load_run_config(path)


def _out_dir(config, out_override):
    out = Path(out_override or config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


class _advisory_lock:
    """Advisory lock: concurrent runs against one output directory are unsupported."""

    def __init__(self, out_dir):
        self.path = Path(out_dir) / ".countycast.lock"
        self.owned = False

    def __enter__(self):
        if self.path.exists():
            logger.warning("lock file %s exists; concurrent runs are unsupported", self.path)
        else:
            self.path.write_text(str(os.getpid()), encoding="utf-8")
            self.owned = True
        return self

    def __exit__(self, *exc):
        if self.owned:
            self.path.unlink(missing_ok=True)
        return False


def _panel_day(panel, as_of_date):
    day = day_from_iso(as_of_date) - panel.start_day
    if not 0 <= day <= panel.n_days - 1:
        _diagnostic(
            ValueError(
                f"as-of date {as_of_date} outside panel range "
                f"{day_to_iso(panel.start_day)}..{day_to_iso(panel.end_day)}"
            ),
            EXIT_RANGE,
        )
        raise SystemExit(EXIT_RANGE)
    return day


def _fmt(value):
    return repr(float(value))


@click.group()
@click.option("--quiet", is_flag=True, help="Suppress informational logging.")
def main(quiet):
    """County-level death forecasting pipeline."""
    handler = _JsonLineHandler()
    root = logging.getLogger("countycast")
    root.handlers.clear()
    root.addHandler(handler)
    root.setLevel(logging.WARNING if quiet else logging.INFO)


@main.command()
@click.option("--config", "config_path", type=click.Path(), help="Run config (TOML).")
@click.option("--out", "out_override", type=click.Path(), help="Override output directory.")
def ingest(config_path, out_override):
    """Load, merge, and clean sources into a panel artifact."""

    def body():
        config = _load_config(config_path)
        out = _out_dir(config, out_override)
        with _advisory_lock(out):
            panel, hospitals, repairs, merges = ingest_run(config)
            save_panel(panel, out / "panel.json")
            write_jsonl(out / "repairs.jsonl", repairs)
            write_jsonl(out / "merges.jsonl", merges)
            logger.info(
                "panel: %d counties x %d days, %d repairs, %d merge decisions",
                len(panel.counties),
                panel.n_days,
                len(repairs),
                len(merges),
            )
            if hospitals is not None:
                logger.info("hospitals: %d validated", len(hospitals))

    _run(body)


def _write_forecast_csv(path, rows, panel_start_day):
    order = [p.value for p in PREDICTOR_ORDER] + [CLEP]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(FORECAST_COLUMNS)
        for row in sorted(rows, key=lambda r: (r.fips, r.horizon)):
            date = day_to_iso(panel_start_day + row.as_of)
            for pid in order:
                if pid == CLEP:
                    w.writerow(
                        [row.fips, date, row.horizon, pid, _fmt(row.values[pid]),
                         _fmt(row.interval.lower), _fmt(row.interval.upper)]
                    )
                else:
                    w.writerow([row.fips, date, row.horizon, pid, _fmt(row.values[pid]), "", ""])


def _forecast_docs(rows):
    by_county = {}
    for row in sorted(rows, key=lambda r: (r.fips, r.horizon)):
        entry = {
            "values": {k: row.values[k] for k in sorted(row.values)},
            "interval": {
                "lower": row.interval.lower,
                "upper": row.interval.upper,
                "delta": row.interval.delta,
                "provisional": row.interval.provisional,
            },
        }
        by_county.setdefault(row.fips, {})[str(row.horizon)] = entry
    return by_county


@main.command()
@click.option("--config", "config_path", type=click.Path(), help="Run config (TOML).")
@click.option("--as-of", "as_of_date", required=True, help="Forecast origin date (ISO).")
@click.option("--horizon", "horizons", type=int, multiple=True, help="Days ahead (repeatable).")
@click.option("--state", "state_path", type=click.Path(), help="Prior pipeline state to resume.")
@click.option("--out", "out_override", type=click.Path(), help="Override output directory.")
def forecast(config_path, as_of_date, horizons, state_path, out_override):
    """Forecast all counties at --as-of: baselines, combined value, intervals."""

    def body():
        config = _load_config(config_path)
        out = _out_dir(config, out_override)
        with _advisory_lock(out):
            panel_path = out / "panel.json"
            if not panel_path.exists():
                raise FileNotFoundError(f"panel artifact {panel_path} missing; run ingest first")
            panel = load_panel(panel_path)
            as_of = _panel_day(panel, as_of_date)
            use_horizons = tuple(horizons) or config.horizons
            if state_path:
                state = load_state(state_path)
                missing = set(use_horizons) - set(state.ensembles)
                if missing:
                    raise E.ConfigError(f"resumed state lacks horizons {sorted(missing)}")
                first = (state.last_origin if state.last_origin is not None else -1) + 1
                if first > as_of:
                    _diagnostic(
                        ValueError(
                            f"state already covers day {state.last_origin}; as-of must be later"
                        ),
                        EXIT_RANGE,
                    )
                    raise SystemExit(EXIT_RANGE)
            else:
                state = new_state(use_horizons, config.ensemble)
                first = min(config.fit.k_fit - 1, as_of)
            rows, _ = run_origins(panel, state, range(first, as_of + 1), use_horizons, config.fit)
            if "csv" in config.formats:
                _write_forecast_csv(out / "forecasts.csv", rows, panel.start_day)
            if "json" in config.formats:
                doc = {
                    "as_of": as_of_date,
                    "horizons": sorted(use_horizons),
                    "counties": _forecast_docs(rows),
                }
                (out / "forecasts.json").write_text(
                    json.dumps(doc, sort_keys=True), encoding="utf-8"
                )
            save_state(state, out / "state.json")
            logger.info(
                "forecast %s: %d counties, horizons %s", as_of_date, len(panel.counties),
                sorted(use_horizons),
            )

    _run(body)


def _read_forecast_csv(path):
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        return list(reader)


def _clep_rows(rows, as_of_date, horizon):
    out = {}
    for r in rows:
        if (
            r["predictor"] == CLEP
            and int(r["horizon"]) == horizon
            and r["as_of"] == as_of_date
        ):
            out[r["fips"]] = (float(r["value"]), float(r["lower"]), float(r["upper"]))
    return out


SEVERITY_HORIZON = 5


@main.command()
@click.option("--config", "config_path", type=click.Path(), help="Run config (TOML).")
@click.option("--as-of", "as_of_date", required=True, help="Date the forecasts were made (ISO).")
@click.option("--out", "out_override", type=click.Path(), help="Override output directory.")
def severity(config_path, as_of_date, out_override):
    """Impute 5-day forecasts to hospitals and assign severity tiers."""

    def body():
        config = _load_config(config_path)
        out = _out_dir(config, out_override)
        with _advisory_lock(out):
            hospital_sources = config.sources_of("hospitals")
            if not hospital_sources or not all(Path(s.path).exists() for s in hospital_sources):
                _diagnostic(E.ConfigError("no usable hospitals source"), EXIT_NO_HOSPITALS)
                raise SystemExit(EXIT_NO_HOSPITALS)
            panel = load_panel(out / "panel.json")
            as_of = _panel_day(panel, as_of_date)
            forecast_path = out / "forecasts.csv"
            if not forecast_path.exists():
                raise FileNotFoundError(f"{forecast_path} missing; run forecast first")
            clep5 = _clep_rows(_read_forecast_csv(forecast_path), as_of_date, SEVERITY_HORIZON)
            if not clep5:
                _diagnostic(
                    ValueError(f"no horizon-{SEVERITY_HORIZON} forecasts for {as_of_date}"),
                    EXIT_RANGE,
                )
                raise SystemExit(EXIT_RANGE)
            from .ingest import load_hospitals

            hospitals = []
            for desc in hospital_sources:
                hospitals.extend(load_hospitals(desc, panel))
            records, unassigned = build_severity(
                panel, {f: v[0] for f, v in clep5.items()}, hospitals, as_of
            )
            with (out / "severity.csv").open("w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh)
                w.writerow(SEVERITY_COLUMNS)
                for rec in records:
                    w.writerow(
                        [rec.hospital_id, rec.fips, _fmt(rec.current_imputed),
                         _fmt(rec.predicted_imputed), rec.icu_beds, rec.total, rec.level]
                    )
            doc = {
                "as_of": as_of_date,
                "horizon": SEVERITY_HORIZON,
                "records": [
                    {
                        "hospital_id": rec.hospital_id,
                        "fips": rec.fips,
                        "current_imputed": rec.current_imputed,
                        "predicted_imputed": rec.predicted_imputed,
                        "icu_beds": rec.icu_beds,
                        "sub_scores": list(rec.sub_scores),
                        "score": rec.total,
                        "level": rec.level,
                    }
                    for rec in records
                ],
                "unassigned_counties": unassigned,
            }
            (out / "severity.json").write_text(json.dumps(doc, sort_keys=True), encoding="utf-8")
            if unassigned:
                logger.info("%d counties have no hospitals: %s", len(unassigned), unassigned)
            logger.info("severity: %d hospitals scored", len(records))

    _run(body)


@main.command()
@click.option("--config", "config_path", type=click.Path(), help="Run config (TOML).")
@click.option("--out", "out_override", type=click.Path(), help="Override output directory.")
@click.option("--format", "formats", help="Comma-separated subset of geojson,html.")
def export(config_path, out_override, formats):
    """Export the map GeoJSON and the self-contained HTML report with figures."""

    def body():
        config = _load_config(config_path)
        out = _out_dir(config, out_override)
        with _advisory_lock(out):
            wanted = tuple(formats.split(",")) if formats else config.formats
            forecast_path = out / "forecasts.csv"
            if not forecast_path.exists():
                raise FileNotFoundError(f"{forecast_path} missing; run forecast first")
            forecast_rows = _read_forecast_csv(forecast_path)
            as_of_date = max(r["as_of"] for r in forecast_rows)
            if not config.geometry or not Path(config.geometry).exists():
                _diagnostic(
                    E.ConfigError(f"geometry file {config.geometry!r} missing"), EXIT_NO_GEOMETRY
                )
                raise SystemExit(EXIT_NO_GEOMETRY)
            geometry = json.loads(Path(config.geometry).read_text(encoding="utf-8"))

            severity_records = []
            severity_path = out / "severity.json"
            if severity_path.exists():
                from .severity import SeverityRecord

                doc = json.loads(severity_path.read_text(encoding="utf-8"))
                for rec in doc["records"]:
                    severity_records.append(
                        SeverityRecord(
                            hospital_id=rec["hospital_id"],
                            fips=rec["fips"],
                            current_imputed=rec["current_imputed"],
                            predicted_imputed=rec["predicted_imputed"],
                            icu_beds=rec["icu_beds"],
                            sub_scores=tuple(rec["sub_scores"]),
                            total=rec["score"],
                            level=rec["level"],
                        )
                    )
            clep5 = _clep_rows(forecast_rows, as_of_date, SEVERITY_HORIZON)
            levels = county_levels(severity_records)
            geojson_doc, skipped = export_geojson(geometry, clep5, levels)

            mean_weights = None
            state_path = out / "state.json"
            if state_path.exists():
                state = load_state(state_path)
                ens = state.ensembles.get(SEVERITY_HORIZON)
                if ens is not None and clep5:
                    totals = {}
                    for fips in clep5:
                        for pid, w in ens.weights(fips).items():
                            totals[pid] = totals.get(pid, 0.0) + w
                    mean_weights = {pid: v / len(clep5) for pid, v in totals.items()}
            if "geojson" in wanted:
                (out / "map.geojson").write_text(
                    json.dumps(geojson_doc, sort_keys=True), encoding="utf-8"
                )
            parsed = [
                {
                    "fips": r["fips"],
                    "horizon": int(r["horizon"]),
                    "predictor": r["predictor"],
                    "value": float(r["value"]),
                    "lower": float(r["lower"]) if r["lower"] else None,
                    "upper": float(r["upper"]) if r["upper"] else None,
                }
                for r in forecast_rows
                if r["as_of"] == as_of_date
            ]
            figure_paths = render_figures(
                out,
                [p for p in parsed if p["predictor"] == CLEP],
                severity_records,
                SEVERITY_HORIZON,
                mean_weights,
            )
            if "html" in wanted:
                render_html(
                    out / "report.html",
                    as_of_date,
                    parsed,
                    severity_records,
                    figure_paths,
                    geojson_doc if "geojson" in wanted else None,
                    mean_weights,
                )
            logger.info(
                "export: %d map features, %d skipped counties, %d figures",
                len(geojson_doc["features"]),
                len(skipped),
                len(figure_paths),
            )

    _run(body)


@main.command()
@click.option("--config", "config_path", type=click.Path(), help="Run config (TOML).")
@click.option("--out", "out_override", type=click.Path(), help="Override output directory.")
@click.option("--start", "start_date", help="First origin date (ISO); panel mode.")
@click.option("--end", "end_date", help="Last origin date (ISO); panel mode.")
@click.option("--horizon", "horizons", type=int, multiple=True, help="Days ahead (repeatable).")
@click.option("--synthetic", "regime", type=click.Choice(["linear", "exponential", "logistic", "switching"]),
              help="Backtest a synthetic panel of this regime instead of the ingested panel.")
@click.option("--counties", type=int, default=20, show_default=True)
@click.option("--days", type=int, default=40, show_default=True)
@click.option("--sigma", type=float, default=0.1, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
def backtest(config_path, out_override, start_date, end_date, horizons, regime, counties, days,
             sigma, seed):
    """Rolling-origin backtest: fit only on the past, score as days arrive."""

    def body():
        config = _load_config(config_path)
        out = _out_dir(config, out_override)
        with _advisory_lock(out):
            use_horizons = tuple(horizons) or config.horizons
            if regime:
                panel = generate_synthetic(
                    SynthSpec(regime=regime, counties=counties, days=days, sigma=sigma, seed=seed)
                )
            else:
                panel = load_panel(out / "panel.json")
            max_h = max(use_horizons)
            start = (
                day_from_iso(start_date) - panel.start_day
                if start_date
                else config.fit.k_fit - 1
            )
            end = (
                day_from_iso(end_date) - panel.start_day
                if end_date
                else panel.n_days - 1 - max_h
            )
            report = rolling_backtest(panel, start, end, use_horizons, config.fit, config.ensemble)
            save_report(report, out / "backtest.json", out / "backtest.txt")
            fig_dir = out / "figures"
            fig_dir.mkdir(parents=True, exist_ok=True)
            figure_backtest_scores(report, fig_dir / "backtest_scores.png")
            click.echo(report.to_table(), nl=False)

    _run(body)


@main.command()
@click.option("--out", "out_dir", type=click.Path(), required=True, help="Target directory.")
@click.option("--seed", type=int, default=2020, show_default=True)
def sample(out_dir, seed):
    """Write the bundled 50-county sample dataset and its run config."""

    def body():
        from .sample import write_sample_dataset

        paths = write_sample_dataset(out_dir, seed)
        logger.info("sample dataset written under %s", out_dir)
        click.echo(str(paths["config"]))

    _run(body)


if __name__ == "__main__":
    main()
