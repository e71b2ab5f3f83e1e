"""File-based loading, merging, and cleaning of county data sources.

All sources are long-form UTF-8 CSV with a required header row:

* deaths_cases:    ``fips,date,cum_deaths[,cum_cases]``
* static_features: ``fips,feature,value``
* hospitals:       ``hospital_id,fips,employees,icu_beds``
* adjacency:       ``fips_a,fips_b`` (one edge per row)

Every cleaned value is traceable to a (source, row) pair or to a logged
repair; repair and merge logs are plain dicts ready for JSON-lines output.
"""

import csv
import json
import logging
from dataclasses import dataclass
from pathlib import Path

from .errors import (
    CalendarMismatch,
    ConfigError,
    DuplicateHospital,
    NonPositiveEmployees,
    ParseError,
    SchemaMismatch,
    UnknownCounty,
)
from .model import (
    DaySeries,
    MonotoneFixPolicy,
    Panel,
    day_from_iso,
    day_to_iso,
    validate_cumulative,
    validate_fips,
    validate_horizon,
)

logger = logging.getLogger(__name__)

SOURCE_KINDS = ("deaths_cases", "static_features", "hospitals", "adjacency")


@dataclass(frozen=True)
class SourceDescriptor:
    """One input file: what it holds and how conflicts against peers resolve."""

    name: str
    path: str
    kind: str
    priority: int = 0
    url: str | None = None

    def __post_init__(self):
        if self.kind not in SOURCE_KINDS:
            raise ConfigError(f"source {self.name!r}: unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Hospital:
    id: str
    fips: str
    employees: int
    icu_beds: int


def fetch(desc):
    """Resolve a descriptor to a local file path.

    Only the file backend is implemented; descriptors carrying a URL mark a
    remote-fetch boundary that callers must satisfy out of band.
    """
    if desc.url:
        raise NotImplementedError(
            f"source {desc.name!r}: remote fetch ({desc.url}) is not implemented; "
            "download the file and point `path` at it"
        )
    return Path(desc.path)


def _read_csv(desc, expected, optional=()):
    path = fetch(desc)
    if not path.exists():
        raise FileNotFoundError(f"source {desc.name!r}: {path} does not exist")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaMismatch(path, "file is empty, expected a header row") from None
        header = [h.strip() for h in header]
        required = list(expected)
        if header[: len(required)] != required:
            raise SchemaMismatch(
                path, f"expected columns {required + list(optional)}, found {header}"
            )
        extras = header[len(required) :]
        for col in extras:
            if col not in optional:
                raise SchemaMismatch(path, f"unexpected column {col!r}")
        rows = [(i + 2, row) for i, row in enumerate(reader) if row and any(c.strip() for c in row)]
    return path, header, rows


def _parse_int(text, row, column, minimum=None):
    try:
        value = int(text)
    except (TypeError, ValueError):
        raise ParseError(row, column, f"not an integer: {text!r}") from None
    if minimum is not None and value < minimum:
        raise ParseError(row, column, f"must be >= {minimum}, got {value}")
    return value


def load_counties(desc, policy=MonotoneFixPolicy.RUNNING_MAX):
    """Load one deaths_cases source into cleaned per-county series.

    Returns ``(series_by_fips, repair_log)``. Interior calendar gaps are
    forward-filled with the last value; dips are repaired per ``policy``.
    """
    path, header, rows = _read_csv(desc, ["fips", "date", "cum_deaths"], optional=("cum_cases",))
    has_cases = "cum_cases" in header
    by_fips = {}
    repair_log = []
    for rowno, row in rows:
        if len(row) < 3:
            raise ParseError(rowno, "cum_deaths", "too few fields")
        fips = validate_fips(row[0].strip(), row=rowno)
        try:
            day = day_from_iso(row[1].strip())
        except ValueError:
            raise ParseError(rowno, "date", f"not an ISO date: {row[1]!r}") from None
        deaths = _parse_int(row[2].strip(), rowno, "cum_deaths")
        cases = None
        if has_cases and len(row) > 3 and row[3].strip():
            cases = _parse_int(row[3].strip(), rowno, "cum_cases")
        days = by_fips.setdefault(fips, {})
        if day in days:
            repair_log.append(
                {
                    "kind": "duplicate_row",
                    "source": desc.name,
                    "fips": fips,
                    "date": day_to_iso(day),
                    "old": days[day][0],
                    "new": deaths,
                }
            )
        days[day] = (deaths, cases)

    series = {}
    for fips, days in by_fips.items():
        start, end = min(days), max(days)
        deaths_raw, cases_raw = [], []
        last = (0, 0)
        for day in range(start, end + 1):
            if day not in days:
                repair_log.append(
                    {
                        "kind": "gap_fill",
                        "source": desc.name,
                        "fips": fips,
                        "date": day_to_iso(day),
                        "old": None,
                        "new": last[0],
                    }
                )
                days[day] = last
            last = days[day]
            deaths_raw.append(last[0])
            cases_raw.append(last[1])
        cleaned, repairs = validate_cumulative(deaths_raw, policy)
        for r in repairs:
            repair_log.append(
                r.to_record(source=desc.name, fips=fips, field="cum_deaths", date=day_to_iso(start + r.index))
            )
        cases = None
        if has_cases and any(c is not None for c in cases_raw):
            filled = [c if c is not None else 0 for c in cases_raw]
            cases, case_repairs = validate_cumulative(filled, MonotoneFixPolicy.RUNNING_MAX)
            for r in case_repairs:
                repair_log.append(
                    r.to_record(source=desc.name, fips=fips, field="cum_cases", date=day_to_iso(start + r.index))
                )
        series[fips] = DaySeries(fips=fips, start_day=start, cum_deaths=cleaned, cum_cases=cases)
    return series, repair_log


def merge_sources(primary, secondary, priorities):
    """Merge two per-county series maps; the higher-priority value wins per day.

    ``priorities`` is ``(primary_priority, secondary_priority)``. Counties
    present in only one source pass through. Returns ``(merged, decisions)``
    where each decision logs a conflicting (county, day). Raises
    :class:`CalendarMismatch` when one county's two ranges neither overlap nor
    touch, since no contiguous merged series exists.
    """
    p_pri, s_pri = priorities
    merged = {}
    decisions = []
    for fips in sorted(set(primary) | set(secondary)):
        a, b = primary.get(fips), secondary.get(fips)
        if a is None or b is None:
            merged[fips] = a or b
            continue
        if a.start_day > b.end_day + 1 or b.start_day > a.end_day + 1:
            raise CalendarMismatch(fips, "source date ranges are disjoint and cannot be aligned")
        hi, lo = (a, b) if p_pri >= s_pri else (b, a)
        hi_name, lo_name = ("primary", "secondary") if hi is a else ("secondary", "primary")
        start = min(a.start_day, b.start_day)
        end = max(a.end_day, b.end_day)
        deaths, cases = [], []

        def value_at(s, day):
            if s.start_day <= day <= s.end_day:
                i = day - s.start_day
                c = None if s.cum_cases is None else int(s.cum_cases[i])
                return int(s.cum_deaths[i]), c
            return None

        for day in range(start, end + 1):
            hv, lv = value_at(hi, day), value_at(lo, day)
            pick = hv if hv is not None else lv
            if hv is not None and lv is not None and hv[0] != lv[0]:
                decisions.append(
                    {
                        "fips": fips,
                        "date": day_to_iso(day),
                        "kept": hi_name,
                        "kept_value": hv[0],
                        "dropped": lo_name,
                        "dropped_value": lv[0],
                    }
                )
            deaths.append(pick[0])
            cases.append(pick[1])
        # Re-validate: splicing two monotone ranges can reintroduce dips.
        cleaned, repairs = validate_cumulative(deaths)
        for r in repairs:
            decisions.append(r.to_record(fips=fips, field="cum_deaths", kind="merge_" + r.kind))
        case_arr = None
        if any(c is not None for c in cases):
            case_arr, _ = validate_cumulative([c if c is not None else 0 for c in cases])
        merged[fips] = DaySeries(fips=fips, start_day=start, cum_deaths=cleaned, cum_cases=case_arr)
    return merged, decisions


def load_static_features(desc):
    """Load ``fips,feature,value`` rows into a nested mapping."""
    _, _, rows = _read_csv(desc, ["fips", "feature", "value"])
    features = {}
    for rowno, row in rows:
        if len(row) < 3:
            raise ParseError(rowno, "value", "too few fields")
        fips = validate_fips(row[0].strip(), row=rowno)
        name = row[1].strip()
        if not name:
            raise ParseError(rowno, "feature", "empty feature name")
        try:
            value = float(row[2])
        except ValueError:
            raise ParseError(rowno, "value", f"not a number: {row[2]!r}") from None
        features.setdefault(fips, {})[name] = value
    return features


def load_adjacency(desc):
    """Load edges and symmetrize them; returns ``(adjacency, n_symmetrized)``.

    Public adjacency files commonly list each edge once, so a one-sided edge
    is completed with a warning rather than rejected.
    """
    _, _, rows = _read_csv(desc, ["fips_a", "fips_b"])
    adjacency = {}
    for rowno, row in rows:
        if len(row) < 2:
            raise ParseError(rowno, "fips_b", "too few fields")
        a = validate_fips(row[0].strip(), row=rowno)
        b = validate_fips(row[1].strip(), row=rowno)
        if a == b:
            continue
        adjacency.setdefault(a, set()).add(b)
    n_symmetrized = 0
    for a in list(adjacency):
        for b in adjacency[a]:
            if a not in adjacency.setdefault(b, set()):
                adjacency[b].add(a)
                n_symmetrized += 1
    if n_symmetrized:
        logger.warning("symmetrized %d one-sided adjacency edges from %s", n_symmetrized, desc.name)
    return adjacency, n_symmetrized


def load_hospitals(desc, panel):
    """Load hospital records, validating each against the panel."""
    _, _, rows = _read_csv(desc, ["hospital_id", "fips", "employees", "icu_beds"])
    hospitals = []
    seen = set()
    for rowno, row in rows:
        if len(row) < 4:
            raise ParseError(rowno, "icu_beds", "too few fields")
        hid = row[0].strip()
        if hid in seen:
            raise DuplicateHospital(hid)
        seen.add(hid)
        fips = validate_fips(row[1].strip(), row=rowno)
        if fips not in panel.series:
            raise UnknownCounty(hid, fips)
        employees = _parse_int(row[2].strip(), rowno, "employees")
        if employees < 1:
            raise NonPositiveEmployees(hid, employees)
        icu_beds = _parse_int(row[3].strip(), rowno, "icu_beds", minimum=0)
        hospitals.append(Hospital(id=hid, fips=fips, employees=employees, icu_beds=icu_beds))
    return hospitals


def build_panel(series, features=None, adjacency=None):
    """Align county series to a shared calendar and assemble the panel.

    The shared range is the union of the per-county ranges: leading days are
    zero-filled (a county reports zero cumulative deaths before its first
    report) and trailing days carry the last value forward. Both fills are
    logged. One-sided adjacency is symmetrized with a warning; features or
    adjacency naming a county with no series raise :class:`OrphanCounty`
    (via the :class:`Panel` constructor).
    """
    if not series:
        raise ValueError("no county series to build a panel from")
    start = min(s.start_day for s in series.values())
    end = max(s.end_day for s in series.values())
    n_days = end - start + 1
    repair_log = []
    aligned = {}
    for fips, s in sorted(series.items()):
        lead = s.start_day - start
        tail = end - s.end_day
        if lead == 0 and tail == 0:
            aligned[fips] = s
            continue
        deaths = list(s.cum_deaths)
        deaths = [0] * lead + deaths + [deaths[-1]] * tail
        cases = None
        if s.cum_cases is not None:
            cases = [0] * lead + list(s.cum_cases) + [int(s.cum_cases[-1])] * tail
        if lead:
            repair_log.append(
                {"kind": "leading_zero_fill", "fips": fips, "n_days": lead, "from": day_to_iso(start)}
            )
        if tail:
            repair_log.append(
                {"kind": "trailing_fill", "fips": fips, "n_days": tail, "value": deaths[-1]}
            )
        aligned[fips] = DaySeries(fips=fips, start_day=start, cum_deaths=deaths, cum_cases=cases)
        assert aligned[fips].n_days == n_days
    symmetric = None
    if adjacency:
        symmetric = {f: set(n) for f, n in adjacency.items()}
        n_fixed = 0
        for a in list(symmetric):
            for b in symmetric[a]:
                if a not in symmetric.setdefault(b, set()):
                    symmetric[b].add(a)
                    n_fixed += 1
        if n_fixed:
            logger.warning("symmetrized %d one-sided adjacency edges while building panel", n_fixed)
            repair_log.append({"kind": "adjacency_symmetrized", "n_edges": n_fixed})
    panel = Panel(aligned, features=features, adjacency=symmetric)
    return panel, repair_log


def write_jsonl(path, records):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


EXPORT_FORMATS = ("csv", "json", "geojson", "html")


@dataclass
class RunConfig:
    """One daily run: sources, model settings, horizons, and output layout."""

    sources: list
    fit: "FitConfig"
    ensemble: "EnsembleConfig"
    horizons: tuple = (5, 7, 14)
    out_dir: str = "out"
    formats: tuple = ("csv", "json", "geojson", "html")
    geometry: str | None = None

    def __post_init__(self):
        if not any(s.kind == "deaths_cases" for s in self.sources):
            raise ConfigError("config needs at least one deaths_cases source")
        names = [s.name for s in self.sources]
        if len(names) != len(set(names)):
            raise ConfigError("source names must be unique")
        for kind in SOURCE_KINDS:
            pris = [s.priority for s in self.sources if s.kind == kind]
            if len(pris) != len(set(pris)):
                raise ConfigError(f"{kind} sources must have distinct priorities")
        if not self.horizons:
            raise ConfigError("at least one horizon is required")
        self.horizons = tuple(validate_horizon(h) for h in self.horizons)
        bad = set(self.formats) - set(EXPORT_FORMATS)
        if bad:
            raise ConfigError(f"unknown export formats: {sorted(bad)}")
        self.formats = tuple(self.formats)

    def sources_of(self, kind):
        return sorted((s for s in self.sources if s.kind == kind), key=lambda s: -s.priority)


def load_run_config(path):
    """Parse a TOML run configuration file into a :class:`RunConfig`."""
    try:
        import tomllib
    except ModuleNotFoundError:  # Python 3.10
        import tomli as tomllib
    from .ensemble import EnsembleConfig
    from .predictors import FitConfig

    path = Path(path)
    with path.open("rb") as fh:
        doc = tomllib.load(fh)
    base = path.parent

    def resolve(p):
        p = Path(p)
        return str(p if p.is_absolute() else base / p)

    sources = []
    for entry in doc.get("source", []):
        try:
            sources.append(
                SourceDescriptor(
                    name=entry["name"],
                    path=resolve(entry["path"]),
                    kind=entry["kind"],
                    priority=int(entry.get("priority", 0)),
                    url=entry.get("url"),
                )
            )
        except KeyError as exc:
            raise ConfigError(f"source entry missing key {exc}") from None
    run = doc.get("run", {})
    fit = FitConfig(**doc.get("fit", {}))
    ensemble = EnsembleConfig(**doc.get("ensemble", {}))
    return RunConfig(
        sources=sources,
        fit=fit,
        ensemble=ensemble,
        horizons=tuple(run.get("horizons", (5, 7, 14))),
        out_dir=resolve(run.get("out_dir", "out")),
        formats=tuple(run.get("formats", EXPORT_FORMATS)),
        geometry=resolve(doc["geometry"]["path"]) if "geometry" in doc else None,
    )


def ingest_run(config, policy=MonotoneFixPolicy.RUNNING_MAX):
    """Load, merge, and clean every configured source into a panel.

    Returns ``(panel, hospitals, repair_log, merge_log)``; ``hospitals`` is
    ``None`` when no hospitals source is configured.
    """
    death_sources = config.sources_of("deaths_cases")
    repair_log = []
    merge_log = []
    merged = None
    merged_pri = None
    for desc in death_sources:
        series, repairs = load_counties(desc, policy)
        repair_log.extend(repairs)
        if merged is None:
            merged, merged_pri = series, desc.priority
        else:
            merged, decisions = merge_sources(merged, series, (merged_pri, desc.priority))
            merge_log.extend(decisions)
    features = {}
    for desc in config.sources_of("static_features"):
        for fips, vals in load_static_features(desc).items():
            slot = features.setdefault(fips, {})
            for name, value in vals.items():
                slot.setdefault(name, value)
    adjacency = {}
    for desc in config.sources_of("adjacency"):
        adj, _ = load_adjacency(desc)
        for fips, neighbors in adj.items():
            adjacency.setdefault(fips, set()).update(neighbors)
    panel, build_repairs = build_panel(merged, features or None, adjacency or None)
    repair_log.extend(build_repairs)
    hospitals = None
    hospital_sources = config.sources_of("hospitals")
    if hospital_sources:
        hospitals = []
        seen = set()
        for desc in hospital_sources:
            for h in load_hospitals(desc, panel):
                if h.id in seen:
                    raise DuplicateHospital(h.id)
                seen.add(h.id)
                hospitals.append(h)
    return panel, hospitals, repair_log, merge_log
