"""County panel model: FIPS identity, cumulative day series, the aligned panel
container, monotonicity repair, and windowing.

Dates are handled as proleptic-Gregorian ordinal day numbers internally
(``datetime.date.toordinal``); ISO-8601 strings appear only at interfaces.
"""

import datetime as dt
import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from .errors import BadFips, NegativeCount, OrphanCounty, WindowOutOfRange

PANEL_DOC_VERSION = 1

# County-equivalent territory prefixes outside the 01-56 state range.
TERRITORY_PREFIXES = frozenset({"60", "66", "69", "72", "78"})


def validate_fips(code, row=None):
    """Return ``code`` if it is a well-formed 5-digit county FIPS string.

    The state prefix must fall in 01-56 or be a whitelisted territory code.
    Raises :class:`BadFips` otherwise.
    """
    if not isinstance(code, str) or len(code) != 5 or not code.isdigit():
        raise BadFips(code, row)
    prefix = code[:2]
    if not (1 <= int(prefix) <= 56 or prefix in TERRITORY_PREFIXES):
        raise BadFips(code, row)
    return code


def day_from_iso(text):
    """ISO-8601 date string -> ordinal day number."""
    return dt.date.fromisoformat(text).toordinal()


def day_to_iso(day):
    """Ordinal day number -> ISO-8601 date string."""
    return dt.date.fromordinal(day).isoformat()


class MonotoneFixPolicy(Enum):
    """How to repair cumulative counts that violate their invariants.

    RUNNING_MAX replaces dips (and clamps negatives to zero) with the running
    maximum seen so far; STRICT repairs dips the same way but refuses negative
    entries.
    """

    RUNNING_MAX = "running_max"
    STRICT = "strict"


@dataclass(frozen=True)
class Repair:
    """One value replaced during cleaning."""

    index: int
    old: int
    new: int
    kind: str

    def to_record(self, **context):
        rec = {"index": self.index, "old": self.old, "new": self.new, "kind": self.kind}
        rec.update(context)
        return rec


def validate_cumulative(raw, policy=MonotoneFixPolicy.RUNNING_MAX):
    """Clean a raw cumulative count sequence.

    Returns ``(cleaned, repairs)`` where ``cleaned`` is a read-only int64
    array that is non-negative and non-decreasing, and ``repairs`` lists every
    replaced entry as a :class:`Repair`. The operation is idempotent: cleaning
    an already-clean sequence returns it unchanged with no repairs.

    Under RUNNING_MAX, ``cleaned[i] == max(0, max(raw[0..i]))``. Under STRICT
    a negative entry raises :class:`NegativeCount` instead of being clamped.
    """
    values = [int(v) for v in raw]
    if not values:
        raise ValueError("cumulative series must be non-empty")
    repairs = []
    out = np.empty(len(values), dtype=np.int64)
    running = 0
    for i, v in enumerate(values):
        if v < 0:
            if policy is MonotoneFixPolicy.STRICT:
                raise NegativeCount(i, v)
            fixed = running
            repairs.append(Repair(i, v, int(fixed), "negative"))
        elif v < running:
            fixed = running
            repairs.append(Repair(i, v, int(fixed), "dip"))
        else:
            fixed = v
            running = v
        out[i] = fixed
    out.flags.writeable = False
    return out, repairs


def _as_count_array(values, name):
    arr = np.asarray(values, dtype=np.int64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 1-d sequence")
    if (arr < 0).any():
        raise ValueError(f"{name} contains negative entries")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class DaySeries:
    """Cleaned cumulative counts for one county, one value per calendar day.

    ``start_day`` is the ordinal day of the first entry; entry ``i`` belongs
    to day ``start_day + i``. ``cum_deaths`` must already be non-decreasing
    (run :func:`validate_cumulative` first).
    """

    fips: str
    start_day: int
    cum_deaths: np.ndarray
    cum_cases: np.ndarray | None = None

    def __post_init__(self):
        validate_fips(self.fips)
        deaths = _as_count_array(self.cum_deaths, "cum_deaths")
        if (np.diff(deaths) < 0).any():
            raise ValueError(f"county {self.fips}: cum_deaths is not non-decreasing")
        object.__setattr__(self, "cum_deaths", deaths)
        if self.cum_cases is not None:
            cases = _as_count_array(self.cum_cases, "cum_cases")
            if len(cases) != len(deaths):
                raise ValueError(f"county {self.fips}: cum_cases length mismatch")
            object.__setattr__(self, "cum_cases", cases)

    @property
    def n_days(self):
        return len(self.cum_deaths)

    @property
    def end_day(self):
        return self.start_day + self.n_days - 1


def window(series, end_day, k):
    """Last ``k`` values ending at index ``end_day`` (inclusive, 0-based).

    Accepts a :class:`DaySeries` (its ``cum_deaths``) or a plain array.
    Returns a read-only view; raises :class:`WindowOutOfRange` if the slice
    does not fit.
    """
    values = series.cum_deaths if isinstance(series, DaySeries) else np.asarray(series)
    if k < 1 or k > end_day + 1 or end_day >= len(values):
        raise WindowOutOfRange(k, end_day)
    view = values[end_day - k + 1 : end_day + 1]
    if view.flags.writeable:
        view = view.copy()
        view.flags.writeable = False
    return view


def validate_horizon(h):
    """Days-ahead horizon; must be an integer in 1..21."""
    h = int(h)
    if not 1 <= h <= 21:
        raise ValueError(f"horizon must be in 1..21, got {h}")
    return h


class Panel:
    """Immutable container of county series aligned to one shared calendar.

    All series must share the same ``start_day`` and length. Adjacency must
    be symmetric, and every county referenced by ``features`` or
    ``adjacency`` must have a series (otherwise :class:`OrphanCounty`).
    """

    def __init__(self, series, features=None, adjacency=None):
        if not series:
            raise ValueError("panel needs at least one county series")
        starts = {s.start_day for s in series.values()}
        lengths = {s.n_days for s in series.values()}
        if len(starts) != 1 or len(lengths) != 1:
            raise ValueError("all panel series must span the identical date range")
        self._series = dict(series)
        self._start_day = starts.pop()
        self._n_days = lengths.pop()

        features = {f: dict(v) for f, v in (features or {}).items()}
        for fips in features:
            if fips not in self._series:
                raise OrphanCounty(fips, "static_features")
        self._features = features

        adjacency = {f: frozenset(n) for f, n in (adjacency or {}).items()}
        for fips, neighbors in adjacency.items():
            if fips not in self._series:
                raise OrphanCounty(fips, "adjacency")
            for n in neighbors:
                if n not in self._series:
                    raise OrphanCounty(n, "adjacency")
                if fips not in adjacency.get(n, frozenset()):
                    raise ValueError(f"adjacency is not symmetric: {fips} -> {n}")
        self._adjacency = adjacency
        self._counties = tuple(sorted(self._series))

    @property
    def counties(self):
        return self._counties

    @property
    def start_day(self):
        return self._start_day

    @property
    def n_days(self):
        return self._n_days

    @property
    def end_day(self):
        return self._start_day + self._n_days - 1

    @property
    def series(self):
        return self._series

    @property
    def features(self):
        return self._features

    @property
    def adjacency(self):
        return self._adjacency

    def deaths(self, fips):
        return self._series[fips].cum_deaths

    def last_observed(self, fips, day_index):
        """Cumulative death count for ``fips`` at panel day index ``day_index``."""
        return int(self._series[fips].cum_deaths[day_index])

    def neighbors(self, fips):
        return self._adjacency.get(fips, frozenset())

    def neighbor_deaths(self, fips):
        """Element-wise sum of the neighbouring counties' death series."""
        total = np.zeros(self._n_days, dtype=np.int64)
        for n in self.neighbors(fips):
            total += self._series[n].cum_deaths
        return total

    def feature(self, fips, name, default=0.0):
        return float(self._features.get(fips, {}).get(name, default))


def panel_to_doc(panel):
    """Serialize a panel to a JSON-compatible document (lossless)."""
    counties = {}
    for fips in panel.counties:
        s = panel.series[fips]
        entry = {"cum_deaths": [int(v) for v in s.cum_deaths]}
        if s.cum_cases is not None:
            entry["cum_cases"] = [int(v) for v in s.cum_cases]
        counties[fips] = entry
    return {
        "version": PANEL_DOC_VERSION,
        "start_date": day_to_iso(panel.start_day),
        "n_days": panel.n_days,
        "counties": counties,
        "static_features": {f: dict(sorted(v.items())) for f, v in sorted(panel.features.items())},
        "adjacency": {f: sorted(n) for f, n in sorted(panel.adjacency.items())},
    }


def panel_from_doc(doc):
    if doc.get("version") != PANEL_DOC_VERSION:
        raise ValueError(f"unsupported panel document version {doc.get('version')!r}")
    start_day = day_from_iso(doc["start_date"])
    series = {}
    for fips, entry in doc["counties"].items():
        series[fips] = DaySeries(
            fips=fips,
            start_day=start_day,
            cum_deaths=entry["cum_deaths"],
            cum_cases=entry.get("cum_cases"),
        )
    return Panel(series, features=doc.get("static_features"), adjacency=doc.get("adjacency"))


def save_panel(panel, path):
    Path(path).write_text(json.dumps(panel_to_doc(panel), sort_keys=True), encoding="utf-8")


def load_panel(path):
    return panel_from_doc(json.loads(Path(path).read_text(encoding="utf-8")))
