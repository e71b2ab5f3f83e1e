import numpy as np
import pytest

from countycast.model import DaySeries, Panel, day_from_iso

START = day_from_iso("2020-03-01")


def make_panel(series_values, features=None, adjacency=None, start_day=START):
    """Build a panel from {fips: [deaths...]} with optional features/adjacency."""
    series = {
        fips: DaySeries(fips=fips, start_day=start_day, cum_deaths=np.asarray(vals))
        for fips, vals in series_values.items()
    }
    return Panel(series, features=features, adjacency=adjacency)


def linear_values(intercept, slope, n):
    return [intercept + slope * t for t in range(n)]


def geometric_values(level, ratio, n, shift=1):
    """Exactly shifted-geometric integers: value + shift == level * ratio**t."""
    return [level * ratio**t - shift for t in range(n)]


@pytest.fixture
def three_county_panel():
    n = 20
    values = {
        "06001": linear_values(10, 3, n),
        "06003": geometric_values(2, 2, n),
        "06005": linear_values(5, 1, n),
    }
    features = {
        "06001": {"population": 500_000.0, "density": 1200.0, "icu_beds": 300.0},
        "06003": {"population": 80_000.0, "density": 150.0, "icu_beds": 40.0},
        "06005": {"population": 20_000.0, "density": 30.0, "icu_beds": 5.0},
    }
    adjacency = {
        "06001": {"06003"},
        "06003": {"06001", "06005"},
        "06005": {"06003"},
    }
    return make_panel(values, features, adjacency)
