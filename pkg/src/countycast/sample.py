"""Deterministic sample dataset: 50 counties x 60 days, 120 hospitals.

Writes the full set of CSV sources, a county geometry file, and a ready-made
run configuration, so the whole pipeline can be exercised without external
data. A few dips are injected into the death series to exercise cleaning,
adjacency edges are listed one-sided to exercise symmetrization, and one
county is left out of the geometry file to exercise the export skip path.
"""

import csv
import json
from pathlib import Path

import numpy as np

N_COUNTIES = 50
N_DAYS = 60
START_DATE = "2020-03-01"

_REGIME_CYCLE = ("linear", "exponential", "logistic")


def _fips(i):
    return f"06{i + 1:03d}"


def _curve(rng, regime, t):
    if regime == "linear":
        return float(rng.integers(5, 40)) + float(rng.integers(1, 7)) * t
    if regime == "exponential":
        level = float(rng.integers(2, 12))
        rate = float(rng.uniform(0.04, 0.09))
        return level * np.exp(rate * t) - 1.0
    cap = float(rng.integers(150, 900))
    mid = float(rng.uniform(0.35, 0.65)) * len(t)
    rate = float(rng.uniform(0.12, 0.3))
    return cap / (1.0 + np.exp(-rate * (t - mid)))


def write_sample_dataset(out_dir, seed=2020):
    """Write the sample sources and run config under ``out_dir``; returns paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    t = np.arange(N_DAYS, dtype=float)
    dates = [
        (np.datetime64(START_DATE) + np.timedelta64(i, "D")).astype(str) for i in range(N_DAYS)
    ]
    counties = [_fips(i) for i in range(N_COUNTIES)]

    deaths = {}
    for i, fips in enumerate(counties):
        base = _curve(rng, _REGIME_CYCLE[i % 3], t)
        noisy = base * np.exp(0.05 * rng.standard_normal(N_DAYS))
        deaths[fips] = np.floor(np.maximum.accumulate(np.maximum(noisy, 0.0))).astype(int)

    deaths_path = out / "deaths.csv"
    with deaths_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fips", "date", "cum_deaths", "cum_cases"])
        for i, fips in enumerate(counties):
            series = deaths[fips].copy()
            # A reporting dip in every 7th county, mid-series: cleaned on load.
            if i % 7 == 3:
                series[30] = max(series[29] - 2, 0)
            for day, value in enumerate(series):
                w.writerow([fips, dates[day], int(value), int(value) * 20 + day])

    features_path = out / "features.csv"
    with features_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fips", "feature", "value"])
        for fips in counties:
            w.writerow([fips, "population", int(rng.integers(20_000, 2_000_000))])
            w.writerow([fips, "density", round(float(rng.uniform(20, 4000)), 2)])
            w.writerow([fips, "icu_beds", int(rng.integers(10, 400))])

    # 24 counties with 3 hospitals, 24 with 2, the last 2 with none: 120 total.
    hospitals_path = out / "hospitals.csv"
    with hospitals_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["hospital_id", "fips", "employees", "icu_beds"])
        hid = 0
        for i, fips in enumerate(counties):
            n = 3 if i < 24 else (2 if i < 48 else 0)
            for _ in range(n):
                hid += 1
                w.writerow(
                    [f"H{hid:04d}", fips, int(rng.integers(60, 5000)), int(rng.integers(0, 80))]
                )

    adjacency_path = out / "adjacency.csv"
    with adjacency_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["fips_a", "fips_b"])
        for i in range(N_COUNTIES):
            w.writerow([counties[i], counties[(i + 1) % N_COUNTIES]])

    # Simple grid squares; the last county is deliberately missing.
    geometry_path = out / "counties.geojson"
    features = []
    for i, fips in enumerate(counties[:-1]):
        x, y = (i % 10) * 1.0, (i // 10) * 1.0
        features.append(
            {
                "type": "Feature",
                "properties": {"fips": fips},
                "geometry": {
                    "type": "Polygon",
                    "coordinates": [
                        [[x, y], [x + 0.9, y], [x + 0.9, y + 0.9], [x, y + 0.9], [x, y]]
                    ],
                },
            }
        )
    geometry_path.write_text(
        json.dumps({"type": "FeatureCollection", "features": features}), encoding="utf-8"
    )

    config_path = out / "run.toml"
    config_path.write_text(
        """[run]
out_dir = "out"
horizons = [5, 7, 14]
formats = ["csv", "json", "geojson", "html"]

[fit]
k_fit = 7
log_shift = 1.0
min_points = 3

[ensemble]
mu = 0.5
c = 1.0

[geometry]
path = "counties.geojson"

[[source]]
name = "deaths"
kind = "deaths_cases"
path = "deaths.csv"
priority = 1

[[source]]
name = "features"
kind = "static_features"
path = "features.csv"

[[source]]
name = "hospitals"
kind = "hospitals"
path = "hospitals.csv"

[[source]]
name = "adjacency"
kind = "adjacency"
path = "adjacency.csv"
""",
        encoding="utf-8",
    )
    return {
        "deaths": deaths_path,
        "features": features_path,
        "hospitals": hospitals_path,
        "adjacency": adjacency_path,
        "geometry": geometry_path,
        "config": config_path,
    }
