"""Report rendering: GeoJSON map export, matplotlib figures, and a
self-contained HTML report.

Figures are written as PNG files next to the delimited output and embedded
into the HTML as base64 data URIs so the report needs no network access.
"""

import base64
import html
import json
import logging
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .severity import HIGH, LEVELS, LOW, MEDIUM

logger = logging.getLogger(__name__)

_LEVEL_RANK = {LOW: 0, MEDIUM: 1, HIGH: 2}
_LEVEL_COLOR = {LOW: "#74a9cf", MEDIUM: "#fd8d3c", HIGH: "#bd0026"}


def county_levels(records):
    """Worst hospital severity tier per county: the allocation-relevant view."""
    worst = {}
    for rec in records:
        prev = worst.get(rec.fips)
        if prev is None or _LEVEL_RANK[rec.level] > _LEVEL_RANK[prev]:
            worst[rec.fips] = rec.level
    return worst


def export_geojson(geometry_doc, clep_rows, levels):
    """Join county geometry with the latest combined forecasts and severity.

    ``clep_rows`` maps fips -> (value, lower, upper); ``levels`` maps fips to
    a severity tier (absent counties get null). Counties with a forecast but
    no geometry are skipped and returned for logging. Geometry counties with
    no forecast are dropped silently (the map only shows what we forecast).
    """
    by_fips = {}
    for feature in geometry_doc.get("features", []):
        fips = str(feature.get("properties", {}).get("fips", ""))
        if fips:
            by_fips[fips] = feature.get("geometry")
    features = []
    skipped = []
    for fips in sorted(clep_rows):
        geometry = by_fips.get(fips)
        if geometry is None:
            skipped.append(fips)
            continue
        value, lower, upper = clep_rows[fips]
        features.append(
            {
                "type": "Feature",
                "geometry": geometry,
                "properties": {
                    "fips": fips,
                    "clep": value,
                    "lower": lower,
                    "upper": upper,
                    "level": levels.get(fips),
                },
            }
        )
    if skipped:
        logger.warning("no geometry for %d counties, skipped: %s", len(skipped), skipped[:10])
    return {"type": "FeatureCollection", "features": features}, skipped


def _save(fig, path):
    fig.savefig(path, dpi=110, bbox_inches="tight")
    plt.close(fig)
    return path


def figure_top_counties(rows, path, top_n=12):
    """Horizontal interval chart of the counties with the largest forecasts.

    ``rows`` are (fips, value, lower, upper) for one horizon.
    """
    ranked = sorted(rows, key=lambda r: (-r[1], r[0]))[:top_n]
    ranked.reverse()
    fig, ax = plt.subplots(figsize=(7, 0.45 * max(len(ranked), 4) + 1))
    ys = range(len(ranked))
    for y, (fips, value, lower, upper) in zip(ys, ranked):
        ax.plot([lower, upper], [y, y], color="#bbbbbb", lw=3, zorder=1)
        ax.plot([value], [y], "o", color="#bd0026", zorder=2)
    ax.set_yticks(list(ys))
    ax.set_yticklabels([r[0] for r in ranked], fontsize=8)
    ax.set_xlabel("predicted cumulative deaths (dot) with interval (bar)")
    ax.set_title("Largest county forecasts")
    return _save(fig, path)


def figure_severity_counts(records, path):
    counts = {level: 0 for level in LEVELS}
    for rec in records:
        counts[rec.level] += 1
    fig, ax = plt.subplots(figsize=(4.5, 3))
    ax.bar(list(counts), [counts[k] for k in counts], color=[_LEVEL_COLOR[k] for k in counts])
    ax.set_ylabel("hospitals")
    ax.set_title("Hospital severity tiers")
    return _save(fig, path)


def figure_delta_histogram(deltas, path):
    fig, ax = plt.subplots(figsize=(4.5, 3))
    ax.hist(list(deltas), bins=20, color="#2b8cbe")
    ax.set_xlabel("interval relative radius")
    ax.set_ylabel("counties")
    ax.set_title("Interval width distribution")
    return _save(fig, path)


def figure_mean_weights(mean_weights, path):
    """Bar chart of the ensemble's average per-county weight by predictor."""
    keys = sorted(mean_weights)
    fig, ax = plt.subplots(figsize=(4.5, 3))
    ax.bar(keys, [mean_weights[k] for k in keys], color="#31a354")
    ax.set_ylabel("mean weight")
    ax.set_title("Ensemble weights (county average)")
    return _save(fig, path)


def figure_backtest_scores(report, path, loss="mare"):
    fig, ax = plt.subplots(figsize=(6, 3.2))
    predictors = sorted(report.scores)
    horizons = sorted({h for v in report.scores.values() for h in v})
    width = 0.8 / max(len(horizons), 1)
    for j, h in enumerate(horizons):
        xs = [i + j * width for i in range(len(predictors))]
        ys = [report.scores[p].get(h, {}).get(loss, float("nan")) for p in predictors]
        ax.bar(xs, ys, width=width, label=f"h={h}")
    ax.set_xticks([i + 0.4 - width / 2 for i in range(len(predictors))])
    ax.set_xticklabels(predictors)
    ax.set_ylabel(loss)
    ax.set_title("Backtest scores")
    ax.legend(fontsize=8)
    return _save(fig, path)


def render_figures(out_dir, forecast_rows, severity_records, horizon, mean_weights=None):
    """Render the standard report figures; returns the written paths."""
    fig_dir = Path(out_dir) / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    at_h = [r for r in forecast_rows if r["horizon"] == horizon and r["predictor"] == "clep"]
    paths = []
    if at_h:
        paths.append(
            figure_top_counties(
                [(r["fips"], r["value"], r["lower"], r["upper"]) for r in at_h],
                fig_dir / "top_counties.png",
            )
        )
        deltas = [
            (r["upper"] - r["value"]) / r["value"] if r["value"] > 0 else 0.0 for r in at_h
        ]
        paths.append(figure_delta_histogram(deltas, fig_dir / "interval_widths.png"))
    if severity_records:
        paths.append(figure_severity_counts(severity_records, fig_dir / "severity_counts.png"))
    if mean_weights:
        paths.append(figure_mean_weights(mean_weights, fig_dir / "ensemble_weights.png"))
    return paths


def _img_tag(path):
    data = base64.b64encode(Path(path).read_bytes()).decode("ascii")
    return f'<img src="data:image/png;base64,{data}" alt="{Path(path).stem}"/>'


_PAGE = """<!DOCTYPE html>
<html lang="en">
<head>
<meta charset="utf-8"/>
<title>County forecast report - {date}</title>
<style>
body {{ font-family: system-ui, sans-serif; margin: 2rem auto; max-width: 60rem; color: #222; }}
h1 {{ font-size: 1.4rem; }} h2 {{ font-size: 1.1rem; margin-top: 2rem; }}
table {{ border-collapse: collapse; font-size: 0.85rem; }}
td, th {{ border: 1px solid #ccc; padding: 0.25rem 0.6rem; text-align: right; }}
th {{ background: #f0f0f0; }} td:first-child, th:first-child {{ text-align: left; }}
img {{ max-width: 100%; margin: 0.5rem 0; }}
.level-High {{ color: #bd0026; font-weight: 600; }}
.level-Medium {{ color: #e6550d; }}
.level-Low {{ color: #3182bd; }}
</style>
</head>
<body>
<h1>County forecast report &mdash; {date}</h1>
<p>{summary}</p>
{figures}
{weights_section}
<h2>Highest-severity hospitals</h2>
{severity_table}
<h2>Map data</h2>
<p>{map_note}</p>
<script type="application/json" id="map-data">
{map_json}
</script>
</body>
</html>
"""


def render_html(path, as_of_date, forecast_rows, severity_records, figure_paths, geojson_doc,
                mean_weights=None):
    """Write the self-contained HTML report (figures inlined as data URIs)."""
    n_counties = len({r["fips"] for r in forecast_rows})
    summary = (
        f"{n_counties} counties forecast; "
        f"{len(severity_records)} hospitals scored across three severity tiers."
    )
    weights_section = ""
    if mean_weights:
        cells = "".join(f"<td>{mean_weights[k]:.4f}</td>" for k in sorted(mean_weights))
        heads = "".join(f"<th>{k}</th>" for k in sorted(mean_weights))
        weights_section = (
            "<h2>Ensemble weights (county average, 5-day horizon)</h2>"
            f"<table><tr>{heads}</tr><tr>{cells}</tr></table>"
        )
    figures = "\n".join(_img_tag(p) for p in figure_paths)
    worst = sorted(severity_records, key=lambda r: (-r.total, r.hospital_id))[:15]
    rows = "\n".join(
        "<tr><td>{id}</td><td>{fips}</td><td>{cur:.2f}</td><td>{pred:.2f}</td>"
        "<td>{icu}</td><td>{total}</td><td class=\"level-{level}\">{level}</td></tr>".format(
            id=html.escape(rec.hospital_id),
            fips=rec.fips,
            cur=rec.current_imputed,
            pred=rec.predicted_imputed,
            icu=rec.icu_beds,
            total=rec.total,
            level=rec.level,
        )
        for rec in worst
    )
    severity_table = (
        "<table><tr><th>hospital</th><th>fips</th><th>current</th><th>predicted</th>"
        "<th>ICU beds</th><th>score</th><th>tier</th></tr>" + rows + "</table>"
        if worst
        else "<p>No hospital records.</p>"
    )
    n_features = len(geojson_doc.get("features", [])) if geojson_doc else 0
    map_note = (
        f"GeoJSON with {n_features} county features is embedded below and also "
        "written next to this report."
        if geojson_doc
        else "No geometry supplied; map data omitted."
    )
    page = _PAGE.format(
        date=as_of_date,
        summary=summary,
        figures=figures,
        weights_section=weights_section,
        severity_table=severity_table,
        map_note=map_note,
        map_json=json.dumps(geojson_doc or {}, sort_keys=True),
    )
    Path(path).write_text(page, encoding="utf-8")
    return Path(path)
