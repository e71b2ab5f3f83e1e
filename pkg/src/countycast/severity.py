"""Hospital-level imputation and the three-tier severity index.

County values are split across a county's hospitals proportional to employee
counts (the available size proxy). Each hospital is then scored on three
features - current imputed deaths, predicted imputed deaths, and ICU strain
(predicted imputed deaths per ICU bed) - by population tertiles across all
hospitals. Sub-scores 1/2/3 sum to a 3..9 total mapped to Low / Medium / High.
"""

import logging
import math
from dataclasses import dataclass

from .errors import NoHospitals

logger = logging.getLogger(__name__)

LOW, MEDIUM, HIGH = "Low", "Medium", "High"
LEVELS = (LOW, MEDIUM, HIGH)


def level_for_total(total):
    if not 3 <= total <= 9:
        raise ValueError(f"severity total must be in 3..9, got {total}")
    if total <= 4:
        return LOW
    if total <= 6:
        return MEDIUM
    return HIGH


@dataclass(frozen=True)
class SeverityRecord:
    hospital_id: str
    fips: str
    current_imputed: float
    predicted_imputed: float
    icu_beds: int
    sub_scores: tuple
    total: int
    level: str

    def __post_init__(self):
        if self.total != sum(self.sub_scores):
            raise ValueError("total must equal the sum of sub-scores")
        if self.level != level_for_total(self.total):
            raise ValueError("level inconsistent with total")


def impute_hospital(county_value, hospitals):
    """Split a county value across its hospitals proportional to employees.

    Returns ``{hospital_id: share}``; shares are real-valued and sum exactly
    to the county value (consumers round at display time). Raises
    :class:`NoHospitals` for an empty hospital list.
    """
    hospitals = list(hospitals)
    if not hospitals:
        raise NoHospitals("?")
    county_value = float(county_value)
    if county_value < 0:
        raise ValueError("county value must be >= 0")
    total = sum(h.employees for h in hospitals)
    return {h.id: county_value * h.employees / total for h in hospitals}


def tertile_scores(values):
    """Map each value to 1/2/3 by the population tertiles of ``values``.

    Boundary ties resolve to the lower sub-score; a fully degenerate
    distribution (all values equal) scores everyone 2.
    """
    values = [float(v) for v in values]
    if not values:
        return []
    if max(values) == min(values):
        return [2] * len(values)
    s = sorted(values)
    n = len(s)
    q1 = s[math.ceil(n / 3) - 1]
    q2 = s[math.ceil(2 * n / 3) - 1]
    return [1 if v <= q1 else (2 if v <= q2 else 3) for v in values]


def severity_index(rows):
    """Score every hospital; ``rows`` are (hospital_id, fips, current, predicted, icu_beds).

    The ICU feature enters as predicted imputed deaths per ICU bed (with a
    beds+1 denominator so zero-bed facilities stay defined): fewer beds per
    imputed death means more strain and a higher score. Output order matches
    input order; scores depend only on the multiset of feature values.
    """
    rows = list(rows)
    current = [r[2] for r in rows]
    predicted = [r[3] for r in rows]
    strain = [r[3] / (r[4] + 1.0) for r in rows]
    s1 = tertile_scores(current)
    s2 = tertile_scores(predicted)
    s3 = tertile_scores(strain)
    records = []
    for (hid, fips, cur, pred, icu), a, b, c in zip(rows, s1, s2, s3):
        total = a + b + c
        records.append(
            SeverityRecord(
                hospital_id=hid,
                fips=fips,
                current_imputed=float(cur),
                predicted_imputed=float(pred),
                icu_beds=int(icu),
                sub_scores=(a, b, c),
                total=total,
                level=level_for_total(total),
            )
        )
    return records


def build_severity(panel, predicted_by_county, hospitals, as_of):
    """Impute county values to hospitals and score them.

    ``predicted_by_county`` maps fips to the 5-day-ahead combined forecast.
    Returns ``(records, unassigned)`` where ``unassigned`` lists counties
    that have a value but no hospitals to receive it.
    """
    by_county = {}
    for h in hospitals:
        by_county.setdefault(h.fips, []).append(h)
    rows = []
    unassigned = []
    for fips in panel.counties:
        county_hospitals = by_county.get(fips, [])
        if not county_hospitals:
            unassigned.append(fips)
            logger.info("county %s has no hospitals; its value stays unassigned", fips)
            continue
        current = float(panel.last_observed(fips, as_of))
        predicted = float(predicted_by_county.get(fips, current))
        cur_shares = impute_hospital(current, county_hospitals)
        pred_shares = impute_hospital(predicted, county_hospitals)
        for h in sorted(county_hospitals, key=lambda h: h.id):
            rows.append((h.id, fips, cur_shares[h.id], pred_shares[h.id], h.icu_beds))
    return severity_index(rows), unassigned
