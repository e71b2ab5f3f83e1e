"""Maximum-error prediction intervals (MEPI) and coverage evaluation.

The interval around a forecast ``center`` has relative radius

    delta = max over the last 5 scored (y_hat, y) pairs of |y_hat - y| / y_hat

giving ``[center * (1 - delta), center * (1 + delta)]``, with the lower bound
clamped up to the county's last observed cumulative count (actuals can never
fall below it). Five days is short enough for the error stream to behave as
if exchangeable, which puts expected coverage at 5/6.
"""

from dataclasses import dataclass
from fractions import Fraction

from .errors import InsufficientHistory, MissingActual

HISTORY_DAYS = 5

# Relative radius used before 5 scored days exist for a county+horizon.
COLD_START_DELTA = 1.0


@dataclass(frozen=True)
class Interval:
    fips: str
    as_of: int
    horizon: int
    center: float
    delta: float
    lower: float
    upper: float
    provisional: bool = False

    def __post_init__(self):
        if not self.lower <= self.center <= self.upper:
            raise ValueError(
                f"interval bounds out of order: {self.lower} <= {self.center} <= {self.upper}"
            )

    def contains(self, actual):
        return self.lower <= actual <= self.upper


def _bounds(center, delta, last_obs):
    lower = max(float(last_obs), center * (1.0 - delta))
    upper = center * (1.0 + delta)
    return lower, upper


def mepi_interval(pairs, center, last_obs, *, fips="", as_of=0, horizon=1):
    """Interval from the last 5 scored (y_hat, y) pairs for this county+horizon.

    Pairs with a non-positive prediction carry no relative error and do not
    count; fewer than 5 usable pairs raise :class:`InsufficientHistory`. If
    more than 5 pairs are passed, the most recent 5 are used.
    """
    usable = [(float(yh), float(y)) for yh, y in pairs if yh > 0]
    if len(usable) < HISTORY_DAYS:
        raise InsufficientHistory(len(usable))
    usable = usable[-HISTORY_DAYS:]
    center = float(center)
    if center < 0:
        raise ValueError("interval center must be >= 0")
    if center < last_obs:
        raise ValueError("interval center below the last observed count")
    delta = max(abs(yh - y) / yh for yh, y in usable)
    lower, upper = _bounds(center, delta, last_obs)
    return Interval(fips, as_of, horizon, center, delta, lower, upper)


def provisional_interval(center, last_obs, *, fips="", as_of=0, horizon=1):
    """Cold-start interval with relative radius 1, flagged provisional.

    Refusing to emit anything before 5 scored days would leave downstream
    severity scoring empty exactly when it is most needed.
    """
    center = float(center)
    if center < 0:
        raise ValueError("interval center must be >= 0")
    if center < last_obs:
        raise ValueError("interval center below the last observed count")
    lower, upper = _bounds(center, COLD_START_DELTA, last_obs)
    return Interval(fips, as_of, horizon, center, COLD_START_DELTA, lower, upper, provisional=True)


def build_interval(pairs, center, last_obs, *, fips="", as_of=0, horizon=1):
    """The pipeline rule: a real MEPI when 5 usable pairs exist, else cold start."""
    try:
        return mepi_interval(pairs, center, last_obs, fips=fips, as_of=as_of, horizon=horizon)
    except InsufficientHistory:
        return provisional_interval(center, last_obs, fips=fips, as_of=as_of, horizon=horizon)


def coverage(intervals, actuals):
    """Fraction of intervals whose realized actual falls inside.

    ``actuals`` maps ``(fips, target_day)`` to the observed count, where
    ``target_day = as_of + horizon``. The count is exact (rational); the
    returned value is its float. Raises :class:`MissingActual` when an
    interval has no realized actual, and ``ValueError`` on an empty input.
    """
    if not intervals:
        raise ValueError("coverage needs at least one interval")
    hits = 0
    for iv in intervals:
        key = (iv.fips, iv.as_of + iv.horizon)
        if key not in actuals:
            raise MissingActual(*key)
        if iv.contains(actuals[key]):
            hits += 1
    return float(Fraction(hits, len(intervals)))
