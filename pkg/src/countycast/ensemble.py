"""CLEP: the combined linear and exponential predictor.

Per county, each baseline carries a discounted cumulative tracking loss

    L_m(t) = sum_{j <= t} mu^(t-j) * loss_j^m

and receives weight softmax(-c * L_m). The combined forecast is the
weight-averaged baseline forecast, so it always lies inside the baselines'
range. Recent performance dominates because older losses decay by ``mu`` per
day (the forgetting factor).
"""

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NonFiniteLoss, StaleState
from .predictors import PREDICTOR_ORDER, PointForecast, predict_all

logger = logging.getLogger(__name__)

CLEP = "clep"
STATE_DOC_VERSION = 1

# Days an ensemble state may lag behind the latest scoreable day before a
# forecast request is refused.
GRACE_DAYS = 2


def scaled_absolute_loss(y_hat, y):
    """|y_hat - y| / (y + 1): scale-free across counties of very different sizes."""
    return abs(float(y_hat) - float(y)) / (float(y) + 1.0)


TRACKING_LOSSES = {"scaled_absolute": scaled_absolute_loss}


@dataclass(frozen=True)
class EnsembleConfig:
    """Forgetting factor ``mu``, sharpness ``c``, and the tracking loss."""

    mu: float = 0.5
    c: float = 1.0
    loss: str = "scaled_absolute"

    def __post_init__(self):
        if not 0.0 < self.mu <= 1.0:
            raise ValueError("mu must be in (0, 1]")
        if self.c < 0.0:
            raise ValueError("c must be >= 0")
        if self.loss not in TRACKING_LOSSES:
            raise ValueError(f"unknown tracking loss {self.loss!r}")

    @property
    def loss_fn(self):
        return TRACKING_LOSSES[self.loss]


@dataclass
class EnsembleState:
    """Discounted per-county losses for one forecast horizon.

    ``eval_lag`` records the horizon: a forecast made at day t is scored at
    day t + eval_lag, once its actual arrives. Weights are derived on demand
    from the losses, so a fresh state yields uniform weights (cold start).
    """

    config: EnsembleConfig
    eval_lag: int
    losses: dict = field(default_factory=dict)
    last_scored_day: int | None = None

    def county_losses(self, fips):
        zero = {pid.value: 0.0 for pid in PREDICTOR_ORDER}
        return dict(self.losses.get(fips, zero))

    def weights(self, fips, predictors=None):
        """Normalized weights for one county; sums to 1 by construction.

        ``predictors`` restricts the softmax to a subset (a degenerate
        one-predictor ensemble gets weight 1 on it); by default all
        registered predictors participate, with loss 0 for any not yet scored.
        """
        losses = self.county_losses(fips)
        keys = sorted(predictors) if predictors is not None else sorted(losses)
        arr = np.array([losses.get(k, 0.0) for k in keys], dtype=float)
        arr = self.config.c * (arr - arr.min())
        w = np.exp(-arr)
        w /= w.sum()
        return dict(zip(keys, w.tolist()))


def update_weights(state, losses_by_county, day, config=None):
    """Fold one scored day into the state: L <- mu * L + loss.

    ``losses_by_county`` maps fips -> {predictor code -> loss}. Every county
    already in the state is aged by ``mu`` once per day elapsed since the
    last scored day (losses decay even on days a county contributes nothing).
    Raises :class:`NonFiniteLoss` on a non-finite loss; the state is not
    modified in that case.
    """
    config = config or state.config
    for fips, losses in losses_by_county.items():
        for pid, value in losses.items():
            if not math.isfinite(value):
                raise NonFiniteLoss(pid, value)
    steps = 1 if state.last_scored_day is None else day - state.last_scored_day
    if steps < 0:
        raise ValueError(f"scoring day {day} precedes last scored day {state.last_scored_day}")
    decay = config.mu**steps
    for fips in state.losses:
        state.losses[fips] = {pid: decay * v for pid, v in state.losses[fips].items()}
    for fips, losses in losses_by_county.items():
        slot = state.losses.setdefault(fips, {pid.value: 0.0 for pid in PREDICTOR_ORDER})
        for pid, value in losses.items():
            slot[pid] = slot.get(pid, 0.0) + float(value)
    state.last_scored_day = day
    return state


def combine(values, weights):
    """Convex combination of baseline values under the given weights."""
    return sum(weights[pid] * values[pid] for pid in weights)


def clep_predict(panel, as_of, horizon, state, config=None, fit_config=None, baselines=None):
    """Weight-averaged forecast per county.

    ``baselines`` may carry a precomputed :func:`predict_all` result for the
    same (as_of, horizon); otherwise it is computed here. Raises
    :class:`StaleState` when the state has scored before but its last scored
    day trails the latest scoreable day (as_of - horizon) by more than the
    grace allowance.
    """
    config = config or state.config
    required = as_of - horizon
    if state.last_scored_day is not None and required >= 0:
        behind = required - state.last_scored_day
        if behind > GRACE_DAYS:
            raise StaleState(state.last_scored_day, required - GRACE_DAYS)
        if behind > 0:
            logger.warning(
                "ensemble state %d day(s) behind the latest scoreable day, proceeding", behind
            )
    if baselines is None:
        baselines = predict_all(panel, as_of, horizon, fit_config)
    by_county = {}
    for (pid, fips), fc in baselines.items():
        by_county.setdefault(fips, {})[pid.value] = fc.value
    out = {}
    for fips in sorted(by_county):
        values = by_county[fips]
        weights = state.weights(fips, predictors=values.keys())
        out[fips] = PointForecast(CLEP, fips, as_of, horizon, combine(values, weights))
    return out


def state_to_doc(state):
    return {
        "version": STATE_DOC_VERSION,
        "eval_lag": state.eval_lag,
        "config": {"mu": state.config.mu, "c": state.config.c, "loss": state.config.loss},
        "last_scored_day": state.last_scored_day,
        "losses": {fips: dict(sorted(v.items())) for fips, v in sorted(state.losses.items())},
    }


def state_from_doc(doc):
    if doc.get("version") != STATE_DOC_VERSION:
        raise ValueError(f"unsupported ensemble state version {doc.get('version')!r}")
    return EnsembleState(
        config=EnsembleConfig(**doc["config"]),
        eval_lag=doc["eval_lag"],
        losses={fips: dict(v) for fips, v in doc["losses"].items()},
        last_scored_day=doc["last_scored_day"],
    )


def save_state(state, path):
    Path(path).write_text(json.dumps(state_to_doc(state), sort_keys=True), encoding="utf-8")


def load_state(path):
    return state_from_doc(json.loads(Path(path).read_text(encoding="utf-8")))
