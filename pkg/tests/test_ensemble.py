import json
import math

import numpy as np
import pytest

from countycast.ensemble import (
    CLEP,
    EnsembleConfig,
    EnsembleState,
    clep_predict,
    scaled_absolute_loss,
    state_from_doc,
    state_to_doc,
    update_weights,
)
from countycast.errors import NonFiniteLoss, StaleState
from countycast.pipeline import advance, new_state
from countycast.predictors import Predictor

from conftest import geometric_values, linear_values, make_panel

PIDS = [p.value for p in Predictor]


def fresh_state(mu=0.5, c=1.0, eval_lag=5):
    return EnsembleState(config=EnsembleConfig(mu=mu, c=c), eval_lag=eval_lag)


def day_losses(**by_pid):
    losses = {pid: 0.0 for pid in PIDS}
    losses.update(by_pid)
    return {"06001": losses}


class TestUpdateWeights:
    def test_identical_histories_give_equal_weights(self):
        state = fresh_state()
        update_weights(state, day_losses(p1=0.4, p2=0.4), day=10)
        w = state.weights("06001")
        assert w["p1"] == pytest.approx(w["p2"], abs=1e-15)

    def test_c_zero_gives_uniform_weights(self):
        state = fresh_state(c=0.0)
        update_weights(state, day_losses(p1=5.0, p2=0.1), day=10)
        w = state.weights("06001")
        for pid in PIDS:
            assert w[pid] == pytest.approx(0.2, abs=1e-15)

    def test_two_day_hand_example(self):
        # mu=0.5, c=1; A losses [0,0], B losses [1,1]:
        # L_A = 0; L_B = 0.5*1 + 1 = 1.5; w_A = 1 / (1 + exp(-1.5)).
        state = EnsembleState(config=EnsembleConfig(mu=0.5, c=1.0), eval_lag=5)
        state.losses["06001"] = {"p1": 0.0, "p2": 0.0}
        update_weights(state, {"06001": {"p1": 0.0, "p2": 1.0}}, day=10)
        update_weights(state, {"06001": {"p1": 0.0, "p2": 1.0}}, day=11)
        assert state.losses["06001"]["p1"] == pytest.approx(0.0, abs=1e-15)
        assert state.losses["06001"]["p2"] == pytest.approx(1.5, abs=1e-15)
        w = state.weights("06001")
        expected_a = 1.0 / (1.0 + math.exp(-1.5))
        assert w["p1"] == pytest.approx(expected_a, abs=1e-12)
        assert w["p2"] == pytest.approx(1.0 - expected_a, abs=1e-12)

    def test_non_finite_loss_rejected(self):
        state = fresh_state()
        with pytest.raises(NonFiniteLoss):
            update_weights(state, day_losses(p1=float("nan")), day=10)

    def test_gap_days_decay_losses(self):
        state = fresh_state(mu=0.5)
        update_weights(state, day_losses(p1=1.0), day=10)
        update_weights(state, {"06001": {pid: 0.0 for pid in PIDS}}, day=13)
        # Three days elapsed: 1.0 * 0.5**3.
        assert state.losses["06001"]["p1"] == pytest.approx(0.125, abs=1e-15)

    def test_normalization_across_fuzzed_updates(self):
        rng = np.random.default_rng(5)
        state = fresh_state(mu=0.8, c=2.0)
        day = 10
        for _ in range(200):
            losses = {
                f"06{i:03d}": {pid: float(rng.uniform(0, 4)) for pid in PIDS}
                for i in range(1, 6)
            }
            update_weights(state, losses, day=day)
            day += 1
            for fips in losses:
                w = state.weights(fips)
                assert abs(sum(w.values()) - 1.0) < 1e-12
                assert all(v >= 0 for v in w.values())

    def test_loss_scale_never_changes_argmax(self):
        rng = np.random.default_rng(9)
        for _ in range(100):
            losses = {pid: float(rng.uniform(0, 3)) for pid in PIDS}
            scale = float(rng.uniform(0.01, 50))
            s1, s2 = fresh_state(c=1.3), fresh_state(c=1.3)
            update_weights(s1, {"06001": losses}, day=1)
            update_weights(s2, {"06001": {k: v * scale for k, v in losses.items()}}, day=1)
            w1, w2 = s1.weights("06001"), s2.weights("06001")
            assert max(w1, key=w1.get) == max(w2, key=w2.get)

    def test_forgetting_rewards_recent_zero_losses(self):
        # A was historically bad but recently perfect; B is steadily mediocre.
        state = fresh_state(mu=0.5)
        for day in range(20):
            a = 1.0 if day < 10 else 0.0
            update_weights(state, day_losses(p1=a, p2=0.3), day=day)
        w = state.weights("06001")
        assert w["p1"] == max(w[p] for p in ("p1", "p2"))
        assert w["p1"] > w["p2"]


class TestClepPredict:
    def test_equal_weights_average(self):
        panel = make_panel({"06001": linear_values(0, 1, 12)})
        state = fresh_state(eval_lag=5)
        out = clep_predict(panel, as_of=9, horizon=5, state=state)
        # Cold start: uniform weights, so the value is the plain baseline mean.
        from countycast.predictors import predict_all

        baselines = predict_all(panel, 9, 5)
        values = [fc.value for fc in baselines.values()]
        assert out["06001"].value == pytest.approx(sum(values) / len(values), rel=1e-12)
        assert out["06001"].predictor == CLEP

    def test_convex_combination_bounds(self):
        rng = np.random.default_rng(17)
        from countycast.predictors import predict_all

        for seed in range(20):
            n = 14
            values = {
                f"06{i:03d}": np.maximum.accumulate(rng.integers(0, 80, size=n)).tolist()
                for i in range(1, 6)
            }
            panel = make_panel(values)
            state = fresh_state(mu=float(rng.uniform(0.2, 1.0)), c=float(rng.uniform(0.0, 3.0)))
            # Random loss history, so weights are arbitrary but normalized.
            update_weights(
                state,
                {f: {pid: float(rng.uniform(0, 2)) for pid in PIDS} for f in values},
                day=n - 1,
            )
            h = int(rng.integers(1, 10))
            baselines = predict_all(panel, n - 1, h)
            combined = clep_predict(panel, n - 1, h, state, baselines=baselines)
            for fips in values:
                comp = [baselines[(p, fips)].value for p in Predictor]
                assert min(comp) - 1e-9 <= combined[fips].value <= max(comp) + 1e-9

    def test_single_predictor_degenerate_ensemble(self):
        # With only one baseline available, the combined forecast is that
        # baseline exactly.
        panel = make_panel({"06001": linear_values(3, 2, 12)})
        state = fresh_state()
        update_weights(state, day_losses(p1=0.9, p2=0.1), day=11)
        from countycast.predictors import predict_all

        baselines = predict_all(panel, 11, 5)
        only_p1 = {k: v for k, v in baselines.items() if k[0] == Predictor.SEPARATE_LINEAR}
        out = clep_predict(panel, 11, 5, state, baselines=only_p1)
        assert out["06001"].value == baselines[(Predictor.SEPARATE_LINEAR, "06001")].value

    def test_stale_state_rejected(self):
        panel = make_panel({"06001": linear_values(0, 1, 40)})
        state = fresh_state(eval_lag=5)
        state.last_scored_day = 10
        with pytest.raises(StaleState):
            clep_predict(panel, as_of=30, horizon=5, state=state)

    def test_within_grace_accepted(self):
        panel = make_panel({"06001": linear_values(0, 1, 40)})
        state = fresh_state(eval_lag=5)
        state.last_scored_day = 24  # scoreable through 25; 1 day behind
        out = clep_predict(panel, as_of=30, horizon=5, state=state)
        assert "06001" in out


class TestRegimeAdaptivity:
    def run_panel(self, values, horizons=(5,), days_to_run=None):
        panel = make_panel(values)
        state = new_state(horizons)
        end = days_to_run if days_to_run is not None else panel.n_days - 1 - max(horizons)
        for origin in range(6, end + 1):
            advance(panel, state, origin, horizons)
        return panel, state

    def test_linear_regime_prefers_linear_predictor(self):
        values = {f"06{i:03d}": linear_values(10 * i, 2 + i, 30) for i in range(1, 5)}
        panel, state = self.run_panel(values)
        for fips in values:
            w = state.ensembles[5].weights(fips)
            assert w["p1"] > w["p2"]

    def test_exponential_regime_prefers_exponential_predictor(self):
        values = {f"06{i:03d}": geometric_values(i, 2, 26) for i in range(1, 5)}
        panel, state = self.run_panel(values)
        for fips in values:
            w = state.ensembles[5].weights(fips)
            assert w["p2"] > w["p1"]


class TestStateSerialization:
    def test_round_trip(self):
        state = fresh_state(mu=0.7, c=1.5)
        update_weights(state, day_losses(p1=0.5, p3=1.25), day=7)
        doc = state_to_doc(state)
        text = json.dumps(doc, sort_keys=True)
        restored = state_from_doc(json.loads(text))
        assert json.dumps(state_to_doc(restored), sort_keys=True) == text
        assert restored.weights("06001") == state.weights("06001")

    def test_version_checked(self):
        with pytest.raises(ValueError):
            state_from_doc({"version": 99})


def test_tracking_loss_is_scale_smoothed():
    assert scaled_absolute_loss(10, 8) == pytest.approx(2 / 9)
    assert scaled_absolute_loss(0, 0) == 0.0
