import math

import numpy as np
import pytest

from countycast.errors import DegenerateWindow
from countycast.predictors import (
    PREDICTOR_ORDER,
    FitConfig,
    Predictor,
    fit_exponential,
    fit_linear,
    forecast_exponential,
    forecast_linear,
    predict_all,
)

from conftest import linear_values, make_panel


def ols_oracle(x, y):
    """Independent check: solve the normal equations directly."""
    x = np.asarray(x, dtype=float)
    design = np.column_stack([np.ones_like(x), x])
    coef = np.linalg.solve(design.T @ design, design.T @ np.asarray(y, dtype=float))
    return coef[1], coef[0]  # slope, intercept


class TestRegistry:
    def test_exactly_five_predictors(self):
        assert len(Predictor) == 5
        assert len({p.value for p in Predictor}) == 5
        assert [p.value for p in PREDICTOR_ORDER] == ["p1", "p2", "p3", "p4", "p5"]


class TestFitLinear:
    def test_exact_line(self):
        slope, intercept = fit_linear([10, 12, 14, 16])
        assert slope == pytest.approx(2.0, abs=1e-12)
        assert intercept == pytest.approx(10.0, abs=1e-12)
        assert forecast_linear([10, 12, 14, 16], horizon=1) == pytest.approx(18.0, abs=1e-10)

    def test_noisy_window_matches_oracle(self):
        y = [3, 4, 8, 9]
        slope, intercept = fit_linear(y)
        o_slope, o_intercept = ols_oracle(range(4), y)
        assert slope == pytest.approx(o_slope, abs=1e-10)
        assert intercept == pytest.approx(o_intercept, abs=1e-10)
        # Hand evaluation frozen from the normal equations: slope 2.2, intercept 2.7.
        assert slope == pytest.approx(2.2, abs=1e-12)
        assert intercept == pytest.approx(2.7, abs=1e-12)
        assert forecast_linear(y, horizon=1) == pytest.approx(11.5, abs=1e-10)

    def test_constant_series(self):
        assert forecast_linear([5, 5, 5, 5], horizon=3) == pytest.approx(5.0)

    def test_clamped_to_last_observed(self):
        # A late jump leaves the fitted line below the last count (raw value 8);
        # cumulative counts cannot fall, so the forecast clamps up to 10.
        slope, intercept = fit_linear([0, 0, 0, 0, 10])
        assert intercept + slope * 5 == pytest.approx(8.0, abs=1e-12)
        assert forecast_linear([0, 0, 0, 0, 10], horizon=1) == 10.0

    def test_degenerate_window(self):
        with pytest.raises(DegenerateWindow):
            fit_linear([math.nan, 3.0], min_points=2)

    def test_translation_covariance(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            y = rng.uniform(0, 100, size=7)
            c = float(rng.uniform(-20, 20))
            s1, b1 = fit_linear(y)
            s2, b2 = fit_linear(y + c)
            assert s2 == pytest.approx(s1, abs=1e-9)
            assert b2 == pytest.approx(b1 + c, abs=1e-9)


class TestFitExponential:
    def test_exact_shifted_geometric(self):
        # [1,3,7,15] + 1 = [2,4,8,16]: doubles each step, so one step ahead is 32 - 1.
        value = forecast_exponential([1, 3, 7, 15], horizon=1, log_shift=1.0)
        assert value == pytest.approx(31.0, rel=1e-10)
        growth, level = fit_exponential([1, 3, 7, 15], log_shift=1.0)
        assert growth == pytest.approx(math.log(2), abs=1e-12)
        assert level == pytest.approx(math.log(2), abs=1e-12)

    def test_constant_series(self):
        for h in (1, 5, 14):
            assert forecast_exponential([5, 5, 5], horizon=h) == pytest.approx(5.0, abs=1e-9)

    def test_matches_log_space_oracle(self):
        y = [2, 5, 11, 20]
        growth, level = fit_exponential(y, log_shift=1.0)
        o_growth, o_level = ols_oracle(range(4), np.log(np.asarray(y) + 1.0))
        assert growth == pytest.approx(o_growth, abs=1e-10)
        assert level == pytest.approx(o_level, abs=1e-10)
        expected = math.exp(o_level + o_growth * (3 + 2)) - 1.0
        assert forecast_exponential(y, horizon=2) == pytest.approx(expected, rel=1e-10)


class TestPredictAll:
    def test_five_forecasts_per_county(self, three_county_panel):
        out = predict_all(three_county_panel, as_of=10, horizon=5)
        assert len(out) == 5 * 3
        for (pid, fips), fc in out.items():
            assert fc.predictor == pid.value and fc.fips == fips
            assert fc.value >= three_county_panel.last_observed(fips, 10)

    def test_linear_history_exact_for_p1(self, three_county_panel):
        out = predict_all(three_county_panel, as_of=12, horizon=5)
        fc = out[(Predictor.SEPARATE_LINEAR, "06001")]
        assert fc.value == pytest.approx(10 + 3 * 17, rel=1e-9)

    def test_geometric_history_exact_for_p2(self, three_county_panel):
        out = predict_all(three_county_panel, as_of=12, horizon=5)
        fc = out[(Predictor.SEPARATE_EXP, "06003")]
        assert fc.value == pytest.approx(2 * 2**17 - 1, rel=1e-8)

    def test_all_zero_panel_forecasts_zero(self):
        panel = make_panel({"06001": [0] * 15, "06003": [0] * 15})
        out = predict_all(panel, as_of=12, horizon=5)
        for fc in out.values():
            assert fc.value == 0.0

    def test_matches_scalar_oracles_per_county(self, three_county_panel):
        config = FitConfig()
        as_of, h = 14, 7
        out = predict_all(three_county_panel, as_of, h, config)
        for fips in three_county_panel.counties:
            y = three_county_panel.deaths(fips)[as_of - config.k_fit + 1 : as_of + 1]
            assert out[(Predictor.SEPARATE_LINEAR, fips)].value == pytest.approx(
                forecast_linear(y, h), rel=1e-12
            )
            assert out[(Predictor.SEPARATE_EXP, fips)].value == pytest.approx(
                forecast_exponential(y, h, config.log_shift), rel=1e-12
            )

    def test_short_history_falls_back_to_persistence(self):
        panel = make_panel({"06001": [3, 4, 5, 6, 7]})
        out = predict_all(panel, as_of=1, horizon=5)  # 2-day window < min_points
        for fc in out.values():
            assert fc.value == 4.0

    def test_deterministic(self, three_county_panel):
        a = predict_all(three_county_panel, as_of=12, horizon=5)
        b = predict_all(three_county_panel, as_of=12, horizon=5)
        assert {k: v.value for k, v in a.items()} == {k: v.value for k, v in b.items()}

    def test_monotone_clamp_fuzz(self):
        rng = np.random.default_rng(11)
        for _ in range(20):
            n = 16
            values = {
                f"06{i:03d}": np.maximum.accumulate(rng.integers(0, 50, size=n)).tolist()
                for i in range(1, 5)
            }
            panel = make_panel(values)
            out = predict_all(panel, as_of=n - 1, horizon=int(rng.integers(1, 15)))
            for (pid, fips), fc in out.items():
                assert fc.value >= panel.last_observed(fips, n - 1)

    def test_no_neighbor_county_p5_finite(self):
        panel = make_panel({"06001": linear_values(5, 2, 15)})
        out = predict_all(panel, as_of=12, horizon=5)
        fc = out[(Predictor.NEIGHBOR_EXP, "06001")]
        assert math.isfinite(fc.value) and fc.value >= panel.last_observed("06001", 12)


class TestFitConfig:
    def test_defaults(self):
        config = FitConfig()
        assert (config.k_fit, config.log_shift, config.min_points) == (7, 1.0, 3)

    @pytest.mark.parametrize(
        "kwargs", [{"k_fit": 2, "min_points": 3}, {"log_shift": 0.0}, {"min_points": 1}]
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ValueError):
            FitConfig(**kwargs)
