import json
import math

import numpy as np
import pytest

from countycast.backtest import (
    BacktestReport,
    SynthSpec,
    generate_synthetic,
    grid_search,
    losses,
    rolling_backtest,
)
from countycast.ensemble import CLEP
from countycast.errors import InsufficientWarmup
from countycast.model import DaySeries, Panel

from conftest import START, linear_values, make_panel


class TestLosses:
    def test_perfect_predictions(self):
        assert losses([1, 2, 3], [1, 2, 3]) == {"mae": 0.0, "rmse": 0.0, "mare": 0.0}

    def test_constant_offset(self):
        out = losses([3, 4, 5], [1, 2, 3])
        assert out["mae"] == pytest.approx(2.0)

    def test_hand_example(self):
        out = losses([10, 5], [8, 5])
        assert out["mae"] == pytest.approx(1.0)
        assert out["rmse"] == pytest.approx(math.sqrt(2), rel=1e-12)
        assert out["mare"] == pytest.approx((2 / 9 + 0) / 2, rel=1e-12)

    def test_zero_iff_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            y = rng.uniform(0, 100, size=10)
            y_hat = y + rng.uniform(-1, 1, size=10) * rng.integers(0, 2)
            out = losses(y_hat, y)
            exact = bool(np.all(y_hat == y))
            assert (out["mae"] == 0 and out["rmse"] == 0 and out["mare"] == 0) == exact

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            losses([float("nan")], [1.0])


class TestSynthetic:
    def test_linear_sigma_zero_exactly_arithmetic(self):
        panel = generate_synthetic(SynthSpec(regime="linear", counties=3, days=12, seed=4))
        for fips in panel.counties:
            diffs = np.diff(panel.deaths(fips))
            assert len(set(diffs.tolist())) == 1

    def test_exponential_sigma_zero_exactly_shifted_geometric(self):
        panel = generate_synthetic(SynthSpec(regime="exponential", counties=3, days=12, seed=4))
        for fips in panel.counties:
            shifted = panel.deaths(fips).astype(float) + 1.0
            ratios = shifted[1:] / shifted[:-1]
            assert np.allclose(ratios, 2.0, rtol=1e-12)

    def test_fixed_seed_is_reproducible(self):
        spec = SynthSpec(regime="switching", counties=5, days=25, sigma=0.2, seed=77)
        a, b = generate_synthetic(spec), generate_synthetic(spec)
        for fips in a.counties:
            assert (a.deaths(fips) == b.deaths(fips)).all()
        assert a.features == b.features

    def test_series_monotone_under_noise(self):
        for regime in ("linear", "exponential", "logistic", "switching"):
            panel = generate_synthetic(
                SynthSpec(regime=regime, counties=4, days=30, sigma=0.4, seed=9)
            )
            for fips in panel.counties:
                assert (np.diff(panel.deaths(fips)) >= 0).all()

    def test_ring_adjacency(self):
        panel = generate_synthetic(SynthSpec(regime="linear", counties=5, days=10, seed=1))
        for fips in panel.counties:
            assert len(panel.neighbors(fips)) == 2


class TestRollingBacktest:
    def test_noiseless_linear_p1_scores_zero(self):
        panel = make_panel({f"06{i:03d}": linear_values(5 * i, i + 1, 30) for i in range(1, 4)})
        report = rolling_backtest(panel, 6, 24, [5])
        for name in ("mae", "rmse", "mare"):
            assert report.scores["p1"][5][name] == pytest.approx(0.0, abs=1e-9)

    def test_insufficient_history_before_start(self):
        panel = make_panel({"06001": linear_values(0, 1, 30)})
        with pytest.raises(InsufficientWarmup):
            rolling_backtest(panel, 2, 20, [5])

    def test_unscoreable_end_rejected(self):
        panel = make_panel({"06001": linear_values(0, 1, 30)})
        with pytest.raises(InsufficientWarmup):
            rolling_backtest(panel, 6, 28, [5])

    def test_scored_count_accounting(self):
        panel = make_panel({"06001": linear_values(0, 1, 40), "06003": linear_values(2, 2, 40)})
        start, end = 6, 30
        report = rolling_backtest(panel, start, end, [5, 7])
        days_in_range = end - start + 1
        for h in (5, 7):
            for pid in report.n_scored[h]:
                assert report.n_scored[h][pid] == days_in_range * 2  # x2 counties

    def test_report_deterministic(self):
        spec = SynthSpec(regime="switching", counties=6, days=32, sigma=0.15, seed=5)
        r1 = rolling_backtest(generate_synthetic(spec), 6, 24, [5, 7])
        r2 = rolling_backtest(generate_synthetic(spec), 6, 24, [5, 7])
        assert json.dumps(r1.to_doc(), sort_keys=True) == json.dumps(r2.to_doc(), sort_keys=True)

    def test_clep_never_worse_than_worst_component(self):
        # Convexity of the combination plus convexity of the losses keeps the
        # combined score at or below the worst baseline on every fuzz panel.
        for seed in range(25):
            regime = ("linear", "exponential", "logistic", "switching")[seed % 4]
            spec = SynthSpec(regime=regime, counties=4, days=28, sigma=0.2, seed=seed)
            report = rolling_backtest(generate_synthetic(spec), 6, 20, [5])
            for name in ("mae", "rmse"):
                worst = max(report.scores[f"p{i}"][5][name] for i in range(1, 6))
                assert report.scores[CLEP][5][name] <= worst + 1e-9

    def test_no_leakage_of_future_data(self):
        rng = np.random.default_rng(100)
        for case in range(20):
            spec = SynthSpec(regime="switching", counties=3, days=26, sigma=0.3, seed=case)
            panel = generate_synthetic(spec)
            h = 5
            t = int(rng.integers(7, 14))
            report = rolling_backtest(panel, 6, t, [h])

            # Perturb all data strictly after day t + h and rerun.
            mutated = {}
            for fips in panel.counties:
                values = panel.deaths(fips).copy()
                values[t + h + 1 :] += rng.integers(1, 50, size=max(0, len(values) - t - h - 1))
                values = np.maximum.accumulate(values)
                mutated[fips] = DaySeries(fips=fips, start_day=START, cum_deaths=values)
            panel2 = Panel(mutated, features=panel.features, adjacency=panel.adjacency)
            report2 = rolling_backtest(panel2, 6, t, [h])
            assert json.dumps(report.to_doc(), sort_keys=True) == json.dumps(
                report2.to_doc(), sort_keys=True
            )

    def test_coverage_reported_when_history_allows(self):
        spec = SynthSpec(regime="exponential", counties=8, days=36, sigma=0.1, seed=3, growth=1.2,
                         level_range=(50, 400))
        report = rolling_backtest(generate_synthetic(spec), 6, 30, [5])
        assert report.coverage[5] is not None
        assert 0.0 <= report.coverage[5] <= 1.0
        n_eval, n_prov = report.n_intervals[5]
        assert n_eval > 0 and n_prov > 0


def test_grid_search_covers_product():
    panel = generate_synthetic(SynthSpec(regime="linear", counties=3, days=24, sigma=0.1, seed=8))
    results = grid_search(panel, 6, 16, [5], mu_values=[0.5, 0.9], c_values=[1.0], k_values=[5, 7])
    assert len(results) == 4
    assert {(r["mu"], r["k_fit"]) for r in results} == {(0.5, 5), (0.5, 7), (0.9, 5), (0.9, 7)}
    for r in results:
        assert isinstance(r["report"], BacktestReport)
