from __future__ import annotations

import numpy as np
import pytest

from pecsim.comfort import ComfortSeries, daily_energy, discomfort_percent
from pecsim.engine import (
    Scenario, build_forecasts, days_with_candidates, derive_seed, run_day, run_sweep,
)
from pecsim.occupancy import select_reference, upsample_to_coarse

DAY = 3


@pytest.fixture(scope="module")
def truth(dataset):
    return dataset[DAY]


@pytest.fixture(scope="module")
def occ_fine(truth):
    return np.stack([s.bits for s in truth])


@pytest.fixture(scope="module")
def perfect(truth):
    return np.stack([upsample_to_coarse(s).bits for s in truth])


@pytest.fixture(scope="module")
def make(cfg, occ_fine, summer_weather):
    def _make(controller, forecast=None, occupancy=None, season="summer", weather=None):
        occ = occ_fine if occupancy is None else occupancy
        wx = summer_weather[DAY] if weather is None else weather
        return Scenario("d003", controller, season, occ, wx, cfg, forecast=forecast)
    return _make


@pytest.fixture(scope="module")
def ns_perfect(make, perfect):
    return run_day(make("ns", perfect))


class TestScenario:
    def test_unknown_controller(self, make):
        with pytest.raises(ValueError, match="unknown controller"):
            make("pid")

    def test_predictive_needs_forecast(self, make):
        with pytest.raises(ValueError, match="forecast"):
            make("sa")

    def test_shape_checks(self, make, occ_fine, perfect):
        with pytest.raises(ValueError, match="true occupancy"):
            make("schedule", occupancy=occ_fine[:, :100])
        with pytest.raises(ValueError, match="weather"):
            make("schedule", weather=np.zeros(10))
        with pytest.raises(ValueError, match="forecast"):
            make("ns", forecast=perfect[:2])


class TestNonPredictive:
    def test_schedule_on_empty_building(self, make, occ_fine):
        res = run_day(make("schedule", occupancy=np.zeros_like(occ_fine)))
        assert res.E > 0
        assert res.D_pct == 0.0

    def test_reactive_on_empty_building(self, make, occ_fine):
        res = run_day(make("reactive", occupancy=np.zeros_like(occ_fine)))
        assert res.E == 0.0
        assert not res.series["v"].any()

    @pytest.mark.parametrize("controller", ["schedule", "reactive"])
    def test_forecast_is_ignored(self, make, perfect, controller, rng):
        noisy = rng.integers(0, 2, perfect.shape)
        a, b = run_day(make(controller)), run_day(make(controller, noisy))
        assert a.E == b.E
        for key in a.series:
            np.testing.assert_array_equal(a.series[key], b.series[key])

    def test_reactive_follows_last_sample(self, make, occ_fine):
        res = run_day(make("reactive"))
        on = res.series["v"][:, ::20] > 0
        expected = np.zeros_like(on)
        expected[:, 1:] = occ_fine[:, 19:-1:20] == 1
        np.testing.assert_array_equal(on, expected)


class TestMetrics:
    def test_energy_is_power_integral(self, ns_perfect):
        assert ns_perfect.E == pytest.approx(daily_energy(ns_perfect.series["Po"], 30), rel=1e-12)

    def test_discomfort_uses_true_occupancy(self, ns_perfect, occ_fine):
        s = ns_perfect.series
        for j in range(occ_fine.shape[0]):
            series = ComfortSeries(s["pmv"][j], s["D"][j], occ_fine[j])
            assert ns_perfect.D_pct_rooms[j] == pytest.approx(discomfort_percent(series))

    def test_controls_held_between_boundaries(self, ns_perfect):
        v = ns_perfect.series["v"].reshape(5, 144, 20)
        assert (v == v[:, :, :1]).all()
        u = ns_perfect.series["u"].reshape(24, 120)
        assert (u == u[:, :1]).all()

    def test_no_spot_without_sa(self, ns_perfect):
        assert not ns_perfect.series["S_he"].any() and not ns_perfect.series["S_f"].any()

    def test_ns_is_comfortable_in_summer(self, ns_perfect):
        assert ns_perfect.D_pct == 0.0


class TestDeterminism:
    def test_repeat_run_is_identical(self, make, perfect, ns_perfect):
        again = run_day(make("ns", perfect))
        assert again.E == ns_perfect.E
        for key in again.series:
            np.testing.assert_array_equal(again.series[key], ns_perfect.series[key])

    def test_forecast_matters_for_predictive(self, make, perfect, ns_perfect):
        wrong = np.zeros_like(perfect)
        wrong[:, 40:110] = 1
        assert run_day(make("ns", wrong)).E != ns_perfect.E

    def test_derive_seed(self):
        a = derive_seed(0, "d001", 0.2, 3).generate_state(2)
        assert np.array_equal(a, derive_seed(0, "d001", 0.2, 3).generate_state(2))
        assert not np.array_equal(a, derive_seed(0, "d001", 0.2, 4).generate_state(2))
        assert not np.array_equal(a, derive_seed(1, "d001", 0.2, 3).generate_state(2))
        assert not np.array_equal(a, derive_seed(0, "d002", 0.2, 3).generate_state(2))


class TestForecasts:
    def test_shapes_and_band(self, truth, matrix):
        fc, ids, meta = build_forecasts(truth, matrix, 0.2, 4, 0, "d003", 600)
        assert len(fc) == 4 and all(f.shape == (5, 144) for f in fc)
        assert all(len(i) == 5 for i in ids)
        for j, s in enumerate(truth):
            ref = select_reference(s, matrix)
            for rep in range(4):
                assert abs(matrix.d[ref, ids[rep][j]] - 0.2) <= meta["tol"][j] + 1e-12

    def test_zero_level_is_perfect(self, truth, matrix, perfect):
        fc, _, _ = build_forecasts(truth, matrix, 0.0, 3, 0, "d003", 600)
        for f in fc:
            np.testing.assert_array_equal(f, perfect)

    def test_seeded(self, truth, matrix):
        a = build_forecasts(truth, matrix, 0.1, 3, 5, "d003", 600)[1]
        b = build_forecasts(truth, matrix, 0.1, 3, 5, "d003", 600)[1]
        assert a == b

    def test_candidate_days(self, dataset, matrix):
        by = {row[0].day_id: row for row in dataset}
        keep = days_with_candidates(by, matrix, (0.2,))
        assert keep and set(keep) <= set(by)
        assert days_with_candidates(by, matrix, (0.0,)) == list(by)
        assert days_with_candidates(by, matrix, (0.95,)) == []


@pytest.fixture(scope="module")
def sweep(cfg, dataset, summer_weather, matrix):
    by = {row[0].day_id: row for row in dataset}
    wx = {row[0].day_id: summer_weather[i] for i, row in enumerate(dataset)}
    return run_sweep(cfg, "summer", by, wx, ["d003"], controllers=("schedule", "ns"),
                     levels=(0.0, 0.2, 0.95), replicates=2, master_seed=1, matrix=matrix, jobs=1)


class TestSweep:
    def test_cells(self, sweep):
        assert set(sweep.baselines) == {("d003", "schedule"), ("d003", "ns")}
        assert {k[1] for k in sweep.cells} == {0.0, 0.2}
        assert all(len(v) == 2 for v in sweep.cells.values())

    def test_unreachable_level_is_skipped(self, sweep):
        assert [(s["day"], s["level"]) for s in sweep.skipped] == [("d003", 0.95)]
        assert sweep.mean_robustness("ns", 0.95)[2] == 0

    def test_zero_level_matches_baseline(self, sweep):
        base = sweep.baselines[("d003", "ns")]
        assert all(r.E == base.E and r.D_pct == base.D_pct for r in sweep.cells[("d003", 0.0, "ns")])
        assert sweep.robustness[("d003", 0.0, "ns")] == 100.0

    def test_schedule_invariant(self, sweep):
        base = sweep.baselines[("d003", "schedule")]
        for level in (0.0, 0.2):
            assert all(r.E == base.E for r in sweep.cells[("d003", level, "schedule")])
            assert sweep.robustness[("d003", level, "schedule")] == 100.0
