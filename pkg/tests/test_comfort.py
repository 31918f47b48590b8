from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pecsim.comfort import (
    ComfortSeries, RobustnessBox, daily_energy, discomfort_instant, discomfort_percent, pmv, robustness,
)
from pecsim.core import ComfortSpec

SUMMER = ComfortSpec()
WINTER = ComfortSpec(t_neutral=22.0)


class TestPMV:
    @pytest.mark.parametrize("spec,T,expected", [(SUMMER, 24.0, 0.0), (SUMMER, 25.0, 0.5), (WINTER, 21.0, -0.5)])
    def test_still_air(self, spec, T, expected):
        assert pmv(T, 0.0, spec) == pytest.approx(expected, abs=1e-12)

    def test_fan_cools(self):
        assert pmv(25.0, 1.0, SUMMER) == pytest.approx(0.5 - 1.1 + 0.05)

    def test_negative_air_speed(self):
        with pytest.raises(ValueError):
            pmv(24.0, -0.1, SUMMER)

    @given(st.floats(0, 40), st.floats(0, 3))
    def test_increasing_in_temperature(self, T, va):
        assert pmv(T + 0.1, va, SUMMER) > pmv(T, va, SUMMER)


class TestDiscomfort:
    @pytest.mark.parametrize("P,D", [(0.0, 0.0), (0.5, 0.0), (-0.5, 0.0), (0.8, 0.3), (-1.0, 0.5)])
    def test_instant(self, P, D):
        assert discomfort_instant(P, (-0.5, 0.5)) == pytest.approx(D)

    def test_bad_band(self):
        with pytest.raises(ValueError):
            discomfort_instant(0.0, (0.5, -0.5))

    def test_percent_counts_occupied_only(self):
        s = ComfortSeries(P=np.zeros(4), D=np.array([0.2, 0.0, 0.3, 0.0]), O=np.array([1, 1, 0, 0]))
        assert discomfort_percent(s) == 50.0

    def test_percent_empty_room(self):
        s = ComfortSeries(np.zeros(3), np.ones(3), np.zeros(3))
        assert discomfort_percent(s) == 0.0

    def test_series_validation(self):
        with pytest.raises(ValueError):
            ComfortSeries(np.zeros(3), np.zeros(2), np.zeros(3))
        with pytest.raises(ValueError):
            ComfortSeries(np.zeros(1), -np.ones(1), np.zeros(1))


class TestEnergyAndRobustness:
    def test_constant_power_day(self):
        assert daily_energy(np.full(2880, 2.0), 30) == pytest.approx(48.0)

    def test_bad_tau(self):
        with pytest.raises(ValueError):
            daily_energy([1.0], 0)

    def test_box_edges_inclusive(self):
        box = RobustnessBox(100.0, 10.0)
        assert box.contains(120.0, 15.0) and box.contains(80.0, 5.0)
        assert not box.contains(120.1, 10.0)

    def test_counts(self):
        pts = [(100.0, 10.0)] * 3 + [(200.0, 10.0)]
        assert robustness(pts, RobustnessBox(100.0, 10.0)) == 75.0

    def test_needs_points(self):
        with pytest.raises(ValueError):
            robustness([], RobustnessBox(0.0, 0.0))

    def test_positive_tolerances(self):
        with pytest.raises(ValueError):
            RobustnessBox(0.0, 0.0, energy_tol=0.0)
