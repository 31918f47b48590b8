from __future__ import annotations

import numpy as np
import pytest

from pecsim.core import Config
from pecsim.datagen import OccupancyProfile, WeatherProfile, gen_occupancy, gen_weather
from pecsim.occupancy import build_error_matrix


@pytest.fixture(scope="session")
def cfg() -> Config:
    return Config()


@pytest.fixture(scope="session")
def dataset():
    """25 days x 5 rooms of synthetic occupancy (125 strings)."""
    return gen_occupancy(OccupancyProfile(seed=7), 25, 5)


@pytest.fixture(scope="session")
def summer_weather():
    return gen_weather(WeatherProfile.default("summer", 7), 25)


@pytest.fixture(scope="session")
def winter_weather():
    return gen_weather(WeatherProfile.default("winter", 7), 25)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def matrix(dataset):
    return build_error_matrix([s for row in dataset for s in row])


# ---------------------------------------------------------------------------
# one pass/fail line per acceptance criterion in the terminal summary

_CRITERIA: dict[int, dict] = {}


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    entry = _CRITERIA.setdefault(number, {"title": title, "failed": [], "passed": 0})
    if report.failed:
        entry["failed"].append(report.nodeid.split("::")[-1])
    elif report.when == "call" and report.passed:
        entry["passed"] += 1


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        report.criterion = (marker.args[0], marker.args[1])


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "FAIL" if entry["failed"] else "PASS"
        line = f"criterion {number:2d} {status}: {entry['title']} ({entry['passed']} passed"
        if entry["failed"]:
            line += f", failed: {', '.join(entry['failed'])}"
        terminalreporter.write_line(line + ")")
