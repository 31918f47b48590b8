"""Synthetic weather and occupancy so the pipeline runs without private data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DAY_S
from .occupancy import OccupancyString

SEASON_WEATHER = {"summer": (27.0, 4.0), "winter": (-8.0, 4.0)}


@dataclass(frozen=True)
class WeatherProfile:
    season: str = "summer"
    mean: float = 27.0
    amplitude: float = 4.0
    noise_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.amplitude < 0 or self.noise_std < 0:
            raise ValueError("amplitude and noise std must be non-negative")

    @classmethod
    def default(cls, season: str, seed: int = 0) -> WeatherProfile:
        mean, amp = SEASON_WEATHER[season]
        return cls(season, mean, amp, 0.5, seed)


@dataclass(frozen=True)
class OccupancyProfile:
    arrival_mean: float = 9.0 * 3600
    arrival_std: float = 60 * 60
    departure_mean: float = 17.5 * 3600
    departure_std: float = 60 * 60
    absence_rate: float = 1.5
    absence_mean: float = 30 * 60
    absence_std: float = 15 * 60
    seed: int = 0

    def __post_init__(self):
        if not self.arrival_mean < self.departure_mean:
            raise ValueError("arrival mean must precede departure mean")
        for name in ("arrival_std", "departure_std", "absence_rate", "absence_mean", "absence_std"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def gen_weather(profile: WeatherProfile, days: int, tau: int = 600) -> np.ndarray:
    """Outside temperature, shape (days, 86400 // tau): a cosine day cycle plus white noise."""
    if days < 1:
        raise ValueError("days must be >= 1")
    t = np.arange(0, DAY_S, tau)
    base = profile.mean - profile.amplitude * np.cos(2 * np.pi * t / DAY_S)
    rng = np.random.default_rng(profile.seed)
    noise = rng.normal(0.0, profile.noise_std, size=(days, t.size)) if profile.noise_std > 0 else 0.0
    return np.broadcast_to(base, (days, t.size)) + noise


def _draw(rng: np.random.Generator, mean: float, std: float) -> float:
    return rng.normal(mean, std) if std else mean


def _one_day(profile: OccupancyProfile, rng: np.random.Generator, granularity: int) -> np.ndarray:
    n = DAY_S // granularity
    for _ in range(100):
        arrive = _draw(rng, profile.arrival_mean, profile.arrival_std)
        leave = _draw(rng, profile.departure_mean, profile.departure_std)
        arrive = min(max(arrive, 0.0), DAY_S)
        leave = min(max(leave, 0.0), DAY_S)
        if arrive < leave:
            break
    else:
        raise ValueError("occupancy profile keeps producing arrival >= departure")
    bits = np.zeros(n, np.uint8)
    a, b = int(round(arrive / granularity)), int(round(leave / granularity))
    bits[a:b] = 1
    n_abs = rng.poisson(profile.absence_rate) if profile.absence_rate > 0 else 0
    for _ in range(n_abs):
        start = rng.uniform(arrive, leave)
        dur = max(granularity, rng.normal(profile.absence_mean, profile.absence_std))
        s, e = int(round(start / granularity)), int(round((start + dur) / granularity))
        bits[s:e] = 0
    return bits


def gen_occupancy(profile: OccupancyProfile, days: int, rooms: int, granularity: int = 30,
                  day_ids=None) -> list[list[OccupancyString]]:
    """``out[d][j]`` is room ``j`` on day ``d``; each room-day draws from its own seeded stream."""
    if days < 2:
        raise ValueError("need at least 2 days to build an error matrix")
    if rooms < 1:
        raise ValueError("rooms must be >= 1")
    ids = list(day_ids) if day_ids is not None else [f"d{d:03d}" for d in range(days)]
    out = []
    for d in range(days):
        row = []
        for j in range(rooms):
            rng = np.random.default_rng([profile.seed, d, j])
            row.append(OccupancyString(_one_day(profile, rng, granularity), granularity, ids[d]))
        out.append(row)
    return out
