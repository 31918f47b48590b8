"""Non-predictive controllers: fixed schedule and occupancy-reactive."""

from __future__ import annotations

import numpy as np

from ..core import ControlSpec, ControlVector


def _schedule_u(season: str, spec: ControlSpec) -> float:
    if season == "summer":
        return spec.schedule_u_summer
    if season == "winter":
        return spec.schedule_u_winter
    raise ValueError(f"unknown season {season!r}")


def in_working_hours(t: float, spec: ControlSpec) -> bool:
    hour = (t % 86400) / 3600.0
    return spec.schedule_start_h <= hour < spec.schedule_end_h


def schedule_controller(t: float, season: str, n_rooms: int = 5, spec: ControlSpec | None = None) -> ControlVector:
    """Fixed supply temperature and flow during working hours, plant off otherwise."""
    spec = spec or ControlSpec()
    u = _schedule_u(season, spec)
    flow = spec.schedule_v if in_working_hours(t, spec) else 0.0
    return ControlVector(u=u, v=np.full(n_rooms, flow), r=spec.r)


def reactive_controller(t: float, occupied, season: str, spec: ControlSpec | None = None) -> ControlVector:
    """Supply each room only while it was occupied at the last measurement, around the clock."""
    spec = spec or ControlSpec()
    occ = np.asarray(occupied).astype(bool)
    return ControlVector(u=_schedule_u(season, spec), v=np.where(occ, spec.schedule_v, 0.0), r=spec.r)
