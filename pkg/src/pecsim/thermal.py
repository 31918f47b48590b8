"""Discrete-time room thermal dynamics and AHU plant power.

The ``*_kernel`` functions are plain arithmetic so they broadcast over numpy
arrays and also compile under numba; the engine and the MPC solver call the
compiled copies, so simulation and planning share one transcription.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import BuildingSpec, ControlVector, RoomState


@dataclass(frozen=True)
class ExogenousInputs:
    T_ex: float
    O: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.O)
        if not np.isin(occ, (0, 1)).all():
            raise ValueError("occupancy must be 0 or 1")
        object.__setattr__(self, "O", occ.astype(float))


@dataclass(frozen=True)
class PlantState:
    T_mx: float
    T_cu: float
    V: float
    Po: float


def single_region_kernel(T, u, v, T_ex, occ, C, alpha_ex, Q, b, tau):
    """Forward-Euler room step; ``Q`` is the occupancy-gated load, ``b = rho*sigma/n_r``."""
    return T + tau / C * (b * v * (u - T) + alpha_ex * (T_ex - T) + Q * occ)


def offset_kernel(delta, occ, heater, C_oc, alpha_in, Q_oc, Q_he, tau):
    """Occupied-region offset step: occupant and heater gains, leak to the rest of the room."""
    return delta + tau / C_oc * (Q_oc * occ + Q_he * heater - alpha_in * delta)


def unoccupied_kernel(T_hv_next, delta_prev, C, C_oc, alpha_in, tau):
    return T_hv_next + tau * alpha_in / (C - C_oc) * delta_prev


def power_kernel(V, u, T_mx, eta_h, eta_c, eta_f, heater_kw):
    T_cu = np.minimum(T_mx, u)
    return V * eta_h * (u - T_cu) + V * V * eta_f + V * eta_c * (T_mx - T_cu) + heater_kw


single_region_nb = numba.njit(cache=True)(single_region_kernel)
offset_nb = numba.njit(cache=True)(offset_kernel)
unoccupied_nb = numba.njit(cache=True)(unoccupied_kernel)
power_nb = numba.njit(cache=True)(power_kernel)


def step_single_region(T, controls: ControlVector, ex: ExogenousInputs, building: BuildingSpec, tau: float):
    """Advance every room one step of the single-region model (occupant and appliance heat lumped)."""
    p = building.room_arrays()
    return single_region_kernel(
        np.asarray(T, float), controls.u, controls.v, ex.T_ex, ex.O,
        p["C"], p["alpha_ex"], p["Q_oc"] + p["Q_ap"], p["b"], tau,
    )


def step_two_region(states, controls: ControlVector, ex: ExogenousInputs, building: BuildingSpec, tau: float):
    """Advance every room one step of the two-region model.

    Only appliance heat enters the HVAC temperature; occupant and heater heat
    enter the occupied-region offset. The unoccupied region uses the offset
    from the start of the step.
    """
    p = building.room_arrays()
    T_hv = np.array([s.T_hv for s in states], float)
    delta = np.array([s.delta_oc for s in states], float)
    T_hv_next = single_region_kernel(T_hv, controls.u, controls.v, ex.T_ex, ex.O,
                                     p["C"], p["alpha_ex"], p["Q_ap"], p["b"], tau)
    delta_next = offset_kernel(delta, ex.O, controls.heater.astype(float),
                               p["C_oc"], p["alpha_in"], p["Q_oc"], p["Q_he"], tau)
    T_un = unoccupied_kernel(T_hv_next, delta, p["C"], p["C_oc"], p["alpha_in"], tau)
    return [RoomState(float(a), float(d), float(t)) for a, d, t in zip(T_hv_next, delta_next, T_un)]


def return_temperature(v, T) -> float:
    """Flow-weighted mean room temperature; the plain mean when no air flows."""
    v = np.asarray(v, float)
    T = np.asarray(T, float)
    V = v.sum()
    return float(T.mean()) if V <= 0 else float(v @ T / V)


def mixed_air_temperature(r: float, T_ret: float, T_ex: float) -> float:
    if not 0.0 <= r <= 1.0:
        raise ValueError(f"reuse ratio must lie in [0, 1], got {r}")
    return r * T_ret + (1.0 - r) * T_ex


def plant_state(controls: ControlVector, T_mx: float, building: BuildingSpec, spot_aware: bool = False) -> PlantState:
    V = controls.V
    heater_kw = 0.0
    if spot_aware:
        p = building.room_arrays()
        heater_kw = float(p["Q_he"] @ controls.heater.astype(float))
    Po = power_kernel(V, controls.u, T_mx, building.eta_h, building.eta_c, building.eta_f, heater_kw)
    return PlantState(T_mx, float(min(T_mx, controls.u)), V, float(Po))


def plant_power(controls: ControlVector, T_mx: float, building: BuildingSpec, spot_aware: bool = False) -> float:
    """Instantaneous AHU power in kW; heater power counts only in SPOT-aware mode."""
    return plant_state(controls, T_mx, building, spot_aware).Po
