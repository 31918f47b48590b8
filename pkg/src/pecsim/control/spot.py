"""Personal comfort device (desk fan + heater) reacting at the fine timestep."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np


def spot_kernel(P, occupied, heater, fan, P_ll, P_ul, h):
    """One room's (heater, fan) after observing PMV ``P``; hysteresis ``h`` around the band."""
    if not occupied:
        return False, False
    if P < P_ll - h:
        return True, False
    if P > P_ul + h:
        return False, True
    if P_ll + h <= P <= P_ul - h:
        return False, False
    return heater, fan


spot_nb = numba.njit(cache=True)(spot_kernel)


@dataclass(frozen=True)
class SpotState:
    heater: np.ndarray
    fan: np.ndarray
    pmv: np.ndarray | None = None

    def __post_init__(self):
        heater = np.atleast_1d(np.asarray(self.heater, bool))
        fan = np.atleast_1d(np.asarray(self.fan, bool))
        if heater.shape != fan.shape:
            raise ValueError("heater and fan arrays differ in shape")
        if np.any(heater & fan):
            raise ValueError("heater and fan cannot both be on in one room")
        object.__setattr__(self, "heater", heater)
        object.__setattr__(self, "fan", fan)

    @classmethod
    def off(cls, n_rooms: int) -> SpotState:
        return cls(np.zeros(n_rooms, bool), np.zeros(n_rooms, bool))


def spot_react(pmv, occupied, prior: SpotState, band: tuple[float, float], hysteresis: float = 0.05) -> SpotState:
    """Apply the reaction rule room by room.

    ``pmv`` is the local reading with the device's fan effect excluded, so
    switching the fan does not feed back into its own trigger.
    """
    P = np.atleast_1d(np.asarray(pmv, float))
    occ = np.atleast_1d(np.asarray(occupied)).astype(bool)
    heater = prior.heater.copy()
    fan = prior.fan.copy()
    for j in range(P.size):
        heater[j], fan[j] = spot_kernel(P[j], occ[j], heater[j], fan[j], band[0], band[1], hysteresis)
    return SpotState(heater, fan, P)
