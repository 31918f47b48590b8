"""Comfort, energy and robustness metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .core import ComfortSpec


def pmv_kernel(T_oc, v_a, P1, P2, P3, P4):
    return P1 * T_oc - P2 * v_a + P3 * v_a * v_a - P4


def discomfort_kernel(P, P_ll, P_ul):
    return np.maximum(0.0, np.maximum(P_ll - P, P - P_ul))


pmv_nb = numba.njit(cache=True)(pmv_kernel)
discomfort_nb = numba.njit(cache=True)(discomfort_kernel)


def pmv(T_oc, v_a, coeffs: ComfortSpec):
    """Linear predicted mean vote at occupied-region temperature ``T_oc`` and air speed ``v_a``."""
    if np.any(np.asarray(v_a) < 0):
        raise ValueError("air velocity must be non-negative")
    return pmv_kernel(T_oc, v_a, coeffs.P1, coeffs.P2, coeffs.P3, coeffs.P4)


def discomfort_instant(P, band: tuple[float, float]):
    lo, hi = band
    if not lo < hi:
        raise ValueError("comfort band needs P_ll < P_ul")
    out = discomfort_kernel(P, lo, hi)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class ComfortSeries:
    P: np.ndarray
    D: np.ndarray
    O: np.ndarray

    def __post_init__(self):
        if not len(self.P) == len(self.D) == len(self.O):
            raise ValueError("comfort series lengths differ")
        if np.any(np.asarray(self.D) < 0):
            raise ValueError("discomfort must be non-negative")


def discomfort_percent(series: ComfortSeries) -> float:
    """Share of occupied instants with nonzero discomfort, in percent (0 for an empty day)."""
    occ = np.asarray(series.O) == 1
    if len(occ) == 0:
        raise ValueError("empty comfort series")
    n_occ = int(occ.sum())
    if n_occ == 0:
        return 0.0
    return 100.0 * np.count_nonzero(occ & (np.asarray(series.D) != 0)) / n_occ


def daily_energy(power, tau: float) -> float:
    """Energy in kWh from a power series in kW sampled every ``tau`` seconds."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    return float(np.sum(power) * tau / 3600.0)


@dataclass(frozen=True)
class RobustnessBox:
    E_base: float
    D_base: float
    energy_tol: float = 20.0
    discomfort_tol: float = 5.0

    def __post_init__(self):
        if self.energy_tol <= 0 or self.discomfort_tol <= 0:
            raise ValueError("robustness tolerances must be positive")

    def contains(self, E, D):
        E = np.asarray(E, float)
        D = np.asarray(D, float)
        return (np.abs(E - self.E_base) <= self.energy_tol) & (np.abs(D - self.D_base) <= self.discomfort_tol)


def robustness(points, box: RobustnessBox) -> float:
    """Percentage of (energy, discomfort) points inside the tolerance box around the baseline."""
    pts = np.asarray(points, float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise ValueError("robustness needs at least one point")
    inside = box.contains(pts[:, 0], pts[:, 1])
    return 100.0 * np.count_nonzero(inside) / pts.shape[0]
