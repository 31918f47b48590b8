"""Receding-horizon MPC planning, without (NS) and with (SA) personal comfort devices."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from ..comfort import discomfort_kernel, pmv_kernel
from ..core import Config, ControlVector
from . import solver as S

SCREEN_ITER = 20
MODES = ("ns", "sa")


@dataclass(frozen=True)
class ForecastBundle:
    """Coarse-step forecasts for a whole day: occupancy (R, n_coarse) and outside temperature."""

    occupancy: np.ndarray
    T_ex: np.ndarray

    def __post_init__(self):
        occ = np.asarray(self.occupancy)
        tex = np.asarray(self.T_ex, float)
        if occ.ndim != 2 or occ.shape[1] != tex.shape[0]:
            raise ValueError("forecast occupancy and weather must cover the same steps")
        object.__setattr__(self, "occupancy", occ.astype(np.uint8))
        object.__setattr__(self, "T_ex", tex)


@dataclass
class Plan:
    start_step: int
    end_step: int
    mode: str
    u_blocks: np.ndarray
    u: np.ndarray
    v: np.ndarray
    r: float
    duty: np.ndarray
    T_pred: np.ndarray
    D_pred: np.ndarray
    req: np.ndarray
    objective: float
    energy: float
    penalty: float
    converged: bool
    iterations: int
    history: np.ndarray = field(repr=False, default=None)

    @property
    def T_oc_pred(self) -> np.ndarray:
        return self.T_pred + self.D_pred

    def control(self, i: int = 0) -> ControlVector:
        return ControlVector(u=float(self.u[i]), v=self.v[:, i].copy(), r=self.r)

    def band_penalty(self, comfort, v_a: float, weight: float) -> float:
        """Unsmoothed penalty on the untightened band over the predicted trajectory."""
        return comfort_penalty(self.T_oc_pred, self.req, comfort, v_a, weight)


def comfort_penalty(T_oc: np.ndarray, req: np.ndarray, comfort, v_a: float, weight: float) -> float:
    P = pmv_kernel(T_oc, v_a, comfort.P1, comfort.P2, comfort.P3, comfort.P4)
    D = discomfort_kernel(P, comfort.P_ll, comfort.P_ul)
    return float(weight * np.sum(D * (req > 0)))


def room_param_rows(cfg: Config, mode: str) -> np.ndarray:
    p = cfg.building.room_arrays()
    q = p["Q_ap"] if mode == "sa" else p["Q_ap"] + p["Q_oc"]
    # without heater planning the duty has no effect and the solver leaves it at zero
    q_he = p["Q_he"] if cfg.control.plan_heater else np.zeros_like(p["Q_he"])
    rp = np.zeros((S.N_RP, cfg.building.n_rooms))
    rp[S.R_C] = p["C"]
    rp[S.R_A] = p["alpha_ex"]
    rp[S.R_B] = p["b"]
    rp[S.R_Q] = q
    rp[S.R_COC] = p["C_oc"]
    rp[S.R_AIN] = p["alpha_in"]
    rp[S.R_QOC] = p["Q_oc"]
    rp[S.R_QHE] = q_he
    return rp


def solver_params(cfg: Config, season: str, mode: str) -> np.ndarray:
    b = cfg.building
    c = cfg.comfort(season)
    ctl = cfg.control
    va = b.v_a_draft
    prm = np.zeros(S.N_PRM)
    prm[S.P_TAU] = cfg.timebase.tau_coarse
    prm[S.P_R] = ctl.r
    prm[S.P_ETA_H] = b.eta_h
    prm[S.P_ETA_C] = b.eta_c
    prm[S.P_ETA_F] = b.eta_f
    prm[S.P_VMAX] = b.v_max
    prm[S.P_P1] = c.P1
    prm[S.P_PMV_OFF] = -c.P2 * va + c.P3 * va * va - c.P4
    prm[S.P_LO] = c.P_ll + ctl.plan_margin
    prm[S.P_HI] = c.P_ul - ctl.plan_margin
    prm[S.P_W] = ctl.penalty_weight
    prm[S.P_HUBER] = S.HUBER_WIDTH
    prm[S.P_SA] = 1.0 if mode == "sa" else 0.0
    prm[S.P_MAXIT] = ctl.max_iter
    prm[S.P_RELTOL] = ctl.rel_tol
    prm[S.P_PATIENCE] = ctl.patience
    prm[S.P_SCREEN] = SCREEN_ITER
    return prm


def mpc_plan(
    T_hv,
    delta,
    forecasts: ForecastBundle,
    mode: str,
    cfg: Config,
    season: str,
    start_step: int = 0,
    warm: Plan | None = None,
    current_u: float | None = None,
    search_u: bool = True,
    search_blocks: int = -1,
    window: float = -1.0,
) -> Plan:
    """Plan the rest of the day from the measured room state.

    ``current_u`` freezes the supply temperature for the remainder of the
    current hour when planning starts mid-hour. ``search_blocks`` bounds how
    many leading hour blocks get the exhaustive supply-temperature pass
    (negative means all of them) and a positive ``window`` restricts that pass
    to grid values within that distance of the warm-start temperature.
    """
    if mode not in MODES:
        raise ValueError(f"unknown MPC mode {mode!r}")
    b = cfg.building
    if b.u_min > b.u_max:
        raise ValueError("infeasible supply temperature bounds")
    tb = cfg.timebase
    n_coarse = tb.coarse_per_day
    cpu = tb.coarse_per_u
    if not 0 <= start_step < n_coarse:
        raise ValueError(f"start step {start_step} outside the day")
    steps = np.arange(start_step, n_coarse)
    hours = steps // cpu
    block_of = hours - hours[0]
    nb = int(block_of[-1]) + 1
    grid = cfg.control.u_grid(season)

    u_init = np.full(nb, np.nan)
    v_init = d_init = None
    if warm is not None:
        shift = start_step - warm.start_step
        if shift >= 0:
            v_init = warm.v[:, shift:]
            d_init = warm.duty[:, shift:]
            warm_h0 = warm.start_step // cpu
            for i in range(nb):
                src = hours[0] + i - warm_h0
                if 0 <= src < warm.u_blocks.size:
                    u_init[i] = warm.u_blocks[src]
    free = np.ones(nb, bool)
    if current_u is not None and start_step % cpu:
        u_init[0] = current_u
        free[0] = False
    greedy = bool(np.isnan(u_init[free]).all()) if free.any() else False
    fill = np.nanmedian(u_init) if np.isfinite(u_init).any() else float(grid[len(grid) // 2])
    u_init = np.where(np.isnan(u_init), fill, u_init)

    occ = np.asarray(forecasts.occupancy[:, start_step:], float)
    T_hv = np.asarray(T_hv, float)
    D0 = np.zeros_like(T_hv) if mode == "ns" else np.asarray(delta, float)
    problem = S.TrajectoryProblem(
        T0=T_hv, D0=D0, tex=forecasts.T_ex[start_step:], occ=occ,
        req=S.comfort_required(occ), block_of=block_of, u_init=u_init, free=free, grid=grid,
        rp=room_param_rows(cfg, mode), prm=solver_params(cfg, season, mode),
        v_init=v_init, d_init=d_init, search_u=search_u, greedy_start=greedy,
        search_blocks=search_blocks, window=window,
    )
    sol = S.solve_trajectory(problem)
    return Plan(
        start_step=start_step, end_step=n_coarse, mode=mode, u_blocks=sol.u_blocks, u=sol.u,
        v=sol.v, r=cfg.control.r, duty=sol.d, T_pred=sol.T, D_pred=sol.D, req=problem.req,
        objective=sol.objective, energy=sol.energy, penalty=sol.penalty,
        converged=sol.converged, iterations=sol.iterations, history=sol.history,
    )


class MPCController:
    """Re-plans every coarse step from the measured state; supply temperature re-searched hourly."""

    def __init__(self, cfg: Config, season: str, mode: str, forecasts: ForecastBundle):
        self.cfg = cfg
        self.season = season
        self.mode = mode
        self.forecasts = forecasts
        self.plan: Plan | None = None
        self.first_plan: Plan | None = None
        self.converged: list[bool] = []
        self.predicted_next: list[np.ndarray] = []
        self.predicted_req: list[np.ndarray] = []

    def step(self, k: int, T_hv, delta) -> ControlVector:
        cpu = self.cfg.timebase.coarse_per_u
        current_u = None
        if self.plan is not None and k % cpu:
            current_u = float(self.plan.u[k - self.plan.start_step])
        plan = mpc_plan(T_hv, delta, self.forecasts, self.mode, self.cfg, self.season,
                        start_step=k, warm=self.plan, current_u=current_u,
                        search_u=(k % cpu == 0) or self.plan is None,
                        search_blocks=-1 if self.plan is None else self.cfg.control.u_search_blocks,
                        window=-1.0 if self.plan is None else self.cfg.control.u_window)
        self.plan = plan
        if self.first_plan is None:
            self.first_plan = plan
        self.converged.append(plan.converged)
        self.predicted_next.append(plan.T_oc_pred[:, 1].copy())
        self.predicted_req.append(plan.req[:, 1].copy())
        return plan.control(0)


def export_plan_csv(plan: Plan, path, tau_coarse: int = 600) -> None:
    """Write ``t,u,r,v_room1..v_roomN,converged`` rows for audit."""
    R = plan.v.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "u", "r", *[f"v_room{j + 1}" for j in range(R)], "converged"])
        for i in range(plan.v.shape[1]):
            t = (plan.start_step + i) * tau_coarse
            w.writerow([t, repr(float(plan.u[i])), repr(plan.r),
                        *[repr(float(x)) for x in plan.v[:, i]], int(plan.converged)])
