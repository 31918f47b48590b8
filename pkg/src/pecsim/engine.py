"""Closed-loop day simulation and sweeps over days, error levels and replicates."""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numba
import numpy as np

from .comfort import RobustnessBox, discomfort_nb, pmv_nb, robustness
from .control import CONTROLLERS, PREDICTIVE
from .control.baseline import reactive_controller, schedule_controller
from .control.mpc import ForecastBundle, MPCController, comfort_penalty
from .control.spot import spot_nb
from .core import Config
from .occupancy import (
    ErrorMatrix, NoCandidatesError, OccupancyString, build_error_matrix, candidate_pool, inject_errors_detailed,
    select_reference, upsample_to_coarse,
)
from .thermal import offset_nb, power_nb, single_region_nb, unoccupied_nb

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Scenario:
    day_id: str
    controller: str
    season: str
    occupancy: np.ndarray  # true occupancy, (rooms, fine samples)
    T_ex: np.ndarray  # (coarse samples,)
    cfg: Config
    forecast: np.ndarray | None = None  # (rooms, coarse samples)
    T_init: np.ndarray | None = None
    seeds: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.controller not in CONTROLLERS:
            raise ValueError(f"unknown controller {self.controller!r}; choose from {CONTROLLERS}")
        tb = self.cfg.timebase
        R = self.cfg.building.n_rooms
        occ = np.asarray(self.occupancy)
        if occ.shape != (R, tb.fine_per_day):
            raise ValueError(f"true occupancy must be {(R, tb.fine_per_day)}, got {occ.shape}")
        if np.asarray(self.T_ex).shape != (tb.coarse_per_day,):
            raise ValueError(f"weather must have {tb.coarse_per_day} coarse samples")
        predictive = self.controller in PREDICTIVE
        if predictive and self.forecast is None:
            raise ValueError(f"controller {self.controller!r} needs an occupancy forecast")
        if self.forecast is not None and np.asarray(self.forecast).shape != (R, tb.coarse_per_day):
            raise ValueError(f"forecast must be {(R, tb.coarse_per_day)}")


@dataclass
class ScenarioResult:
    day_id: str
    controller: str
    season: str
    E: float
    D_pct_rooms: np.ndarray
    converged: np.ndarray
    tau_fine: int
    series: dict | None = None
    planned_penalty: float = float("nan")
    realized_penalty: float = float("nan")
    metadata: dict = field(default_factory=dict)

    @property
    def D_pct(self) -> float:
        return float(np.mean(self.D_pct_rooms))

    def summary(self) -> tuple[float, float]:
        return self.E, self.D_pct


@numba.njit(cache=True)
def simulate_block(T_hv, delta, T_un, heater, fan, u, v, r, tex, occ, rp, ep, sa, offset,
                   o_T_hv, o_T_oc, o_T_un, o_she, o_sf, o_pmv, o_D, o_Po):
    """Advance all rooms over one coarse block of fine steps, logging every fine instant.

    ``rp`` rows: C, alpha_ex, Q_ap, Q_oc, b, C_oc, alpha_in, Q_he.
    ``ep``: tau, eta_h, eta_c, eta_f, v_fan, v_draft, P1, P2, P3, P4, P_ll, P_ul, hysteresis.
    """
    R, nf = occ.shape
    tau = ep[0]
    v_fan = ep[4]
    v_draft = ep[5]
    P1, P2, P3, P4, P_ll, P_ul, h = ep[6], ep[7], ep[8], ep[9], ep[10], ep[11], ep[12]
    V = 0.0
    for j in range(R):
        V += v[j]
    for i in range(nf):
        n = offset + i
        heat_kw = 0.0
        for j in range(R):
            o = occ[j, i] > 0
            if sa:
                P_amb = pmv_nb(T_hv[j] + delta[j], v_draft, P1, P2, P3, P4)
                heater[j], fan[j] = spot_nb(P_amb, o, heater[j], fan[j], P_ll, P_ul, h)
                if heater[j]:
                    heat_kw += rp[7, j]
            va = v_fan if fan[j] else v_draft
            T_oc = T_hv[j] + delta[j]
            P = pmv_nb(T_oc, va, P1, P2, P3, P4)
            o_T_hv[j, n] = T_hv[j]
            o_T_oc[j, n] = T_oc
            o_T_un[j, n] = T_un[j]
            o_she[j, n] = heater[j]
            o_sf[j, n] = fan[j]
            o_pmv[j, n] = P
            o_D[j, n] = discomfort_nb(P, P_ll, P_ul)
        if V > 0.0:
            T_ret = 0.0
            for j in range(R):
                T_ret += v[j] * T_hv[j]
            T_ret /= V
        else:
            T_ret = 0.0
            for j in range(R):
                T_ret += T_hv[j]
            T_ret /= R
        T_mx = r * T_ret + (1.0 - r) * tex
        o_Po[n] = power_nb(V, u, T_mx, ep[1], ep[2], ep[3], heat_kw)
        for j in range(R):
            o = 1.0 if occ[j, i] > 0 else 0.0
            if sa:
                T_next = single_region_nb(T_hv[j], u, v[j], tex, o, rp[0, j], rp[1, j], rp[2, j], rp[4, j], tau)
                d_next = offset_nb(delta[j], o, 1.0 if heater[j] else 0.0, rp[5, j], rp[6, j],
                                   rp[3, j], rp[7, j], tau)
                T_un[j] = unoccupied_nb(T_next, delta[j], rp[0, j], rp[5, j], rp[6, j], tau)
                T_hv[j] = T_next
                delta[j] = d_next
            else:
                T_hv[j] = single_region_nb(T_hv[j], u, v[j], tex, o, rp[0, j], rp[1, j],
                                           rp[2, j] + rp[3, j], rp[4, j], tau)
                T_un[j] = T_hv[j]


def _engine_arrays(cfg: Config, season: str):
    p = cfg.building.room_arrays()
    rp = np.stack([p["C"], p["alpha_ex"], p["Q_ap"], p["Q_oc"], p["b"], p["C_oc"], p["alpha_in"], p["Q_he"]])
    b = cfg.building
    c = cfg.comfort(season)
    ep = np.array([cfg.timebase.tau_fine, b.eta_h, b.eta_c, b.eta_f, b.v_a_fan, b.v_a_draft,
                   c.P1, c.P2, c.P3, c.P4, c.P_ll, c.P_ul, cfg.control.hysteresis])
    return rp, ep


def initial_temperature(scenario: Scenario) -> np.ndarray:
    R = scenario.cfg.building.n_rooms
    if scenario.T_init is not None:
        return np.broadcast_to(np.asarray(scenario.T_init, float), (R,)).copy()
    return np.full(R, float(scenario.T_ex[0]) + scenario.cfg.T_init_offset)


def run_day(scenario: Scenario, keep_series: bool = True) -> ScenarioResult:
    """Closed-loop simulation of one day; comfort and power always use true occupancy."""
    cfg = scenario.cfg
    tb = cfg.timebase
    R = cfg.building.n_rooms
    nf, nc, fpc = tb.fine_per_day, tb.coarse_per_day, tb.fine_per_coarse
    sa = scenario.controller == "sa"
    occ = np.ascontiguousarray(scenario.occupancy, dtype=np.uint8)
    tex = np.asarray(scenario.T_ex, float)
    rp, ep = _engine_arrays(cfg, scenario.season)

    T_hv = initial_temperature(scenario)
    delta = np.zeros(R)
    T_un = T_hv.copy()
    heater = np.zeros(R, np.bool_)
    fan = np.zeros(R, np.bool_)
    o = {k: np.zeros((R, nf)) for k in ("T_hv", "T_oc", "T_un", "pmv", "D", "v")}
    o_she = np.zeros((R, nf), np.bool_)
    o_sf = np.zeros((R, nf), np.bool_)
    o_Po = np.zeros(nf)
    o_u = np.zeros(nf)
    o_r = np.zeros(nf)
    coarse_T_oc = np.zeros((R, nc + 1))

    mpc = None
    if scenario.controller in PREDICTIVE:
        mpc = MPCController(cfg, scenario.season, scenario.controller,
                            ForecastBundle(scenario.forecast, tex))
    for k in range(nc):
        t = k * tb.tau_coarse
        coarse_T_oc[:, k] = T_hv + delta
        if scenario.controller == "schedule":
            cv = schedule_controller(t, scenario.season, R, cfg.control)
        elif scenario.controller == "reactive":
            last = occ[:, k * fpc - 1] if k else np.zeros(R)
            cv = reactive_controller(t, last, scenario.season, cfg.control)
        else:
            cv = mpc.step(k, T_hv.copy(), delta.copy())
            cv.check_bounds(cfg.building)
        lo, hi = k * fpc, (k + 1) * fpc
        o["v"][:, lo:hi] = cv.v[:, None]
        o_u[lo:hi] = cv.u
        o_r[lo:hi] = cv.r
        simulate_block(T_hv, delta, T_un, heater, fan, float(cv.u), cv.v.astype(float), float(cv.r),
                       float(tex[k]), occ[:, lo:hi], rp, ep, sa, lo,
                       o["T_hv"], o["T_oc"], o["T_un"], o_she, o_sf, o["pmv"], o["D"], o_Po)
    coarse_T_oc[:, nc] = T_hv + delta

    E = float(np.sum(o_Po) * tb.tau_fine / 3600.0)
    occb = occ > 0
    n_occ = occb.sum(axis=1)
    n_bad = (occb & (o["D"] != 0)).sum(axis=1)
    D_rooms = np.where(n_occ > 0, 100.0 * n_bad / np.maximum(n_occ, 1), 0.0)

    meta = dict(scenario.seeds)
    result = ScenarioResult(scenario.day_id, scenario.controller, scenario.season, E, D_rooms,
                            np.array(mpc.converged if mpc else [], bool), tb.tau_fine, metadata=meta)
    if mpc is not None:
        comfort = cfg.comfort(scenario.season)
        w = cfg.control.penalty_weight
        va = cfg.building.v_a_draft
        pred = np.stack(mpc.predicted_next, axis=1)
        req = np.stack(mpc.predicted_req, axis=1)
        result.planned_penalty = comfort_penalty(pred, req, comfort, va, w)
        result.realized_penalty = comfort_penalty(coarse_T_oc[:, 1:], req, comfort, va, w)
    if keep_series:
        result.series = {**o, "S_he": o_she, "S_f": o_sf, "Po": o_Po, "u": o_u, "r": o_r,
                         "occ": occ.astype(np.uint8), "coarse_T_oc": coarse_T_oc}
    return result


# ---------------------------------------------------------------------------
# sweeps


def derive_seed(master_seed: int, *keys) -> np.random.SeedSequence:
    """Stable child seed for a (day, level, room, ...) cell."""
    ints = [int(master_seed)]
    for k in keys:
        if isinstance(k, str):
            ints.extend(k.encode())
            ints.append(0xFFFF)
        elif isinstance(k, float):
            ints.append(int(round(k * 1_000_000)))
        else:
            ints.append(int(k))
    return np.random.SeedSequence(ints)


@dataclass
class RunSummary:
    E: float
    D_pct: float
    D_pct_rooms: tuple[float, ...]
    converged_frac: float
    forecast_ids: tuple[int, ...] = ()


@dataclass
class SweepResult:
    season: str
    days: list[str]
    controllers: list[str]
    levels: list[float]
    replicates: int
    master_seed: int
    cells: dict = field(default_factory=dict)  # (day, level, controller) -> [RunSummary]
    baselines: dict = field(default_factory=dict)  # (day, controller) -> RunSummary
    robustness: dict = field(default_factory=dict)  # (day, level, controller) -> percent
    skipped: list = field(default_factory=list)
    injection_meta: dict = field(default_factory=dict)
    box: tuple[float, float] = (20.0, 5.0)

    def mean_robustness(self, controller: str, level: float) -> tuple[float, float, int]:
        vals = [self.robustness[(d, level, controller)] for d in self.days
                if (d, level, controller) in self.robustness]
        if not vals:
            return float("nan"), float("nan"), 0
        return float(np.mean(vals)), float(np.std(vals)), len(vals)


def _summarise(res: ScenarioResult, forecast_ids=()) -> RunSummary:
    conv = float(res.converged.mean()) if res.converged.size else 1.0
    return RunSummary(res.E, res.D_pct, tuple(float(x) for x in res.D_pct_rooms), conv, tuple(forecast_ids))


def _run_job(job):
    key, scenario, ids = job
    return key, _summarise(run_day(scenario, keep_series=False), ids)


def _pool_map(jobs, n_jobs: int):
    if n_jobs <= 1 or len(jobs) <= 1:
        return [_run_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(_run_job, jobs, chunksize=max(1, len(jobs) // (4 * n_jobs))))


def build_forecasts(
    truth: list[OccupancyString],
    matrix: ErrorMatrix,
    level: float,
    replicates: int,
    master_seed: int,
    day_id: str,
    coarse: int,
):
    """Per-room erroneous forecasts (independent draws), upsampled to the coarse step.

    Returns ``(forecasts, ids, meta)`` with ``forecasts[rep]`` of shape (rooms, coarse samples).
    """
    per_room = []
    meta = {"tol": [], "with_replacement": [], "pool": []}
    for j, s in enumerate(truth):
        ref = select_reference(s, matrix)
        inj = inject_errors_detailed(ref, matrix, level, replicates, derive_seed(master_seed, day_id, level, j))
        per_room.append(inj)
        meta["tol"].append(inj.tol)
        meta["with_replacement"].append(inj.with_replacement)
        meta["pool"].append(inj.pool_size)
    forecasts, ids = [], []
    for rep in range(replicates):
        forecasts.append(np.stack([upsample_to_coarse(inj.strings[rep], coarse).bits for inj in per_room]))
        ids.append(tuple(inj.indices[rep] for inj in per_room))
    return forecasts, ids, meta


def days_with_candidates(occupancy: dict[str, list[OccupancyString]], matrix: ErrorMatrix, levels) -> list[str]:
    """Days whose every room has an erroneous-forecast pool at every nonzero level."""
    keep = []
    for day, truth in occupancy.items():
        try:
            for s in truth:
                ref = select_reference(s, matrix)
                for level in levels:
                    if level > 0:
                        candidate_pool(ref, matrix, float(level))
        except NoCandidatesError:
            continue
        keep.append(day)
    return keep


def run_sweep(
    cfg: Config,
    season: str,
    occupancy: dict[str, list[OccupancyString]],
    weather: dict[str, np.ndarray],
    days: list[str],
    controllers=("ns", "sa"),
    levels=(0.05, 0.2),
    replicates: int = 15,
    master_seed: int = 0,
    matrix: ErrorMatrix | None = None,
    jobs: int | None = None,
    box: tuple[float, float] = (20.0, 5.0),
) -> SweepResult:
    """Every (day, level, replicate) for every controller, plus perfect-prediction baselines.

    ``occupancy`` maps day id to the per-room true strings; the error matrix
    defaults to one built over all of them.
    """
    jobs = jobs or os.cpu_count() or 1
    coarse = cfg.timebase.tau_coarse
    if matrix is None:
        matrix = build_error_matrix([s for d in occupancy for s in occupancy[d]])
    levels = [float(x) for x in levels]
    out = SweepResult(season, list(days), list(controllers), levels, replicates, master_seed, box=box)
    job_list = []
    for day in days:
        truth = occupancy[day]
        occ_fine = np.stack([s.bits for s in truth])
        perfect = np.stack([upsample_to_coarse(s, coarse).bits for s in truth])
        for c in controllers:
            sc = Scenario(day, c, season, occ_fine, weather[day], cfg,
                          forecast=perfect if c in PREDICTIVE else None,
                          seeds={"master_seed": master_seed})
            job_list.append((("base", day, c), sc, ()))
        for level in levels:
            try:
                forecasts, ids, meta = build_forecasts(truth, matrix, level, replicates, master_seed, day, coarse)
            except NoCandidatesError as exc:
                log.warning("skipping day %s level %g: %s", day, level, exc)
                out.skipped.append({"day": day, "level": level, "reason": str(exc)})
                continue
            out.injection_meta[(day, level)] = meta
            for rep in range(replicates):
                for c in controllers:
                    sc = Scenario(day, c, season, occ_fine, weather[day], cfg,
                                  forecast=forecasts[rep] if c in PREDICTIVE else None,
                                  seeds={"master_seed": master_seed, "replicate": rep, "level": level})
                    job_list.append((("cell", day, level, c, rep), sc, ids[rep]))
    for key, summary in _pool_map(job_list, jobs):
        if key[0] == "base":
            out.baselines[(key[1], key[2])] = summary
        else:
            _, day, level, c, rep = key
            out.cells.setdefault((day, level, c), [None] * replicates)[rep] = summary
    for (day, level, c), runs in out.cells.items():
        base = out.baselines[(day, c)]
        rb = RobustnessBox(base.E, base.D_pct, box[0], box[1])
        out.robustness[(day, level, c)] = robustness([(r.E, r.D_pct) for r in runs], rb)
    return out
