"""Trajectory optimiser for the MPC planner.

Decision variables are the supply temperature per hour block (searched on a
grid), per-room flows per coarse step and, in SPOT-aware mode, a relaxed
heater duty per room and step. For a fixed supply-temperature trajectory the
room dynamics are linear in the flows, so the objective gradient comes from an
adjoint (reverse) recursion and the flows are optimised by projected descent
with limited-memory quasi-Newton directions and a monotone Armijo line search.

Objective (kWh-equivalent)::

    sum_k Po_k * tau / 3600 + w * sum_{j,k} req_jk * huber(PMV band violation)

where the band is tightened by ``plan_margin`` on both sides.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from ..thermal import offset_nb, single_region_nb

# layout of the scalar parameter vector
(P_TAU, P_R, P_ETA_H, P_ETA_C, P_ETA_F, P_VMAX, P_P1, P_PMV_OFF, P_LO, P_HI,
 P_W, P_HUBER, P_SA, P_MAXIT, P_RELTOL, P_PATIENCE, P_SCREEN) = range(17)
N_PRM = 17
# layout of the per-room parameter rows
R_C, R_A, R_B, R_Q, R_COC, R_AIN, R_QOC, R_QHE = range(8)
N_RP = 8

HUBER_WIDTH = 0.01


@numba.njit(cache=True)
def _huber(x, delta):
    if x <= 0.0:
        return 0.0, 0.0
    if x <= delta:
        return 0.5 * x * x / delta, x / delta
    return x - 0.5 * delta, 1.0


@numba.njit(cache=True)
def rollout(v, d, u, T0, D0, tex, occ, rp, prm):
    """Predicted HVAC temperatures and occupied-region offsets, shape (R, N+1)."""
    R, N = v.shape
    tau = prm[P_TAU]
    T = np.empty((R, N + 1))
    D = np.empty((R, N + 1))
    sa = prm[P_SA] > 0.5
    for j in range(R):
        T[j, 0] = T0[j]
        D[j, 0] = D0[j] if sa else 0.0
        for k in range(N):
            T[j, k + 1] = single_region_nb(T[j, k], u[k], v[j, k], tex[k], occ[j, k],
                                           rp[R_C, j], rp[R_A, j], rp[R_Q, j], rp[R_B, j], tau)
            if sa:
                D[j, k + 1] = offset_nb(D[j, k], occ[j, k], d[j, k], rp[R_COC, j], rp[R_AIN, j],
                                        rp[R_QOC, j], rp[R_QHE, j], tau)
            else:
                D[j, k + 1] = 0.0
    return T, D


@numba.njit(cache=True)
def _coil(s, eta_h, eta_c):
    if s > 0.0:
        return eta_h * s, eta_h
    return -eta_c * s, -eta_c


@numba.njit(cache=True)
def evaluate(v, d, u, T0, D0, tex, occ, req, rp, prm, gv, gd, want_grad):
    """Objective value, energy and penalty; fills ``gv``/``gd`` when ``want_grad``."""
    R, N = v.shape
    tau = prm[P_TAU]
    r = prm[P_R]
    eta_h = prm[P_ETA_H]
    eta_c = prm[P_ETA_C]
    eta_f = prm[P_ETA_F]
    P1 = prm[P_P1]
    off = prm[P_PMV_OFF]
    lo = prm[P_LO]
    hi = prm[P_HI]
    w = prm[P_W]
    hw = prm[P_HUBER]
    sa = prm[P_SA] > 0.5
    dt = tau / 3600.0

    T, D = rollout(v, d, u, T0, D0, tex, occ, rp, prm)

    energy = 0.0
    s = np.empty(N)
    V = np.empty(N)
    for k in range(N):
        sk = 0.0
        Vk = 0.0
        for j in range(R):
            sk += v[j, k] * (u[k] - r * T[j, k] - (1.0 - r) * tex[k])
            Vk += v[j, k]
        s[k] = sk
        V[k] = Vk
        c, _ = _coil(sk, eta_h, eta_c)
        heat = 0.0
        if sa:
            for j in range(R):
                heat += rp[R_QHE, j] * d[j, k]
        energy += (c + eta_f * Vk * Vk + heat) * dt

    penalty = 0.0
    # dpen[j, k] = d(penalty)/d(T_oc[j, k])
    dpen = np.zeros((R, N + 1))
    for j in range(R):
        for k in range(1, N + 1):
            if req[j, k] <= 0.0:
                continue
            P = P1 * (T[j, k] + D[j, k]) + off
            if P < lo:
                h, dh = _huber(lo - P, hw)
                penalty += w * h
                dpen[j, k] = -w * dh * P1
            elif P > hi:
                h, dh = _huber(P - hi, hw)
                penalty += w * h
                dpen[j, k] = w * dh * P1

    if want_grad:
        for j in range(R):
            lamT = dpen[j, N]
            lamD = dpen[j, N]
            cT = tau / rp[R_C, j]
            cD = tau / rp[R_COC, j]
            leak = 1.0 - cD * rp[R_AIN, j]
            for k in range(N - 1, -1, -1):
                e = u[k] - r * T[j, k] - (1.0 - r) * tex[k]
                if s[k] == 0.0:
                    gcoil = eta_h * e if e > 0.0 else -eta_c * e
                else:
                    _, slope = _coil(s[k], eta_h, eta_c)
                    gcoil = slope * e
                gv[j, k] = dt * (gcoil + 2.0 * eta_f * V[k]) + lamT * cT * rp[R_B, j] * (u[k] - T[j, k])
                if sa and occ[j, k] > 0.5:
                    gd[j, k] = dt * rp[R_QHE, j] + lamD * cD * rp[R_QHE, j]
                else:
                    gd[j, k] = 0.0
                if k >= 1:
                    _, slope = _coil(s[k], eta_h, eta_c)
                    if s[k] == 0.0:
                        slope = 0.0
                    lamT = (dpen[j, k] - dt * slope * r * v[j, k]
                            + lamT * (1.0 - cT * (rp[R_B, j] * v[j, k] + rp[R_A, j])))
                    lamD = dpen[j, k] + lamD * leak
    return energy + penalty, energy, penalty


LBFGS_MEMORY = 8


@numba.njit(cache=True)
def _two_loop(g, free, S_, Y_, rho, head, count, gamma, out):
    """Limited-memory inverse-Hessian product ``-H g`` restricted to ``free``."""
    n = g.shape[0]
    m = S_.shape[0]
    q = np.empty(n)
    for i in range(n):
        q[i] = g[i] if free[i] else 0.0
    a = np.zeros(m)
    for c in range(count):
        slot = (head - 1 - c) % m
        dot = 0.0
        for i in range(n):
            if free[i]:
                dot += S_[slot, i] * q[i]
        a[slot] = rho[slot] * dot
        for i in range(n):
            if free[i]:
                q[i] -= a[slot] * Y_[slot, i]
    for i in range(n):
        q[i] *= gamma
    for c in range(count - 1, -1, -1):
        slot = (head - 1 - c) % m
        dot = 0.0
        for i in range(n):
            if free[i]:
                dot += Y_[slot, i] * q[i]
        beta = rho[slot] * dot
        for i in range(n):
            if free[i]:
                q[i] += (a[slot] - beta) * S_[slot, i]
    for i in range(n):
        out[i] = -q[i] if free[i] else 0.0


@numba.njit(cache=True)
def inner_solve(v0, d0, u, T0, D0, tex, occ, req, rp, prm, max_iter, history):
    """Projected descent over flows (and duties) at a fixed supply trajectory.

    Directions come from a limited-memory quasi-Newton model on the variables
    not held at a bound (plain scaled gradient when that model fails to give
    descent); every trial point is projected onto the box and accepted by a
    monotone Armijo test. Returns ``(v, d, objective, converged, iterations)``;
    ``history[i]`` holds the objective after accepted iteration ``i`` (entry 0
    is the start point).
    """
    R, N = v0.shape
    RN = R * N
    n = 2 * RN
    vmax = prm[P_VMAX]
    rel_tol = prm[P_RELTOL]
    patience = int(prm[P_PATIENCE])
    sa = prm[P_SA] > 0.5
    ub = np.empty(n)
    for j in range(R):
        for k in range(N):
            i = j * N + k
            ub[i] = vmax
            ub[RN + i] = 1.0 if (sa and occ[j, k] > 0.5 and rp[R_QHE, j] > 0.0) else 0.0
    x = np.empty(n)
    for j in range(R):
        for k in range(N):
            i = j * N + k
            x[i] = min(max(v0[j, k], 0.0), ub[i])
            x[RN + i] = min(max(d0[j, k], 0.0), ub[RN + i])
    g = np.zeros(n)
    g2 = np.zeros(n)
    x2 = np.empty(n)
    p = np.empty(n)
    free = np.empty(n, np.bool_)
    m = LBFGS_MEMORY
    S_ = np.zeros((m, n))
    Y_ = np.zeros((m, n))
    rho = np.zeros(m)
    head = 0
    count = 0

    f, _, _ = evaluate(x[:RN].reshape(R, N), x[RN:].reshape(R, N), u, T0, D0, tex, occ, req, rp, prm,
                       g[:RN].reshape(R, N), g[RN:].reshape(R, N), True)
    history[0] = f
    gmax = 1e-12
    for i in range(n):
        gmax = max(gmax, abs(g[i]))
    gamma = 0.1 * vmax / gmax
    streak = 0
    converged = False
    it = 0
    while it < max_iter:
        # variables pinned at a bound by the gradient stay out of the quasi-Newton model
        nfree = 0
        for i in range(n):
            at_lo = x[i] <= 1e-12 and g[i] > 0.0
            at_hi = x[i] >= ub[i] - 1e-12 and g[i] < 0.0
            free[i] = ub[i] > 0.0 and not (at_lo or at_hi)
            if free[i]:
                nfree += 1
        if nfree == 0:
            converged = True
            break
        _two_loop(g, free, S_, Y_, rho, head, count, gamma, p)
        gp = 0.0
        for i in range(n):
            gp += g[i] * p[i]
        if not gp < 0.0:
            count = 0
            for i in range(n):
                p[i] = -gamma * g[i] if free[i] else 0.0
        accepted = False
        stationary = False
        t = 1.0
        for _bt in range(60):
            slope = 0.0
            for i in range(n):
                y = x[i] + t * p[i]
                if y < 0.0:
                    y = 0.0
                elif y > ub[i]:
                    y = ub[i]
                x2[i] = y
                slope += g[i] * (y - x[i])
            if slope > -1e-13 * max(1.0, abs(f)):
                stationary = True
                break
            f2, _, _ = evaluate(x2[:RN].reshape(R, N), x2[RN:].reshape(R, N), u, T0, D0, tex, occ, req,
                                rp, prm, g2[:RN].reshape(R, N), g2[RN:].reshape(R, N), False)
            if f2 <= f + 1e-4 * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            if count > 0:
                # stale curvature pairs: restart from a scaled gradient step
                count = 0
                continue
            converged = True
            break
        evaluate(x2[:RN].reshape(R, N), x2[RN:].reshape(R, N), u, T0, D0, tex, occ, req, rp, prm,
                 g2[:RN].reshape(R, N), g2[RN:].reshape(R, N), True)
        sy = 0.0
        ss = 0.0
        yy = 0.0
        for i in range(n):
            si = x2[i] - x[i]
            yi = g2[i] - g[i]
            S_[head, i] = si
            Y_[head, i] = yi
            sy += si * yi
            ss += si * si
            yy += yi * yi
        if sy > 1e-10 * np.sqrt(ss * yy) and sy > 0.0:
            rho[head] = 1.0 / sy
            head = (head + 1) % m
            count = min(count + 1, m)
            gamma = sy / yy
        else:
            # no usable curvature along this step: forget the model and lengthen the step
            count = 0
            gamma *= 4.0
        rel = abs(f - f2) / max(abs(f), 1e-9)
        f = f2
        x, x2 = x2, x
        g, g2 = g2, g
        it += 1
        history[it] = f
        if rel < rel_tol:
            streak += 1
            if streak >= patience:
                converged = True
                break
        else:
            streak = 0
        if stationary:
            converged = True
            break
    v = x[:RN].copy().reshape(R, N)
    d = x[RN:].copy().reshape(R, N)
    return v, d, f, converged, it


@numba.njit(cache=True)
def _expand(u_blocks, block_of):
    N = block_of.shape[0]
    u = np.empty(N)
    for k in range(N):
        u[k] = u_blocks[block_of[k]]
    return u


@numba.njit(cache=True)
def outer_search(u_blocks, free, grid, block_of, v0, d0, T0, D0, tex, occ, req, rp, prm, greedy_start,
                 max_blocks=-1, window=-1.0):
    """Hour-block supply temperatures on ``grid`` around the inner flow solve.

    ``greedy_start`` first tries one uniform temperature for all free blocks;
    then every free block that carries flow is searched exhaustively over the
    grid with short screening solves; the two best screened values get a full
    solve and strict improvements are kept. A
    non-negative ``max_blocks`` limits the exhaustive pass to that many leading
    free blocks and a positive ``window`` prunes grid values farther than that
    from the block's incumbent.
    """
    max_iter = int(prm[P_MAXIT])
    screen = int(prm[P_SCREEN])
    nb = u_blocks.shape[0]
    hist = np.empty(max_iter + 1)
    u_b = u_blocks.copy()
    if greedy_start:
        best_f = np.inf
        best_c = u_b[0]
        for c in grid:
            trial = u_b.copy()
            for b in range(nb):
                if free[b]:
                    trial[b] = c
            _, _, fc, _, _ = inner_solve(v0, d0, _expand(trial, block_of), T0, D0, tex, occ, req,
                                         rp, prm, screen, hist)
            if fc < best_f:
                best_f = fc
                best_c = c
        for b in range(nb):
            if free[b]:
                u_b[b] = best_c
    v, d, f, conv, it = inner_solve(v0, d0, _expand(u_b, block_of), T0, D0, tex, occ, req,
                                    rp, prm, max_iter, hist)
    N = block_of.shape[0]
    R = v.shape[0]
    searched = 0
    for b in range(nb):
        if not free[b]:
            continue
        if max_blocks >= 0 and searched >= max_blocks:
            break
        searched += 1
        active = False
        for k in range(N):
            if block_of[k] == b:
                for j in range(R):
                    if v[j, k] > 1e-9:
                        active = True
        if not active:
            continue
        # screen every grid value, then fully solve the two most promising ones
        best1_f = np.inf
        best1_c = u_b[b]
        best2_f = np.inf
        best2_c = u_b[b]
        for c in grid:
            if c == u_b[b] or (window > 0.0 and abs(c - u_b[b]) > window + 1e-9):
                continue
            trial = u_b.copy()
            trial[b] = c
            _, _, fc, _, _ = inner_solve(v, d, _expand(trial, block_of), T0, D0, tex, occ, req,
                                         rp, prm, screen, hist)
            if fc < best1_f:
                best2_f, best2_c = best1_f, best1_c
                best1_f, best1_c = fc, c
            elif fc < best2_f:
                best2_f, best2_c = fc, c
        for pick in range(2):
            c = best1_c if pick == 0 else best2_c
            fc = best1_f if pick == 0 else best2_f
            if not np.isfinite(fc) or c == u_b[b]:
                continue
            trial = u_b.copy()
            trial[b] = c
            v2, d2, f2, conv2, it2 = inner_solve(v, d, _expand(trial, block_of), T0, D0, tex, occ,
                                                 req, rp, prm, max_iter, hist)
            if f2 < f * (1.0 - 1e-9):
                u_b = trial
                v, d, f, conv, it = v2, d2, f2, conv2, it2
    # final polish at the chosen temperatures, recording the descent history
    v, d, f, conv, it = inner_solve(v, d, _expand(u_b, block_of), T0, D0, tex, occ, req, rp, prm,
                                    max_iter, hist)
    return u_b, v, d, f, conv, it, hist


@dataclass
class TrajectoryProblem:
    """One planning problem over ``N`` coarse steps for ``R`` rooms."""

    T0: np.ndarray
    D0: np.ndarray
    tex: np.ndarray
    occ: np.ndarray
    req: np.ndarray
    block_of: np.ndarray
    u_init: np.ndarray
    free: np.ndarray
    grid: np.ndarray
    rp: np.ndarray
    prm: np.ndarray
    v_init: np.ndarray | None = None
    d_init: np.ndarray | None = None
    search_u: bool = True
    greedy_start: bool = False
    search_blocks: int = -1
    window: float = -1.0

    @property
    def shape(self) -> tuple[int, int]:
        return self.occ.shape


@dataclass
class TrajectorySolution:
    u_blocks: np.ndarray
    u: np.ndarray
    v: np.ndarray
    d: np.ndarray
    objective: float
    energy: float
    penalty: float
    converged: bool
    iterations: int
    history: np.ndarray = field(repr=False)
    T: np.ndarray = field(repr=False, default=None)
    D: np.ndarray = field(repr=False, default=None)


def comfort_required(occ: np.ndarray) -> np.ndarray:
    """State indices whose comfort is enforced: both ends of every forecast-occupied step."""
    R, N = occ.shape
    req = np.zeros((R, N + 1))
    o = occ > 0.5
    req[:, 1:] = o
    req[:, 1:N] = np.maximum(req[:, 1:N], o[:, 1:])
    return req


def solve_trajectory(problem: TrajectoryProblem) -> TrajectorySolution:
    """Two-level solve: grid search over hourly supply temperature, projected gradient over flows."""
    R, N = problem.shape
    v0 = np.zeros((R, N)) if problem.v_init is None else np.asarray(problem.v_init, float)
    d0 = np.zeros((R, N)) if problem.d_init is None else np.asarray(problem.d_init, float)
    args = (problem.T0.astype(float), problem.D0.astype(float), problem.tex.astype(float),
            problem.occ.astype(float), problem.req.astype(float), problem.rp, problem.prm)
    max_iter = int(problem.prm[P_MAXIT])
    block_of = problem.block_of.astype(np.int64)
    if problem.search_u and problem.free.any():
        u_b, v, d, f, conv, it, hist = outer_search(
            problem.u_init.astype(float), problem.free.astype(np.bool_), problem.grid.astype(float),
            block_of, v0, d0, *args, problem.greedy_start, int(problem.search_blocks),
            float(problem.window))
    else:
        u_b = problem.u_init.astype(float)
        hist = np.empty(max_iter + 1)
        v, d, f, conv, it = inner_solve(v0, d0, _expand(u_b, block_of), *args, max_iter, hist)
    u = _expand(u_b, block_of)
    gv = np.zeros((R, N))
    gd = np.zeros((R, N))
    f, energy, penalty = evaluate(v, d, u, *args, gv, gd, False)
    T, D = rollout(v, d, u, args[0], args[1], args[2], args[3], problem.rp, problem.prm)
    return TrajectorySolution(u_b, u, v, d, float(f), float(energy), float(penalty), bool(conv),
                              int(it), hist[: it + 1].copy(), T, D)
