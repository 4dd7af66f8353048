"""Forward integration of the controlled epidemic under bang-bang or grid controls.

Fixed-step RK4 with steps aligned to week boundaries. Switching times and the
weekly stock clamp are resolved inside the step: the step is split exactly at
each switching time, and the instant V reaches the weekly budget is located by
bisection to 1e-10 days. On bang arcs the mixed constraint is saturated by
state feedback, u_i = v_i_max / s_i, so u_i s_i = v_i_max exactly.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from ._kernels import rk4_step


class SimulationError(RuntimeError):
    pass


@dataclass(frozen=True)
class BangSchedule:
    """Per-region, per-week switch times tau[i, w] in [7w, 7(w+1)]."""

    tau: np.ndarray

    def __post_init__(self):
        tau = np.atleast_2d(np.asarray(self.tau, dtype=float))
        object.__setattr__(self, "tau", tau)
        W = tau.shape[1]
        weeks = 7.0 * np.arange(W)
        if np.any(tau < weeks[None, :] - 1e-9) or np.any(tau > weeks[None, :] + 7.0 + 1e-9):
            raise SimulationError("switch times must lie inside their week intervals")

    @property
    def K(self):
        return self.tau.shape[0]

    @property
    def n_weeks(self):
        return self.tau.shape[1]

    @classmethod
    def never(cls, K, n_weeks):
        return cls(np.tile(7.0 * np.arange(n_weeks), (K, 1)))

    @classmethod
    def full(cls, K, n_weeks):
        return cls(np.tile(7.0 * (np.arange(n_weeks) + 1), (K, 1)))


@dataclass(frozen=True)
class GridControl:
    """Vaccination rates per grid node, held constant over each step."""

    u: np.ndarray

    def __post_init__(self):
        u = np.atleast_2d(np.asarray(self.u, dtype=float))
        object.__setattr__(self, "u", u)
        if not np.all(np.isfinite(u)) or np.any(u < 0.0):
            raise SimulationError("grid control must be finite and nonnegative")


@dataclass(frozen=True)
class Event:
    time: float
    kind: str          # "switch" | "stock_exhausted" | "week_boundary"
    region: int | None = None


@dataclass
class StateTrajectory:
    times: np.ndarray        # (N+1,)
    s: np.ndarray            # (N+1, K)
    x: np.ndarray            # (N+1, d, K)
    V: np.ndarray            # (N+1,)
    u_realized: np.ndarray   # (N+1, K)
    events: list = field(default_factory=list)
    h: float = 0.0

    @property
    def n_nodes(self):
        return len(self.times)

    def infectious(self):
        """Stage-1 proportions per group (the inflow stage)."""
        return self.x[:, 0, :]

    def total_population(self, n):
        """Group-weighted total including the vaccinated stock; conserved."""
        return self.s @ n + np.einsum("kdi,i->k", self.x, n) + self.V

    def stock_events(self):
        return [e for e in self.events if e.kind == "stock_exhausted"]

    def switch_events(self):
        return [e for e in self.events if e.kind == "switch"]


def _steps_per_week(h):
    spw = round(7.0 / h)
    if abs(spw * h - 7.0) > 1e-9:
        raise SimulationError(f"step {h} does not divide the 7-day week evenly")
    return spw


def simulate(scenario, control, h, t_start=None, state_start=None,
             enforce_stock=True):
    """Integrate the controlled dynamics; returns a StateTrajectory on the h-grid.

    t_start/state_start restart the integration mid-horizon from a given
    (s, x, V) triple at a grid node; used by sensitivity checks.
    enforce_stock=False disables the weekly stock clamp (the sweep methods
    handle the supply constraint by penalty and need the violation visible).
    """
    K, d = scenario.K, scenario.d
    n, v_max = scenario.n, scenario.v_max
    Fmat = scenario.force_matrix()
    G = scenario.G
    Q = scenario.Q
    spw = _steps_per_week(h)
    W = scenario.n_weeks
    budgets_cum = np.concatenate([[0.0], np.cumsum(scenario.shipments.week_budgets)])

    if t_start is None:
        k_start = 0
        s = scenario.init.s0.copy()
        x = scenario.init.x0.copy()
        V = float(scenario.init.V0)
    else:
        k_start = round(t_start / h)
        if abs(k_start * h - t_start) > 1e-9:
            raise SimulationError("t_start must be a grid node")
        s, x, V = state_start
        s = np.asarray(s, dtype=float).copy()
        x = np.asarray(x, dtype=float).copy()
        V = float(V)

    N = spw * W
    is_bang = isinstance(control, BangSchedule)
    if is_bang:
        if control.tau.shape != (K, W):
            raise SimulationError("schedule shape mismatch")
    elif isinstance(control, GridControl):
        if control.u.shape != (N + 1, K):
            raise SimulationError(
                f"grid control must have shape {(N + 1, K)}, got {control.u.shape}")
    else:
        raise SimulationError("control must be a BangSchedule or GridControl")

    nv = n * v_max
    times = h * np.arange(N + 1)
    S = np.full((N + 1, K), np.nan)
    X = np.full((N + 1, d, K), np.nan)
    Vout = np.full(N + 1, np.nan)
    U = np.zeros((N + 1, K))
    events = []

    Qarr = Q if Q is not None else np.zeros((K, K))
    use_q = Q is not None
    zeros_k = np.zeros(K)

    def rk4(s_, x_, V_, dt, act=None, u_row=None):
        if act is not None:
            return rk4_step(s_, x_, V_, dt, act.astype(float), zeros_k, 0,
                            v_max, n, Fmat, G, Qarr, use_q)
        return rk4_step(s_, x_, V_, dt, zeros_k, u_row, 1,
                        v_max, n, Fmat, G, Qarr, use_q)

    w0 = k_start // spw
    for w in range(w0, W):
        D_w = budgets_cum[w + 1]
        week_start = 7.0 * w
        if w > 0 and w * spw >= k_start:
            events.append(Event(week_start, "week_boundary"))
        stock_out = enforce_stock and V >= D_w - 1e-13
        if stock_out and w * spw >= k_start:
            events.append(Event(week_start, "stock_exhausted"))
        if is_bang:
            mask = control.tau[:, w] > week_start + 1e-12
            pending = sorted(
                (control.tau[i, w], i) for i in range(K)
                if mask[i] and control.tau[i, w] < week_start + 7.0 - 1e-12)
        else:
            mask = np.zeros(K, dtype=bool)
            pending = []

        k_lo = max(k_start, w * spw)
        for k in range(k_lo, (w + 1) * spw):
            t = times[k]
            # settle switches landing exactly on this node
            while pending and pending[0][0] <= t + 1e-12:
                tau_t, i = pending.pop(0)
                if mask[i] and not stock_out:
                    events.append(Event(tau_t, "switch", i))
                mask[i] = False

            S[k], X[k], Vout[k] = s, x, V
            if is_bang:
                act = mask & (not stock_out)
                U[k] = np.where(act, v_max / s, 0.0)
            else:
                u_row = control.u[k]
                U[k] = 0.0 if stock_out else np.minimum(u_row, v_max / s)

            t_next = times[k + 1]
            seg = t
            while True:
                # next interior switch inside this step, if any
                tau_next = None
                if pending and pending[0][0] < t_next - 1e-12:
                    tau_next = pending[0][0]
                t_stop = t_next if tau_next is None else tau_next

                dt = t_stop - seg
                if dt > 1e-14:
                    if is_bang:
                        act = mask & (not stock_out)
                        args = dict(act=act)
                    else:
                        args = dict(u_row=(np.zeros(K) if stock_out else control.u[k]))
                    s_new, x_new, V_new = rk4(s, x, V, dt, **args)
                    if (enforce_stock and not stock_out
                            and V_new > D_w + 1e-15 and V_new - V > 1e-16):
                        # bisect the in-step instant where V reaches the budget
                        lo, hi = 0.0, dt
                        s_lo, x_lo, V_lo = s, x, V
                        while hi - lo > 1e-10:
                            mid = 0.5 * (lo + hi)
                            s_m, x_m, V_m = rk4(s, x, V, mid, **args)
                            if V_m > D_w:
                                hi = mid
                            else:
                                lo = mid
                                s_lo, x_lo, V_lo = s_m, x_m, V_m
                        t_star = seg + lo
                        events.append(Event(t_star, "stock_exhausted"))
                        stock_out = True
                        s, x, V = s_lo, x_lo, min(V_lo, D_w)
                        seg = t_star
                        continue
                    s, x, V = s_new, x_new, V_new
                    seg = t_stop

                if tau_next is not None and abs(seg - tau_next) <= 1e-12:
                    tau_t, i = pending.pop(0)
                    if mask[i] and not stock_out:
                        events.append(Event(tau_t, "switch", i))
                    mask[i] = False
                    continue
                if seg >= t_next - 1e-12:
                    break

        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(x)) and np.isfinite(V)):
            bad = np.nonzero(~np.isfinite(S).all(axis=(1,)))[0]
            t_last = times[bad[0] - 1] if bad.size and bad[0] > 0 else week_start
            raise SimulationError(f"integration failure; last valid time t = {t_last:.6g}")

    S[N], X[N], Vout[N] = s, x, V
    if is_bang:
        U[N] = 0.0
    else:
        U[N] = 0.0 if stock_out else np.minimum(control.u[N], v_max / s)

    if k_start > 0:
        sl = slice(k_start, None)
        return StateTrajectory(times=times[sl], s=S[sl], x=X[sl], V=Vout[sl],
                               u_realized=U[sl], events=events, h=h)
    return StateTrajectory(times=times, s=S, x=X, V=Vout, u_realized=U,
                           events=events, h=h)


# ---------------------------------------------------------------------------
# Cost functionals


def running_health_cost(trajectory, scenario):
    """Integrand n_i <c, x^(i)(t)> summed over groups, one value per node."""
    return np.einsum("kdi,d,i->k", trajectory.x, scenario.c, scenario.n)


def cost_linear(trajectory, scenario):
    """J = c_v V(T) + integral of the running health cost (composite Simpson)."""
    if np.any(~np.isfinite(trajectory.V)):
        raise SimulationError("incomplete trajectory")
    health = simpson(running_health_cost(trajectory, scenario), x=trajectory.times)
    return scenario.c_v * trajectory.V[-1] + health


def cost_quadratic(trajectory, scenario, c_q):
    """Quadratic-effort variant: the dose bill becomes c_q * int sum_j n_j u_j^2 s_j^2."""
    if np.any(~np.isfinite(trajectory.V)):
        raise SimulationError("incomplete trajectory")
    us = trajectory.u_realized * trajectory.s
    effort = (us**2) @ scenario.n
    health = simpson(running_health_cost(trajectory, scenario), x=trajectory.times)
    return c_q * simpson(effort, x=trajectory.times) + health


# ---------------------------------------------------------------------------
# Export


def stage_labels(d):
    if d == 2:
        return ["I", "R"]
    return [f"x{j + 1}" for j in range(d)]


def trajectory_to_csv(trajectory, scenario, path, fmt="%.17g"):
    K, d = scenario.K, scenario.d
    labels = stage_labels(d)
    header = (["time"] + [f"s_{i + 1}" for i in range(K)]
              + [f"{lab}_{i + 1}" for lab in labels for i in range(K)]
              + ["V"] + [f"u_{i + 1}" for i in range(K)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(trajectory.n_nodes):
            row = ([trajectory.times[k]] + list(trajectory.s[k])
                   + list(trajectory.x[k].ravel()) + [trajectory.V[k]]
                   + list(trajectory.u_realized[k]))
            writer.writerow(fmt % v for v in row)


def events_to_json(trajectory, path):
    data = [{"time": e.time, "kind": e.kind,
             **({"region": e.region} if e.region is not None else {})}
            for e in trajectory.events]
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
