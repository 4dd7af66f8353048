"""Problem instances: network, linear disease dynamics, cost, and supply data.

A scenario couples K population groups. Group i carries a susceptible
proportion s_i, a d-vector of disease-stage proportions x^(i) (e.g. infectious
and recovered for SIR), and contributes to a single cumulative dose counter V.
The force of infection is linear, f_i(x) = sum_j <B[i,j], x^(j)>, within-group
progression is x' = G x, and the running health cost is n_i <c, x^(i)>.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np


class ScenarioError(ValueError):
    """Raised for malformed scenario data."""


# ---------------------------------------------------------------------------
# Weekly vaccine supply


@dataclass(frozen=True)
class ShipmentSchedule:
    """Weekly shipment budgets and the smoothing half-support epsilon (days)."""

    week_budgets: tuple
    epsilon: float = 0.1

    def __post_init__(self):
        budgets = tuple(float(b) for b in self.week_budgets)
        object.__setattr__(self, "week_budgets", budgets)
        if any(b < 0 for b in budgets):
            raise ScenarioError("week budgets must be nonnegative")
        if not (0.0 < self.epsilon < 7.0):
            raise ScenarioError("epsilon must lie in (0, 7)")

    @property
    def n_weeks(self):
        return len(self.week_budgets)

    @property
    def horizon(self):
        return 7.0 * self.n_weeks

    def cumulative(self, t):
        """Step supply D(t): total doses shipped up to and including week floor(t/7)."""
        t = np.asarray(t, dtype=float)
        if np.any(t < -1e-12) or np.any(t > self.horizon + 1e-12):
            raise ScenarioError(f"t outside [0, {self.horizon}]")
        cum = np.concatenate([[0.0], np.cumsum(self.week_budgets)])
        w = np.minimum(np.floor(t / 7.0).astype(int), self.n_weeks - 1)
        out = cum[w + 1]
        return float(out) if out.ndim == 0 else out

    def smoothed(self, t):
        """C^2 supply D_eps(t): quintic smoothstep across each weekly jump.

        Agrees with cumulative() outside [7w - eps/2, 7w + eps/2]; at the
        midpoint 7w it equals the mean of the adjacent plateaus.
        """
        scalar = np.isscalar(t) or np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < -1e-12) or np.any(t > self.horizon + 1e-12):
            raise ScenarioError(f"t outside [0, {self.horizon}]")
        cum = np.concatenate([[0.0], np.cumsum(self.week_budgets)])
        eps = self.epsilon
        w_near = np.rint(t / 7.0).astype(int)
        near_jump = (np.abs(t - 7.0 * w_near) <= eps / 2.0) & (w_near <= self.n_weeks - 1)
        w_step = np.minimum(np.floor(t / 7.0).astype(int), self.n_weeks - 1)
        out = cum[w_step + 1]
        if np.any(near_jump):
            w = w_near[near_jump]
            lo = cum[w]          # plateau before the jump at 7w
            hi = cum[w + 1]      # plateau after
            tau = (t[near_jump] - (7.0 * w - eps / 2.0)) / eps
            sigma = tau**3 * (10.0 - 15.0 * tau + 6.0 * tau**2)
            out[near_jump] = lo + (hi - lo) * sigma
        return float(out[0]) if scalar else out

    def smoothed_rate(self, t):
        """Derivative of the smoothed supply, nonzero only inside jump windows."""
        scalar = np.isscalar(t) or np.ndim(t) == 0
        t = np.atleast_1d(np.asarray(t, dtype=float))
        cum = np.concatenate([[0.0], np.cumsum(self.week_budgets)])
        eps = self.epsilon
        w_near = np.rint(t / 7.0).astype(int)
        near_jump = (np.abs(t - 7.0 * w_near) <= eps / 2.0) & (w_near <= self.n_weeks - 1)
        out = np.zeros_like(t)
        if np.any(near_jump):
            w = w_near[near_jump]
            jump = cum[w + 1] - cum[w]
            tau = (t[near_jump] - (7.0 * w - eps / 2.0)) / eps
            out[near_jump] = jump * 30.0 * tau**2 * (1.0 - tau) ** 2 / eps
        return float(out[0]) if scalar else out


def shipment_cumulative(schedule, t):
    return schedule.cumulative(t)


def shipment_smoothed(schedule, t, epsilon=None):
    if epsilon is not None and epsilon != schedule.epsilon:
        schedule = replace(schedule, epsilon=epsilon)
    return schedule.smoothed(t)


# ---------------------------------------------------------------------------
# Initial condition and scenario


@dataclass(frozen=True)
class InitialCondition:
    s0: np.ndarray           # (K,) in (0, 1]
    x0: np.ndarray           # (d, K) nonnegative
    V0: float = 0.0

    def __post_init__(self):
        s0 = np.atleast_1d(np.asarray(self.s0, dtype=float))
        x0 = np.atleast_2d(np.asarray(self.x0, dtype=float))
        object.__setattr__(self, "s0", s0)
        object.__setattr__(self, "x0", x0)
        if np.any(s0 <= 0.0):
            raise ScenarioError("initial susceptibles must be strictly positive")
        if np.any(x0 < 0.0) or self.V0 < 0.0:
            raise ScenarioError("initial stages and V0 must be nonnegative")
        if np.any(s0 + x0.sum(axis=0) > 1.0 + 1e-12):
            raise ScenarioError("per-group proportions exceed 1")


@dataclass(frozen=True)
class Scenario:
    """Immutable problem instance; safe to share across workers."""

    K: int
    d: int
    n: np.ndarray            # (K,) group sizes, sum to 1
    B: np.ndarray            # (K, K, d) force-of-infection coefficients
    G: np.ndarray            # (d, d) progression matrix, zero column sums
    c: np.ndarray            # (d,) running-cost gradient
    c_v: float               # cost per dose
    v_max: np.ndarray        # (K,) max vaccination throughput (doses/day)
    shipments: ShipmentSchedule
    T: float                 # horizon in days, multiple of 7
    init: InitialCondition
    Q: np.ndarray | None = None   # optional (K, K) migration operator on s

    def __post_init__(self):
        n = np.atleast_1d(np.asarray(self.n, dtype=float))
        B = np.asarray(self.B, dtype=float)
        G = np.atleast_2d(np.asarray(self.G, dtype=float))
        c = np.atleast_1d(np.asarray(self.c, dtype=float))
        v_max = np.atleast_1d(np.asarray(self.v_max, dtype=float))
        K, d = int(self.K), int(self.d)
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "G", G)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "v_max", v_max)
        if K < 1 or d < 1:
            raise ScenarioError("K and d must be positive")
        if n.shape != (K,) or np.any(n <= 0.0):
            raise ScenarioError("n must be K positive group sizes")
        if abs(n.sum() - 1.0) > 1e-12:
            raise ScenarioError(f"group sizes must sum to 1 (got {n.sum()!r})")
        if B.shape != (K, K, d):
            raise ScenarioError(f"B must have shape (K, K, d), got {B.shape}")
        if G.shape != (d, d):
            raise ScenarioError("G must be d x d")
        colsum = np.abs(G.sum(axis=0)).max()
        if colsum > 1e-10:
            raise ScenarioError(f"G column sums must vanish (max |sum| = {colsum:g})")
        if c.shape != (d,):
            raise ScenarioError("c must be a d-vector")
        if self.c_v <= 0.0:
            raise ScenarioError("c_v must be positive")
        if v_max.shape != (K,) or np.any(v_max <= 0.0):
            raise ScenarioError("v_max must be K positive rates")
        if abs(self.T / 7.0 - round(self.T / 7.0)) > 1e-12:
            raise ScenarioError("T must be a multiple of 7")
        object.__setattr__(self, "T", float(self.T))
        if self.shipments.n_weeks != round(self.T / 7.0):
            raise ScenarioError("shipment schedule length must equal T/7 weeks")
        if self.init.s0.shape != (K,) or self.init.x0.shape != (d, K):
            raise ScenarioError("initial condition has wrong shape")
        if self.Q is not None:
            Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
            if Q.shape != (K, K):
                raise ScenarioError("Q must be K x K")
            if np.abs(n @ Q).max() > 1e-10:
                raise ScenarioError("Q must conserve population: n^T Q = 0")
            off = Q - np.diag(np.diag(Q))
            if off.min() < -1e-12:
                raise ScenarioError("Q must be Metzler (nonnegative off-diagonal)")
            object.__setattr__(self, "Q", Q)

    @property
    def n_weeks(self):
        return int(round(self.T / 7.0))

    def force_matrix(self):
        """(K, d*K) matrix F with f = F @ x.ravel() for x of shape (d, K)."""
        K, d = self.K, self.d
        F = np.zeros((K, d * K))
        for sig in range(d):
            F[:, sig * K:(sig + 1) * K] = self.B[:, :, sig]
        return F

    def force_of_infection(self, x):
        return self.force_matrix() @ np.asarray(x, dtype=float).ravel()


def migration_from_flows(L, n):
    """Build a migration operator on proportions from per-capita flows.

    L is K x K, Metzler with zero column sums, acting on absolute populations
    m_i = n_i s_i via m' = L m. The returned Q = diag(1/n) L diag(n) acts on s
    and satisfies n^T Q = 0.
    """
    L = np.atleast_2d(np.asarray(L, dtype=float))
    n = np.atleast_1d(np.asarray(n, dtype=float))
    if np.abs(L.sum(axis=0)).max() > 1e-10:
        raise ScenarioError("flow matrix columns must sum to zero")
    return (L * n[None, :]) / n[:, None]


# ---------------------------------------------------------------------------
# SIR commuter builder


def commuter_coupling(beta, alpha, M, n):
    """Presence-weighted prevalence coupling kappa for daily commuting.

    With presence matrix P = alpha*I + (1-alpha)*M, contacts happen at the
    destination location l, so
        kappa_ij = sum_l P_il * beta_l * n_j P_jl / (sum_k n_k P_kl).
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = np.atleast_1d(np.asarray(n, dtype=float))
    K = len(n)
    P = alpha * np.eye(K) + (1.0 - alpha) * M
    denom = n @ P                          # population present at each location
    W = P * n[:, None] / denom[None, :]    # W_jl: share of location l from group j
    return (P * beta[None, :]) @ W.T       # kappa_ij


def build_sir_commuter(beta, gamma, alpha, M, n, v_max, shipments,
                       c_v, c_h, T, s0, i0, r0=None, Q=None):
    """SIR metapopulation with commuting: d = 2 stages (I, R).

    Rejects non-row-stochastic commuting matrices and nonpositive rates.
    """
    beta = np.atleast_1d(np.asarray(beta, dtype=float))
    M = np.atleast_2d(np.asarray(M, dtype=float))
    n = np.atleast_1d(np.asarray(n, dtype=float))
    if np.any(n <= 0.0):
        raise ScenarioError("group sizes must be positive")
    n = n / n.sum()   # proportions of the total population
    K = len(n)
    if np.any(beta <= 0.0):
        raise ScenarioError("transmission rates beta must be positive")
    if gamma <= 0.0:
        raise ScenarioError("recovery rate gamma must be positive")
    if not (0.0 < alpha <= 1.0):
        raise ScenarioError("home-stay fraction alpha must lie in (0, 1]")
    if M.shape != (K, K) or np.any(M < 0.0):
        raise ScenarioError("commuting matrix must be K x K with nonnegative entries")
    rowsums = M.sum(axis=1)
    bad = np.nonzero(np.abs(rowsums - 1.0) > 1e-9)[0]
    if bad.size:
        raise ScenarioError(
            f"commuting matrix row {bad[0]} sums to {rowsums[bad[0]]!r}, expected 1")

    kappa = commuter_coupling(beta, alpha, M, n)
    B = np.zeros((K, K, 2))
    B[:, :, 0] = kappa
    G = np.array([[-gamma, 0.0], [gamma, 0.0]])
    c = np.array([c_h, 0.0])

    v_max = np.broadcast_to(np.asarray(v_max, dtype=float), (K,)).copy()
    s0 = np.broadcast_to(np.asarray(s0, dtype=float), (K,)).copy()
    i0 = np.broadcast_to(np.asarray(i0, dtype=float), (K,)).copy()
    x0 = np.zeros((2, K))
    x0[0] = i0
    if r0 is not None:
        x0[1] = np.broadcast_to(np.asarray(r0, dtype=float), (K,))
    init = InitialCondition(s0=s0, x0=x0)
    if not isinstance(shipments, ShipmentSchedule):
        shipments = ShipmentSchedule(week_budgets=tuple(shipments))
    return Scenario(K=K, d=2, n=n, B=B, G=G, c=c, c_v=c_v, v_max=v_max,
                    shipments=shipments, T=T, init=init, Q=Q)


# ---------------------------------------------------------------------------
# Assumption checks


@dataclass
class ValidationReport:
    checks: list = field(default_factory=list)   # (name, passed, detail)

    def add(self, name, passed, detail=""):
        self.checks.append((name, bool(passed), detail))

    @property
    def all_passed(self):
        return all(p for _, p, _ in self.checks)

    def failed(self):
        return [(name, detail) for name, p, detail in self.checks if not p]


def _cost_reachable_stages(G, tol=0.0):
    """Stages reachable from stage 0 through strictly positive progression entries."""
    d = G.shape[0]
    seen = {0}
    frontier = [0]
    while frontier:
        prev = frontier.pop()
        for nxt in range(d):
            if nxt != prev and G[nxt, prev] > tol and nxt not in seen:
                seen.add(nxt)
                frontier.append(nxt)
    return seen


def validate_assumptions(scenario):
    """Diagnostic checks of the linearity/positivity assumptions.

    (a) B >= 0, (b) c >= 0, (c) G Metzler with zero column sums,
    (d) the inflow stage feeds a cost-contributing state: c_1 > 0 or some
    stage reachable from stage 1 in the positivity graph of G has c_j > 0.
    """
    rep = ValidationReport()
    B, G, c = scenario.B, scenario.G, scenario.c

    neg = np.argwhere(B < 0.0)
    rep.add("B_nonnegative", neg.size == 0,
            "" if neg.size == 0 else f"B{tuple(neg[0])} < 0")

    negc = np.nonzero(c < 0.0)[0]
    rep.add("c_nonnegative", negc.size == 0,
            "" if negc.size == 0 else f"c[{negc[0]}] < 0")

    off = G - np.diag(np.diag(G))
    negg = np.argwhere(off < 0.0)
    metzler = negg.size == 0
    colsum_ok = np.abs(G.sum(axis=0)).max() <= 1e-10
    rep.add("G_metzler_conservative", metzler and colsum_ok,
            "" if metzler else f"G{tuple(negg[0])} < 0 off-diagonal")

    reachable = _cost_reachable_stages(G)
    cost_ok = c[0] > 0.0 or any(c[j] > 0.0 for j in reachable if j >= 1)
    rep.add("cost_reachability", cost_ok,
            "" if cost_ok else "no cost-contributing stage reachable from stage 1")
    return rep


# ---------------------------------------------------------------------------
# JSON serialization and presets


def scenario_to_dict(scenario):
    out = {
        "K": scenario.K,
        "d": scenario.d,
        "n": scenario.n.tolist(),
        "B": scenario.B.tolist(),
        "G": scenario.G.tolist(),
        "c": scenario.c.tolist(),
        "c_v": scenario.c_v,
        "v_max": scenario.v_max.tolist(),
        "week_budgets": list(scenario.shipments.week_budgets),
        "epsilon": scenario.shipments.epsilon,
        "T": scenario.T,
        "s0": scenario.init.s0.tolist(),
        "x0": scenario.init.x0.tolist(),
    }
    if scenario.Q is not None:
        out["Q"] = scenario.Q.tolist()
    return out


def scenario_from_dict(data):
    """Accepts the raw form (B, G, c) or the SIR commuter form (beta, gamma, alpha, M, c_h)."""
    shipments = ShipmentSchedule(week_budgets=tuple(data["week_budgets"]),
                                 epsilon=float(data.get("epsilon", 0.1)))
    Q = np.asarray(data["Q"], dtype=float) if data.get("Q") is not None else None
    if "beta" in data:
        i0 = data.get("i0")
        x0 = data.get("x0")
        if i0 is None:
            if x0 is None:
                raise ScenarioError("commuter form needs i0 or x0")
            x0 = np.asarray(x0, dtype=float)
            i0, r0 = x0[0], x0[1]
        else:
            r0 = data.get("r0")
        return build_sir_commuter(
            beta=data["beta"], gamma=data["gamma"], alpha=data["alpha"],
            M=data["M"], n=data["n"], v_max=data["v_max"], shipments=shipments,
            c_v=data["c_v"], c_h=data["c_h"], T=data["T"],
            s0=data["s0"], i0=i0, r0=r0, Q=Q)
    init = InitialCondition(s0=np.asarray(data["s0"], dtype=float),
                            x0=np.asarray(data["x0"], dtype=float),
                            V0=float(data.get("V0", 0.0)))
    return Scenario(K=int(data["K"]), d=int(data["d"]),
                    n=np.asarray(data["n"], dtype=float),
                    B=np.asarray(data["B"], dtype=float),
                    G=np.asarray(data["G"], dtype=float),
                    c=np.asarray(data["c"], dtype=float),
                    c_v=float(data["c_v"]),
                    v_max=np.asarray(data["v_max"], dtype=float),
                    shipments=shipments, T=float(data["T"]), init=init, Q=Q)


def load_scenario(path):
    with open(path) as fh:
        data = json.load(fh)
    return scenario_from_dict(data)


def save_scenario(scenario, path):
    with open(path, "w") as fh:
        json.dump(scenario_to_dict(scenario), fh, indent=2)


# Shared experiment parameters: 28-day horizon, weekly shipments 1..4 / 30,
# recovery 1/7, home-stay fraction 0.64, dose cost 0.01, health cost 100.
_COMMON = dict(gamma=1.0 / 7.0, alpha=0.64, c_v=0.01, c_h=100.0, T=28.0,
               shipments=(1 / 30, 2 / 30, 3 / 30, 4 / 30))

_PRESETS = {
    "cities3": dict(
        beta=[0.3, 0.2, 0.1],
        n=[0.83, 0.083, 0.083],
        s0=[0.96, 0.97, 0.95],
        i0=[0.02, 0.02, 0.01],
        v_max=0.3 / 28.0,
        M=[[0.9, 0.05, 0.05],
           [0.45, 0.45, 0.10],
           [0.45, 0.10, 0.45]],
    ),
    "cities5": dict(
        beta=[0.35, 0.3, 0.25, 0.2, 0.15],
        n=[0.5, 0.3, 0.1, 0.05, 0.05],
        s0=0.97,
        i0=0.01,
        v_max=np.array([0.35, 0.32, 0.3, 0.28, 0.26]) / 28.0,
        M=[[0.8, 0.05, 0.05, 0.05, 0.05],
           [0.1, 0.7, 0.1, 0.05, 0.05],
           [0.05, 0.1, 0.7, 0.1, 0.05],
           [0.05, 0.05, 0.1, 0.7, 0.1],
           [0.05, 0.05, 0.05, 0.1, 0.75]],
    ),
    "cities8": dict(
        beta=[0.35, 0.3, 0.25, 0.2, 0.15, 0.1, 0.05, 0.04],
        n=[0.46, 0.26, 0.13, 0.06, 0.03, 0.02, 0.007, 0.007],
        s0=0.98,
        i0=0.005,
        v_max=np.array([0.5, 0.48, 0.46, 0.44, 0.42, 0.4, 0.38, 0.36]) / 28.0,
        M=[[0.7, 0.1, 0.05, 0.05, 0.03, 0.03, 0.02, 0.02],
           [0.1, 0.7, 0.1, 0.02, 0.02, 0.02, 0.02, 0.02],
           [0.05, 0.1, 0.75, 0.02, 0.02, 0.02, 0.02, 0.02],
           [0.05, 0.02, 0.02, 0.75, 0.05, 0.05, 0.03, 0.03],
           [0.03, 0.02, 0.02, 0.05, 0.8, 0.03, 0.02, 0.03],
           [0.03, 0.02, 0.02, 0.05, 0.03, 0.8, 0.03, 0.02],
           [0.02, 0.02, 0.02, 0.03, 0.02, 0.03, 0.85, 0.01],
           [0.02, 0.02, 0.02, 0.03, 0.03, 0.02, 0.01, 0.85]],
    ),
}

PRESET_NAMES = tuple(sorted(_PRESETS))


def preset(name):
    """Built-in city networks. Valid names: cities3, cities5, cities8."""
    if name not in _PRESETS:
        raise ScenarioError(
            f"unknown preset {name!r}; valid names: {', '.join(PRESET_NAMES)}")
    p = dict(_PRESETS[name])
    sched = ShipmentSchedule(week_budgets=_COMMON["shipments"])
    return build_sir_commuter(
        beta=p["beta"], gamma=_COMMON["gamma"], alpha=_COMMON["alpha"],
        M=p["M"], n=p["n"], v_max=p["v_max"], shipments=sched,
        c_v=_COMMON["c_v"], c_h=_COMMON["c_h"], T=_COMMON["T"],
        s0=p["s0"], i0=p["i0"])
