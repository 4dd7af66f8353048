"""Costate integration along a stored trajectory and multiplier reconstruction.

The costates are integrated backward with RK4 on the same grid as the
trajectory; state values at RK substages come from cubic interpolation of the
stored samples. The susceptible costate uses the reduced equation
psi_s' = (psi_s - psi_x1) f, valid along bang-bang arcs where the
control-dependent terms cancel against the mixed-constraint multipliers.

The supply multiplier lambda is reconstructed after the fact from switch-time
stationarity: it is constant between stock-contact epochs, drops at the week
boundary following each contact, and is pinned by the zero of the switching
function at realized switch times (including the implicit switch at stock
exhaustion for regions still vaccinating when the budget runs out).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from ._kernels import adjoint_sweep


@dataclass
class AdjointTrajectory:
    times: np.ndarray
    psi_s: np.ndarray        # (N+1, K)
    psi_x: np.ndarray        # (N+1, d, K)
    psi_V: np.ndarray        # (N+1,); constant -c_v in the unpenalized case
    lam: np.ndarray | None = None    # (N+1,)
    phi: np.ndarray | None = None    # (N+1, K)
    r: np.ndarray | None = None      # (N+1, 2K)
    lambda0: float = 1.0


def _spline_stage_data(trajectory):
    """Node and midpoint samples of s, x needed by the backward RK4 sweep."""
    t = trajectory.times
    mids = 0.5 * (t[:-1] + t[1:])
    s_spl = CubicSpline(t, trajectory.s, axis=0)
    x_spl = CubicSpline(t, trajectory.x, axis=0)
    return s_spl(mids), x_spl(mids)


def integrate_adjoint(scenario, trajectory, control=None, *,
                      supply_penalty=None, quadratic=None, terminal_psi_V=None):
    """Backward costate sweep; returns an AdjointTrajectory (lambda, phi, r unset).

    supply_penalty: weight mu of the quadratic soft supply constraint
    mu * max(0, V - D_eps)^2 added to the running cost (grid-method use);
    makes psi_V time dependent. quadratic: (c_q, u_nodes) enables the
    quadratic-effort cost terms in the psi_s equation. terminal_psi_V
    overrides the default psi_V(T) = -c_v.
    """
    K, d = scenario.K, scenario.d
    n, c, c_v = scenario.n, scenario.c, scenario.c_v
    B, G, Q = scenario.B, scenario.G, scenario.Q
    Fmat = scenario.force_matrix()
    t = trajectory.times
    N = len(t) - 1
    h = trajectory.h

    s_nodes = trajectory.s
    f_nodes = trajectory.x.reshape(N + 1, d * K) @ Fmat.T
    s_mid, x_mid = _spline_stage_data(trajectory)
    f_mid = x_mid.reshape(N, d * K) @ Fmat.T

    use_pen = supply_penalty is not None
    mu = supply_penalty if use_pen else 0.0
    if use_pen:
        sched = scenario.shipments
        viol_nodes = np.maximum(0.0, trajectory.V - sched.smoothed(t))
        v_spl = CubicSpline(t, trajectory.V)
        mids = 0.5 * (t[:-1] + t[1:])
        viol_mid = np.maximum(0.0, v_spl(mids) - sched.smoothed(mids))
    else:
        viol_nodes = np.zeros(N + 1)
        viol_mid = np.zeros(N)
    use_quad = quadratic is not None
    if use_quad:
        c_q, u_nodes = quadratic
        u_nodes = np.asarray(u_nodes, dtype=float)
        u_mid = 0.5 * (u_nodes[:-1] + u_nodes[1:])
    else:
        c_q = 0.0
        u_nodes = np.zeros((N + 1, K))
        u_mid = np.zeros((N, K))

    Bt = np.ascontiguousarray(np.transpose(B, (2, 1, 0)))  # (d, K, K)
    use_q = Q is not None
    QT = np.ascontiguousarray(Q.T) if use_q else np.zeros((K, K))
    GT = np.ascontiguousarray(G.T)
    nc = np.ascontiguousarray(c[:, None] * n[None, :])

    psi_s = np.zeros((N + 1, K))
    psi_x = np.zeros((N + 1, d, K))
    psi_V = np.full(N + 1, -c_v if terminal_psi_V is None else terminal_psi_V)

    adjoint_sweep(psi_s, psi_x, psi_V, h, s_nodes, f_nodes, s_mid, f_mid,
                  viol_nodes, viol_mid, u_nodes, u_mid, Bt, GT, QT, nc, n,
                  float(mu), float(c_q), use_q, use_pen, use_quad)

    return AdjointTrajectory(times=t, psi_s=psi_s, psi_x=psi_x, psi_V=psi_V)


# ---------------------------------------------------------------------------
# Supply multiplier


def _pava_nonincreasing(values):
    """Pool-adjacent-violators projection onto nonincreasing sequences."""
    vals, wts, runs = [], [], []
    for v in values:
        vals.append(float(v)); wts.append(1.0); runs.append(1)
        while len(vals) > 1 and vals[-2] < vals[-1]:
            v2, w2, r2 = vals.pop(), wts.pop(), runs.pop()
            vals[-1] = (vals[-1] * wts[-1] + v2 * w2) / (wts[-1] + w2)
            wts[-1] += w2
            runs[-1] += r2
    out = []
    for v, r in zip(vals, runs):
        out.extend([v] * r)
    return np.array(out)


def binding_weeks(scenario, trajectory, rel_tol=1e-4):
    """Weeks whose cumulative budget is (near-)exhausted by week end.

    Catches both clamp events and schedules tuned to use up the stock exactly
    at a switch, in which case no stock event fires.
    """
    spw = round(7.0 / trajectory.h)
    W = scenario.n_weeks
    cum = np.concatenate([[0.0], np.cumsum(scenario.shipments.week_budgets)])
    out = np.zeros(W, dtype=bool)
    for e in trajectory.stock_events():
        out[min(int(e.time / 7.0 + 1e-12), W - 1)] = True
    for w in range(W):
        V_end = trajectory.V[min((w + 1) * spw, len(trajectory.V) - 1)]
        if cum[w + 1] - V_end <= rel_tol * scenario.shipments.week_budgets[w]:
            out[w] = True
    return out


def build_epochs(binding):
    """Maximal week runs each ending at a binding week; trailing slack weeks
    form the terminal epoch, where lambda = 0 by lambda(T) = 0."""
    W = len(binding)
    epochs = []
    start = 0
    for w in range(W):
        if binding[w]:
            epochs.append((start, w))
            start = w + 1
    terminal = (start, W - 1) if start <= W - 1 else None
    return epochs, terminal


def estimate_lambda(scenario, trajectory, adjoint, schedule):
    """Per-node supply multiplier estimate and a stationarity residual report.

    Returns (lam_nodes, info). info carries the per-epoch values, sample
    lists, the worst post-projection residual max |phi_j(tau*_j)| over the
    realized switches, and a degenerate-data warning flag.
    """
    t = trajectory.times
    n, c_v = scenario.n, scenario.c_v
    W = scenario.n_weeks
    h = trajectory.h
    spw = round(7.0 / h)

    contacts = sorted(e.time for e in trajectory.stock_events())
    binding = binding_weeks(scenario, trajectory)
    epochs, terminal_epoch = build_epochs(binding)

    def stationarity(j, at):
        psi = np.interp(at, t, adjoint.psi_s[:, j])
        return -c_v - psi / n[j]

    def week_of(time):
        return min(int(time / 7.0 + 1e-12), W - 1)

    switches = [(e.time, e.region) for e in trajectory.switch_events()]
    interior = [(tau, j) for tau, j in switches
                if tau - 7.0 * week_of(tau) > 1e-9
                and 7.0 * (week_of(tau) + 1) - tau > 1e-9]

    samples = {i: [] for i in range(len(epochs))}
    for idx, (w0, w1) in enumerate(epochs):
        for tau, j in interior:
            if w0 <= week_of(tau) <= w1:
                samples[idx].append(stationarity(j, tau))
        # implicit switches: regions still vaccinating when the clamp cuts
        # the epoch's budget mid-week (their stop is a stock event, not a
        # switch event, but the switching function still vanishes there);
        # no sample when exhaustion lands exactly on the week end, since
        # the constraint lapses the moment the next shipment arrives
        for e in (e for e in contacts if week_of(e) == w1):
            if 7.0 * (w1 + 1) - e <= 1e-9:
                continue
            k_e = min(int(e / h), len(t) - 1)
            active = np.nonzero(trajectory.u_realized[k_e] > 0.0)[0]
            for j in active:
                samples[idx].append(stationarity(j, e))

    values = np.zeros(len(epochs))
    later = 0.0
    for idx in range(len(epochs) - 1, -1, -1):
        values[idx] = np.mean(samples[idx]) if samples[idx] else later
        later = values[idx]
    values = np.maximum(_pava_nonincreasing(values), 0.0) if len(values) else values

    week_value = np.zeros(W)
    for idx, (w0, w1) in enumerate(epochs):
        week_value[w0:w1 + 1] = values[idx]
    # terminal epoch weeks stay at zero

    week_idx = np.minimum((t / 7.0 + 1e-12).astype(int), W - 1)
    lam = week_value[week_idx]
    lam[-1] = 0.0

    # residuals of the switching functions at the realized switches
    residual = 0.0
    for tau, j in interior:
        lam_tau = week_value[week_of(tau)]
        psi = np.interp(tau, t, adjoint.psi_s[:, j])
        residual = max(residual, abs((c_v + lam_tau) * n[j] + psi))

    info = {
        "epochs": epochs,
        "terminal_epoch": terminal_epoch,
        "epoch_values": values.tolist(),
        "n_samples": {i: len(s) for i, s in samples.items()},
        "residual": residual,
        "degenerate": not contacts and not interior,
    }
    return lam, info


def compute_switching_functions(scenario, adjoint, lam):
    """phi[k, j] = (c_v + lambda(t_k)) n_j + psi_s[k, j]."""
    return (scenario.c_v + lam)[:, None] * scenario.n[None, :] + adjoint.psi_s


def switching_function(adjoint, lam, j, t_k, scenario=None, n=None, c_v=None):
    """Scalar phi_j at grid node index t_k."""
    if scenario is not None:
        n, c_v = scenario.n, scenario.c_v
    return (c_v + lam[t_k]) * n[j] + adjoint.psi_s[t_k, j]


# ---------------------------------------------------------------------------
# Mixed-constraint multipliers


def reconstruct_multipliers(phi, trajectory, scenario, tol=None):
    """Case-split reconstruction of the 2K mixed-constraint multipliers.

    Returns (r, residuals, flagged) where residuals are the two complementarity
    products (identically zero by construction) and flagged lists nodes with
    interior control values, candidates for singular behavior.
    """
    K = scenario.K
    v_max = scenario.v_max
    if tol is None:
        tol = 1e-9 * float(v_max.max())
    us = trajectory.u_realized * trajectory.s
    on = us >= v_max[None, :] - tol
    off = us <= tol
    interior = ~(on | off)

    Np1 = us.shape[0]
    r = np.zeros((Np1, 2 * K))
    r[:, :K] = np.where(on, -phi, 0.0)
    r[:, K:] = np.where(off, phi * trajectory.s, 0.0)

    res_mixed = np.abs(r[:, :K] * (us - v_max[None, :])) * on
    res_sign = np.abs(r[:, K:] * trajectory.u_realized) * off
    residuals = max(res_mixed.max(initial=0.0), res_sign.max(initial=0.0))
    flagged = [(int(k), int(j)) for k, j in zip(*np.nonzero(interior))]
    return r, residuals, flagged


def full_adjoint(scenario, trajectory):
    """Costate sweep plus multiplier reconstruction; returns the adjoint with
    lambda, phi and r filled, and the lambda estimate's info dict."""
    adj = integrate_adjoint(scenario, trajectory)
    lam, info = estimate_lambda(scenario, trajectory, adj, scenario.shipments)
    adj.lam = lam
    adj.phi = compute_switching_functions(scenario, adj, lam)
    adj.r, compl, flagged = reconstruct_multipliers(adj.phi, trajectory, scenario)
    info["complementarity_residual"] = compl
    info["flagged_nodes"] = flagged
    return adj, info


def adjoint_to_csv(adjoint, scenario, path, fmt="%.17g"):
    import csv

    K, d = scenario.K, scenario.d
    header = (["time"] + [f"psi_s_{i + 1}" for i in range(K)]
              + [f"psi_x{j + 1}_{i + 1}" for j in range(d) for i in range(K)]
              + ["psi_V"])
    if adjoint.lam is not None:
        header.append("lambda")
    if adjoint.phi is not None:
        header += [f"phi_{i + 1}" for i in range(K)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for k in range(len(adjoint.times)):
            row = ([adjoint.times[k]] + list(adjoint.psi_s[k])
                   + list(adjoint.psi_x[k].ravel()) + [adjoint.psi_V[k]])
            if adjoint.lam is not None:
                row.append(adjoint.lam[k])
            if adjoint.phi is not None:
                row += list(adjoint.phi[k])
            writer.writerow(fmt % v for v in row)
