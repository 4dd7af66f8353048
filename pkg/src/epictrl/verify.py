"""Numerical certification of candidate solutions against the structural
results: bang-bang weekly structure, absence of singular arcs, adjoint
monotonicity (shadow prices), PMP multiplier conditions, and forward
invariance of the state simplex.

Each check is a pure function of (trajectory, adjoint, tolerances) returning
a CheckResult; a VerificationReport aggregates them and serializes to JSON
or a text summary. No check mutates its inputs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .adjoint import binding_weeks


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst_residual: float = 0.0
    offending: tuple | None = None   # (region, time) of the worst violation
    details: dict = field(default_factory=dict)
    skipped: bool = False
    reason: str = ""

    def to_dict(self):
        return {"name": self.name, "passed": bool(self.passed),
                "worst_residual": float(self.worst_residual),
                "offending": self.offending, "skipped": self.skipped,
                "reason": self.reason, "details": self.details}


@dataclass
class VerificationReport:
    checks: list = field(default_factory=list)
    tolerances: dict = field(default_factory=dict)
    experimental: bool = False

    @property
    def passed(self):
        return all(c.passed or c.skipped for c in self.checks)

    def to_dict(self):
        return {"passed": bool(self.passed), "experimental": self.experimental,
                "tolerances": self.tolerances,
                "checks": [c.to_dict() for c in self.checks],
                "note": "sign consistency uses a 99% node quorum as the "
                        "discretization surrogate of the a.e. statement"}

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def summary(self):
        lines = []
        for c in self.checks:
            if c.skipped:
                status = "SKIP"
            else:
                status = "pass" if c.passed else "FAIL"
            extra = f" ({c.reason})" if c.reason else ""
            lines.append(f"[{status}] {c.name}: worst residual "
                         f"{c.worst_residual:.3e}{extra}")
        lines.append(f"overall: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines)


DEFAULT_TOL = 1e-8


def check_structure(trajectory, schedule, scenario, tol=DEFAULT_TOL):
    """Weekly bang-bang structure: activation at week start, at most one
    switch per region-week, inactivity persists to week end, and immediate
    stop at stock exhaustion."""
    h = trajectory.h
    spw = round(7.0 / h)
    W = scenario.n_weeks
    K = scenario.K
    u = trajectory.u_realized
    worst = 0.0
    offending = None
    switch_counts = np.zeros((K, W), dtype=int)
    ok = True

    for w in range(W):
        sl = slice(w * spw, (w + 1) * spw)   # nodes of week w, excluding end
        for j in range(K):
            active = u[sl, j] > tol
            # count off->on transitions within the week: activation mid-week
            # or reactivation after a stop both violate the structure
            flips_on = np.nonzero(~active[:-1] & active[1:])[0]
            flips_off = np.nonzero(active[:-1] & ~active[1:])[0]
            switch_counts[j, w] = len(flips_off)
            if len(flips_on) > 0:
                ok = False
                k_bad = w * spw + flips_on[0] + 1
                offending = (j, float(trajectory.times[k_bad]))
                worst = max(worst, 1.0)
            if len(flips_off) > 1:
                ok = False
                k_bad = w * spw + flips_off[1]
                offending = (j, float(trajectory.times[k_bad]))
                worst = max(worst, float(len(flips_off) - 1))

    # claim 3: from the first node at the stock boundary, controls are off
    cum = np.concatenate([[0.0], np.cumsum(scenario.shipments.week_budgets)])
    for e in trajectory.stock_events():
        w = min(int(e.time / 7.0 + 1e-12), W - 1)
        k0 = int(np.ceil(e.time / h - 1e-9))
        k1 = (w + 1) * spw
        res = np.abs(u[k0:k1]).max(initial=0.0)
        if res > tol:
            ok = False
            k_bad = k0 + int(np.argmax(np.abs(u[k0:k1]).max(axis=1) > tol))
            offending = (None, float(trajectory.times[k_bad]))
            worst = max(worst, res)

    return CheckResult("structure", ok, worst, offending,
                       details={"max_switches_per_week": int(switch_counts.max(initial=0))})


def check_no_singular(adjoint, trajectory, scenario, tol_phi=None,
                      min_len=0.5, epsilon=None):
    """No interval of length >= min_len inside shrunk weeks where the
    switching function vanishes while the control is interior."""
    if tol_phi is None:
        tol_phi = 1e-4 * scenario.c_v * scenario.n.max()
    if adjoint.phi is None:
        raise ValueError("switching functions not filled on the adjoint")
    eps = scenario.shipments.epsilon if epsilon is None else epsilon
    t = trajectory.times
    h = trajectory.h
    K = scenario.K
    v_max = scenario.v_max
    us = trajectory.u_realized * trajectory.s
    tol_u = 1e-9 * v_max.max()

    in_shrunk = np.zeros(len(t), dtype=bool)
    for w in range(scenario.n_weeks):
        in_shrunk |= (t >= 7.0 * w + eps) & (t <= 7.0 * (w + 1) - eps)

    worst_len = 0.0
    offending = None
    margin = np.inf
    for j in range(K):
        interior = (us[:, j] > tol_u) & (us[:, j] < v_max[j] - tol_u)
        suspect = interior & (np.abs(adjoint.phi[:, j]) < tol_phi) & in_shrunk
        margin = min(margin, np.abs(adjoint.phi[:, j])[in_shrunk].min(initial=np.inf))
        # maximal run lengths of suspect nodes
        k = 0
        while k < len(suspect):
            if suspect[k]:
                k2 = k
                while k2 + 1 < len(suspect) and suspect[k2 + 1]:
                    k2 += 1
                length = (k2 - k) * h
                if length > worst_len:
                    worst_len = length
                    offending = (j, float(t[k]))
                k = k2 + 1
            else:
                k += 1

    passed = worst_len < min_len
    return CheckResult("no_singular", passed, worst_len, offending,
                       details={"min_abs_phi_in_shrunk_weeks": float(margin),
                                "min_len": min_len, "tol_phi": tol_phi})


def check_shadow_price(adjoint, trajectory, scenario, tol=DEFAULT_TOL):
    """Shadow-price inequalities at every node before T - h:
    psi_x1 < psi_s < 0, forward differences of psi_s > 0, of psi_x1 >= 0."""
    Fmat = scenario.force_matrix()
    d, K = scenario.d, scenario.K
    f = trajectory.x.reshape(len(trajectory.times), d * K) @ Fmat.T
    fmin = float(f.min())
    if fmin <= tol:
        return CheckResult("shadow_price", True, 0.0, skipped=True,
                           reason=f"precondition min f_i = {fmin:.3e} not > tol")

    ps = adjoint.psi_s[:-1]
    px1 = adjoint.psi_x[:-1, 0, :]
    d_ps = np.diff(adjoint.psi_s, axis=0)
    d_px1 = np.diff(adjoint.psi_x[:, 0, :], axis=0)

    viols = {
        "psi_s_negative": float((-ps).min()),       # want > 0
        "ordering": float((ps - px1).min()),        # want > 0
        "psi_s_increasing": float(d_ps.min()),      # want > 0
        "psi_x1_nondecreasing": float(d_px1.min()), # want >= -1e-10
    }
    ok = (viols["psi_s_negative"] > 0 and viols["ordering"] > 0
          and viols["psi_s_increasing"] > 0 and viols["psi_x1_nondecreasing"] >= -1e-10)
    worst = -min(viols.values())
    offending = None
    if not ok:
        key = min(viols, key=viols.get)
        arr = {"psi_s_negative": -ps, "ordering": ps - px1,
               "psi_s_increasing": d_ps, "psi_x1_nondecreasing": d_px1}[key]
        k, j = np.unravel_index(np.argmin(arr), arr.shape)
        offending = (int(j), float(trajectory.times[k]))
    res = CheckResult("shadow_price", ok, max(worst, 0.0), offending, details=viols)
    if scenario.Q is not None:
        res.reason = "experimental: Q != 0 is outside the proven hypotheses"
    return res


def check_pmp(adjoint, trajectory, scenario, tol=DEFAULT_TOL, quorum=0.99):
    """Sign consistency of phi vs control status (99% node quorum),
    nonnegativity of r, complementarity, and the lambda profile."""
    if adjoint.phi is None or adjoint.r is None or adjoint.lam is None:
        raise ValueError("lambda, phi, r must be filled on the adjoint")
    K = scenario.K
    v_max = scenario.v_max
    phi, r, lam = adjoint.phi, adjoint.r, adjoint.lam
    us = trajectory.u_realized * trajectory.s
    tol_u = 1e-9 * v_max.max()
    tol_phi = 1e-4 * scenario.c_v * scenario.n.max()

    on = us >= v_max[None, :] - tol_u
    off = us <= tol_u
    bad = ((phi > tol_phi) & on) | ((phi < -tol_phi) & off)
    frac_ok = 1.0 - bad.mean()

    min_r = float(r.min())
    compl = np.abs(r[:, :K] * (us - v_max[None, :]) * on).max(initial=0.0)
    compl = max(compl, np.abs(r[:, K:] * trajectory.u_realized * off).max(initial=0.0))

    d_lam = np.diff(lam)
    lam_ok = bool((d_lam <= 1e-12).all() and abs(lam[-1]) <= 1e-12 and lam.min() >= 0.0)
    psiV_ok = bool(np.allclose(adjoint.psi_V, -scenario.c_v, atol=1e-12))

    sub = {
        "sign_consistency_fraction": float(frac_ok),
        "min_r": min_r,
        "complementarity": float(compl),
        "lambda_profile_ok": lam_ok,
        "psi_V_ok": psiV_ok,
    }
    ok = (frac_ok >= quorum and min_r >= -1e-8 and compl <= 1e-12
          and lam_ok and psiV_ok)
    offending = None
    if bad.any():
        k, j = np.nonzero(bad)
        offending = (int(j[0]), float(trajectory.times[k[0]]))
    worst = max(1.0 - frac_ok, max(-min_r, 0.0), float(compl))
    return CheckResult("pmp", ok, worst, offending, details=sub)


def check_invariance(trajectory, scenario, tol=1e-10):
    """Forward invariance: positivity, conservation, the stock bound
    V <= D + tol, the Gronwall lower bound on s, and the throughput cap."""
    n = scenario.n
    t = trajectory.times
    drift = trajectory.total_population(n)
    drift = np.abs(drift - drift[0]).max()

    neg = min(trajectory.s.min(), trajectory.x.min(), trajectory.V.min())
    cum = np.concatenate([[0.0], np.cumsum(scenario.shipments.week_budgets)])
    W = scenario.n_weeks
    widx = np.minimum((t / 7.0 + 1e-12).astype(int), W - 1)
    stock_gap = (trajectory.V - cum[widx + 1]).max()

    Fmat = scenario.force_matrix()
    d, K = scenario.d, scenario.K
    f = trajectory.x.reshape(len(t), d * K) @ Fmat.T
    growth = f + trajectory.u_realized
    if scenario.Q is not None:
        growth = growth - np.diag(scenario.Q)[None, :]
    C = growth.max(axis=0)
    lower = trajectory.s[0] * np.exp(-C * scenario.T)
    s_slack = (trajectory.s - lower[None, :]).min()

    u_cap = (trajectory.u_realized * trajectory.s - scenario.v_max[None, :]).max()

    sub = {"drift": float(drift), "most_negative_state": float(neg),
           "stock_overdraw": float(stock_gap), "gronwall_slack": float(s_slack),
           "throughput_excess": float(u_cap),
           "gronwall_lower_bounds": lower.tolist()}
    ok = (drift <= 1e-9 and neg >= -tol and stock_gap <= tol
          and s_slack >= -tol and u_cap <= 1e-9)
    worst = max(drift, -neg, stock_gap, -s_slack, u_cap, 0.0)
    return CheckResult("invariance", ok, worst, details=sub)


def verify_solution(scenario, trajectory, adjoint, schedule=None, tol=DEFAULT_TOL):
    """Run the full check battery on a (trajectory, adjoint) pair whose
    lambda, phi, r slots are filled; returns a VerificationReport."""
    report = VerificationReport(tolerances={
        "structural": tol, "tol_phi": 1e-4 * scenario.c_v * scenario.n.max(),
        "min_len": 0.5, "quorum": 0.99, "state": 1e-10})
    report.checks.append(check_structure(trajectory, schedule, scenario, tol))
    report.checks.append(check_no_singular(adjoint, trajectory, scenario))
    report.checks.append(check_shadow_price(adjoint, trajectory, scenario))
    report.checks.append(check_pmp(adjoint, trajectory, scenario, tol))
    report.checks.append(check_invariance(trajectory, scenario))
    report.experimental = scenario.Q is not None
    report.tolerances["binding_weeks"] = [bool(b) for b in
                                          binding_weeks(scenario, trajectory)]
    return report
