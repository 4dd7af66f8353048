"""Jitted RK4 step kernel. Falls back to numpy if numba is unavailable."""

from __future__ import annotations

import numpy as np

try:
    from numba import njit
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]


@njit(cache=True)
def _deriv(s, x, act, u_row, mode, v_max, n, Fmat, G, Q, use_q):
    K = s.shape[0]
    f = Fmat @ np.ascontiguousarray(x).ravel()
    dx = G @ x
    dx[0] += s * f
    ds = np.empty(K)
    dV = 0.0
    if mode == 0:      # bang arcs: u s saturated at act * v_max
        for i in range(K):
            ds[i] = -s[i] * f[i] - act[i] * v_max[i]
            dV += act[i] * n[i] * v_max[i]
    else:              # grid control, pointwise clipped
        for i in range(K):
            us = min(u_row[i], v_max[i] / s[i]) * s[i]
            ds[i] = -s[i] * f[i] - us
            dV += n[i] * us
    if use_q:
        ds += Q @ s
    return ds, dx, dV


@njit(cache=True)
def adjoint_sweep(psi_s, psi_x, psi_V, h, s_nodes, f_nodes, s_mid, f_mid,
                  viol_nodes, viol_mid, u_nodes, u_mid, Bt, GT, QT, nc, n,
                  mu, c_q, use_q, use_pen, use_quad):
    """Backward RK4 fill of the costate arrays (terminal rows preset)."""
    N = s_nodes.shape[0] - 1
    K = s_nodes.shape[1]
    d = Bt.shape[0]

    def deriv(ps, px, pv, s_, f_, viol, u_):
        dps = (ps - px[0]) * f_
        if use_q:
            dps = dps - QT @ ps
        if use_quad:
            dps = dps + u_ * (ps - pv * n) + 2.0 * c_q * n * u_**2 * s_
        a = (ps - px[0]) * s_
        dpx = np.empty((d, K))
        for sig in range(d):
            dpx[sig] = Bt[sig] @ a
        dpx = dpx - GT @ px + nc
        dpv = 2.0 * mu * viol if use_pen else 0.0
        return dps, dpx, dpv

    for k in range(N - 1, -1, -1):
        ps, px, pv = psi_s[k + 1], psi_x[k + 1], psi_V[k + 1]
        a1 = deriv(ps, px, pv, s_nodes[k + 1], f_nodes[k + 1],
                   viol_nodes[k + 1], u_nodes[k + 1])
        a2 = deriv(ps - 0.5 * h * a1[0], px - 0.5 * h * a1[1], pv - 0.5 * h * a1[2],
                   s_mid[k], f_mid[k], viol_mid[k], u_mid[k])
        a3 = deriv(ps - 0.5 * h * a2[0], px - 0.5 * h * a2[1], pv - 0.5 * h * a2[2],
                   s_mid[k], f_mid[k], viol_mid[k], u_mid[k])
        a4 = deriv(ps - h * a3[0], px - h * a3[1], pv - h * a3[2],
                   s_nodes[k], f_nodes[k], viol_nodes[k], u_nodes[k])
        psi_s[k] = ps - (h / 6.0) * (a1[0] + 2.0 * a2[0] + 2.0 * a3[0] + a4[0])
        psi_x[k] = px - (h / 6.0) * (a1[1] + 2.0 * a2[1] + 2.0 * a3[1] + a4[1])
        psi_V[k] = pv - (h / 6.0) * (a1[2] + 2.0 * a2[2] + 2.0 * a3[2] + a4[2])


@njit(cache=True)
def rk4_step(s, x, V, dt, act, u_row, mode, v_max, n, Fmat, G, Q, use_q):
    hd = 0.5 * dt
    ds1, dx1, dV1 = _deriv(s, x, act, u_row, mode, v_max, n, Fmat, G, Q, use_q)
    ds2, dx2, dV2 = _deriv(s + hd * ds1, x + hd * dx1, act, u_row, mode, v_max, n, Fmat, G, Q, use_q)
    ds3, dx3, dV3 = _deriv(s + hd * ds2, x + hd * dx2, act, u_row, mode, v_max, n, Fmat, G, Q, use_q)
    ds4, dx4, dV4 = _deriv(s + dt * ds3, x + dt * dx3, act, u_row, mode, v_max, n, Fmat, G, Q, use_q)
    c = dt / 6.0
    return (s + c * (ds1 + 2.0 * ds2 + 2.0 * ds3 + ds4),
            x + c * (dx1 + 2.0 * dx2 + 2.0 * dx3 + dx4),
            V + c * (dV1 + 2.0 * dV2 + 2.0 * dV3 + dV4))
