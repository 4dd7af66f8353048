import json

import numpy as np
import pytest

from epictrl import (BangSchedule, GridControl, SimulationError, cost_linear,
                     cost_quadratic, events_to_json, preset,
                     running_health_cost, simulate, trajectory_to_csv)
from epictrl.forward import _steps_per_week


def test_schedule_constructors():
    never = BangSchedule.never(3, 4)
    full = BangSchedule.full(3, 4)
    assert never.K == 3 and never.n_weeks == 4
    np.testing.assert_allclose(never.tau[:, 1], 7.0)
    np.testing.assert_allclose(full.tau[:, 1], 14.0)
    with pytest.raises(SimulationError):
        BangSchedule([[8.0, 8.0]])   # 8.0 outside week 0's interval [0, 7]
    with pytest.raises(SimulationError):
        GridControl([[-0.1]])


def test_step_must_divide_week():
    assert _steps_per_week(0.01) == 700
    with pytest.raises(SimulationError):
        _steps_per_week(0.03)


def test_no_vaccination_baseline():
    sc = preset("cities3")
    tr = simulate(sc, BangSchedule.never(sc.K, sc.n_weeks), 0.01)
    np.testing.assert_allclose(tr.V, 0.0, atol=1e-15)
    np.testing.assert_allclose(tr.u_realized, 0.0)
    assert not tr.switch_events()
    # epidemic burns through: susceptibles strictly decrease
    assert np.all(np.diff(tr.s @ sc.n) < 0)


def test_population_conservation():
    sc = preset("cities5")
    tr = simulate(sc, BangSchedule.full(sc.K, sc.n_weeks), 0.01)
    total = tr.total_population(sc.n)
    np.testing.assert_allclose(total, total[0], rtol=0, atol=1e-12)


def test_stock_clamp_and_events():
    sc = preset("cities3")
    tr = simulate(sc, BangSchedule.full(sc.K, sc.n_weeks), 0.01)
    # full-throttle vaccination exhausts the early shipments mid-week
    stock = tr.stock_events()
    assert stock
    D = sc.shipments.cumulative(tr.times)
    assert np.all(tr.V <= D + 1e-10)
    # after a stock event, no vaccination until the next shipment arrives
    e = stock[0]
    k_e = int(np.ceil(e.time / tr.h))
    k_week = int(7.0 * (int(e.time / 7.0) + 1) / tr.h)
    assert np.all(tr.u_realized[k_e + 1:k_week] == 0.0)


def test_stock_clamp_disabled():
    sc = preset("cities3")
    tr = simulate(sc, BangSchedule.full(sc.K, sc.n_weeks), 0.01,
                  enforce_stock=False)
    assert not tr.stock_events()
    tr_clamped = simulate(sc, BangSchedule.full(sc.K, sc.n_weeks), 0.01)
    assert tr.V[-1] > tr_clamped.V[-1]
    # the early weeks' budgets are overdrawn without the clamp
    k = round(7.0 / tr.h)
    assert tr.V[k] > sc.shipments.cumulative(0.0) + 1e-6


def test_bang_arc_saturates_mixed_constraint():
    sc = preset("cities3")
    tau = np.tile(7.0 * np.arange(4) + 1.0, (sc.K, 1))  # 1 day/week, slack stock
    tr = simulate(sc, BangSchedule(tau), 0.01)
    us = tr.u_realized * tr.s
    active = tr.u_realized > 0
    np.testing.assert_allclose(us[active],
                               np.broadcast_to(sc.v_max, us.shape)[active],
                               rtol=1e-12)
    assert not tr.stock_events()


def test_off_grid_switch_time_is_exact():
    """A switch strictly inside a step must split the step, not snap to it."""
    sc = preset("cities3")
    tau = np.tile(7.0 * np.arange(4), (sc.K, 1))
    tau[0, 0] = 1.0037  # not a multiple of either step size
    J_coarse = cost_linear(simulate(sc, BangSchedule(tau), 0.02), sc)
    J_fine = cost_linear(simulate(sc, BangSchedule(tau), 0.0025), sc)
    assert abs(J_coarse - J_fine) < 1e-8
    ev = simulate(sc, BangSchedule(tau), 0.02).switch_events()
    assert any(abs(e.time - 1.0037) < 1e-12 and e.region == 0 for e in ev)


def test_restart_matches_full_run():
    sc = preset("cities3")
    sched = BangSchedule.full(sc.K, sc.n_weeks)
    tr = simulate(sc, sched, 0.01)
    k0 = round(5.0 / 0.01)
    tail = simulate(sc, sched, 0.01, t_start=5.0,
                    state_start=(tr.s[k0], tr.x[k0], tr.V[k0]))
    np.testing.assert_allclose(tail.s[-1], tr.s[-1], atol=1e-12)
    np.testing.assert_allclose(tail.V[-1], tr.V[-1], atol=1e-12)


def test_grid_control_clipping():
    sc = preset("cities3")
    N = round(sc.T / 0.01)
    u = np.full((N + 1, sc.K), 10.0)   # far above v_max / s
    tr = simulate(sc, GridControl(u), 0.01)
    us = tr.u_realized * tr.s
    assert np.all(us <= sc.v_max[None, :] + 1e-12)


def test_costs_and_health_integrand():
    sc = preset("cities3")
    tr_none = simulate(sc, BangSchedule.never(sc.K, sc.n_weeks), 0.01)
    tr_full = simulate(sc, BangSchedule.full(sc.K, sc.n_weeks), 0.01)
    assert cost_linear(tr_full, sc) < cost_linear(tr_none, sc)
    assert np.all(running_health_cost(tr_none, sc) > 0)
    # quadratic cost of a zero-effort trajectory is pure health cost
    assert cost_quadratic(tr_none, sc, c_q=1.0) == pytest.approx(
        cost_linear(tr_none, sc))


def test_shape_validation():
    sc = preset("cities3")
    with pytest.raises(SimulationError):
        simulate(sc, BangSchedule.never(2, 4), 0.01)
    with pytest.raises(SimulationError):
        simulate(sc, GridControl(np.zeros((5, 3))), 0.01)


def test_export(tmp_path):
    sc = preset("cities3")
    tr = simulate(sc, BangSchedule.full(sc.K, sc.n_weeks), 0.1)
    csv_path = tmp_path / "traj.csv"
    trajectory_to_csv(tr, sc, csv_path)
    rows = csv_path.read_text().strip().split("\n")
    assert len(rows) == tr.n_nodes + 1
    header = rows[0].split(",")
    assert header[0] == "time" and "V" in header
    # 17-significant-digit formatting round-trips exactly
    s_11 = float(rows[1].split(",")[1])
    assert s_11 == tr.s[0, 0]

    ev_path = tmp_path / "events.json"
    events_to_json(tr, ev_path)
    data = json.loads(ev_path.read_text())
    assert {e["kind"] for e in data} <= {"switch", "stock_exhausted",
                                         "week_boundary"}
