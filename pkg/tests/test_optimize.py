import numpy as np
import pytest

from epictrl import (BangSchedule, GridControl, OptimizeError,
                     OptimizeOptions, brute_force_switch_grid, calibrate_cq,
                     compare_costs, cost_linear, cost_quadratic, fbsm_grid,
                     objective, optimize_quadratic, optimize_switch_times,
                     preset, simulate)


def test_options_validation():
    with pytest.raises(OptimizeError):
        OptimizeOptions(h=-0.01)
    with pytest.raises(OptimizeError):
        OptimizeOptions(damping=1.5)


def test_objective_matches_simulation(toy_scenario):
    sc = toy_scenario
    tau = np.array([[4.0]])
    J = objective(sc, tau, 0.01)
    assert J == pytest.approx(
        cost_linear(simulate(sc, BangSchedule(tau), 0.01), sc))


def test_brute_force_guard():
    with pytest.raises(OptimizeError):
        brute_force_switch_grid(preset("cities3"), 0.5)


def test_brute_force_toy(toy_scenario):
    res = brute_force_switch_grid(toy_scenario, 0.5)
    assert res.n_evaluations == 15
    # the optimum is interior: vaccinating some but not all of the week wins
    assert 0.0 < res.control.tau[0, 0] < 7.0
    assert res.J < objective(toy_scenario, [[0.0]], 0.01)
    assert res.J < objective(toy_scenario, [[7.0]], 0.01)


def test_switch_time_optimizer_toy(toy_scenario):
    sc = toy_scenario
    opts = OptimizeOptions(h=0.01, starts=3, max_iters=120, seed=0)
    res = optimize_switch_times(sc, opts)
    assert res.converged
    assert res.n_evaluations > 0
    assert len(res.per_start) == opts.starts
    # local refinement beats the 0.05-day oracle grid
    oracle = brute_force_switch_grid(sc, 0.05)
    assert res.J <= oracle.J + 1e-6 * abs(oracle.J)


def test_optimizer_is_deterministic(toy_scenario):
    opts = OptimizeOptions(h=0.01, starts=3, max_iters=120, seed=7)
    r1 = optimize_switch_times(toy_scenario, opts)
    r2 = optimize_switch_times(toy_scenario, opts)
    assert r1.J == r2.J
    np.testing.assert_array_equal(r1.control.tau, r2.control.tau)


def test_fbsm_grid_toy(toy_scenario):
    sc = toy_scenario
    res = fbsm_grid(sc, OptimizeOptions(h=0.01, starts=1))
    assert isinstance(res.control, GridControl)
    tr = simulate(sc, res.control, 0.01)
    assert np.all(tr.V <= sc.shipments.cumulative(tr.times) + 1e-10)
    # the sweep method should approach the switch-time optimum from above
    bang = optimize_switch_times(
        sc, OptimizeOptions(h=0.01, starts=2, max_iters=120))
    assert res.J <= cost_linear(
        simulate(sc, BangSchedule.full(sc.K, sc.n_weeks), 0.01), sc)
    assert res.J >= bang.J - 1e-6
    assert res.J <= bang.J * 1.02


def test_quadratic_optimizer_toy(toy_scenario):
    sc = toy_scenario
    tr_bang = simulate(sc, BangSchedule([[5.0]]), 0.01)
    c_q = calibrate_cq(sc, tr_bang)
    assert c_q > 0.0
    res = optimize_quadratic(sc, c_q, OptimizeOptions(h=0.01, starts=1))
    assert isinstance(res.control, GridControl)
    tr = simulate(sc, res.control, 0.01)
    assert res.J == pytest.approx(cost_quadratic(tr, sc, c_q), rel=1e-9)
    # interior control values appear (the quadratic cost smooths the bang)
    us = tr.u_realized * tr.s
    frac_interior = np.mean((us > 0.02 * sc.v_max) & (us < 0.98 * sc.v_max))
    assert frac_interior > 0.05


def test_calibrate_cq_rejects_zero_effort(toy_scenario):
    sc = toy_scenario
    tr = simulate(sc, BangSchedule.never(sc.K, sc.n_weeks), 0.01)
    with pytest.raises(OptimizeError):
        calibrate_cq(sc, tr)


def test_compare_costs_toy(toy_scenario):
    out = compare_costs(toy_scenario,
                        options=OptimizeOptions(h=0.01, starts=2,
                                                max_iters=120))
    N = len(out["times"])
    for key in ("effort_linear", "effort_quadratic", "infectious_linear",
                "infectious_quadratic", "cumulative_linear",
                "cumulative_quadratic", "running_difference"):
        assert len(out[key]) == N
        assert np.all(np.isfinite(out[key]))
    assert out["c_q"] > 0.0
    assert out["running_difference"][-1] == pytest.approx(
        out["J_quadratic"] - out["J_linear"], abs=1e-6)
