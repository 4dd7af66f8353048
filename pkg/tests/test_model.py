import dataclasses

import numpy as np
import pytest

from epictrl import (InitialCondition, PRESET_NAMES, Scenario, ScenarioError,
                     ShipmentSchedule, build_sir_commuter, load_scenario,
                     migration_from_flows, preset, save_scenario,
                     scenario_from_dict, scenario_to_dict,
                     validate_assumptions)


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_well_formed(name):
    sc = preset(name)
    assert sc.K == int(name.replace("cities", ""))
    assert sc.d == 2
    assert sc.n.shape == (sc.K,)
    np.testing.assert_allclose(sc.n.sum(), 1.0, rtol=1e-12)
    assert sc.T == 28.0 and sc.n_weeks == 4
    assert np.all(sc.v_max > 0)
    assert len(sc.shipments.week_budgets) == 4


@pytest.mark.parametrize("name", PRESET_NAMES)
def test_presets_satisfy_assumptions(name):
    report = validate_assumptions(preset(name))
    assert report.all_passed, report.failed()


def test_shipment_cumulative_and_smoothed():
    sched = ShipmentSchedule([0.1, 0.2, 0.0, 0.3], epsilon=0.5)
    assert sched.n_weeks == 4 and sched.horizon == 28.0
    # step supply: whole-week budget available from the week start
    assert sched.cumulative(0.0) == pytest.approx(0.1)
    assert sched.cumulative(6.9) == pytest.approx(0.1)
    assert sched.cumulative(7.0) == pytest.approx(0.3)
    assert sched.cumulative(27.9) == pytest.approx(0.6)
    # smoothed supply agrees with the step outside the jump windows and
    # splits the jump at the week boundary
    t = np.concatenate([np.linspace(7 * w + 0.3, 7 * (w + 1) - 0.3, 40)
                        for w in range(4)])  # avoids the +-eps/2 jump windows
    np.testing.assert_allclose(sched.smoothed(t), sched.cumulative(t))
    assert sched.smoothed(7.0) == pytest.approx(0.2)   # mean of 0.1 and 0.3
    grid = np.linspace(0.0, 28.0, 4001)
    assert np.all(np.diff(sched.smoothed(grid)) >= -1e-15)
    with pytest.raises(ScenarioError):
        sched.cumulative(30.0)
    with pytest.raises(ScenarioError):
        ShipmentSchedule([0.1], epsilon=0.0)
    with pytest.raises(ScenarioError):
        ShipmentSchedule([-0.1])


def test_smoothed_rate_integrates_to_jump():
    sched = ShipmentSchedule([0.1, 0.2], epsilon=0.4)
    t = np.linspace(6.5, 7.5, 20001)
    from scipy.integrate import simpson
    assert simpson(sched.smoothed_rate(t), x=t) == pytest.approx(0.2, rel=1e-6)


def test_initial_condition_validation():
    with pytest.raises(ScenarioError):
        InitialCondition(s0=[0.0], x0=[[0.1], [0.0]])
    with pytest.raises(ScenarioError):
        InitialCondition(s0=[0.9], x0=[[0.2], [0.0]])  # exceeds 1


def test_scenario_validation_errors():
    sc = preset("cities3")
    with pytest.raises(ScenarioError):
        dataclasses.replace(sc, n=np.array([0.5, 0.3, 0.1]))  # not a distribution
    bad_G = sc.G.copy()
    bad_G[0, 0] = 1.0  # destroys nonpositive column sums
    with pytest.raises(ScenarioError):
        dataclasses.replace(sc, G=bad_G)
    with pytest.raises(ScenarioError):
        dataclasses.replace(sc, T=10.0)  # not a whole number of weeks


def test_build_sir_commuter_normalizes_population():
    sc = build_sir_commuter(
        beta=[0.4, 0.5], gamma=1 / 7, alpha=0.6,
        M=[[0.9, 0.1], [0.2, 0.8]], n=[2.0, 6.0],
        s0=[0.9, 0.95], i0=[0.05, 0.01],
        v_max=[0.01, 0.01], shipments=ShipmentSchedule([0.05, 0.05]),
        c_v=0.01, c_h=100.0, T=14.0)
    np.testing.assert_allclose(sc.n, [0.25, 0.75])
    assert sc.d == 2
    # SIR stage matrix: infection flows in at stage 1, recovery to stage 2
    np.testing.assert_allclose(sc.G, [[-1 / 7, 0.0], [1 / 7, 0.0]])
    np.testing.assert_allclose(sc.c, [100.0, 0.0])


def test_force_of_infection_linearity():
    sc = preset("cities5")
    rng = np.random.default_rng(3)
    x = rng.uniform(0.0, 0.1, (sc.d, sc.K))
    y = rng.uniform(0.0, 0.1, (sc.d, sc.K))
    f = sc.force_of_infection
    np.testing.assert_allclose(f(x + y), f(x) + f(y), atol=1e-15)
    np.testing.assert_allclose(sc.force_matrix() @ x.ravel(), f(x))


def test_migration_from_flows_mass_conserving():
    n = np.array([0.2, 0.3, 0.5])
    L = np.array([[-0.02, 0.01, 0.01],
                  [0.01, -0.02, 0.01],
                  [0.01, 0.01, -0.02]])
    Q = migration_from_flows(L, n)
    np.testing.assert_allclose(n @ Q, 0.0, atol=1e-15)
    off = Q - np.diag(np.diag(Q))
    assert np.all(off >= 0.0)  # Metzler


def test_scenario_dict_roundtrip(tmp_path):
    sc = preset("cities3")
    sc2 = scenario_from_dict(scenario_to_dict(sc))
    np.testing.assert_allclose(sc2.B, sc.B)
    np.testing.assert_allclose(sc2.G, sc.G)
    np.testing.assert_allclose(sc2.init.s0, sc.init.s0)
    assert sc2.shipments.week_budgets == sc.shipments.week_budgets

    path = tmp_path / "scenario.json"
    save_scenario(sc, path)
    sc3 = load_scenario(path)
    np.testing.assert_allclose(sc3.n, sc.n)
    np.testing.assert_allclose(sc3.v_max, sc.v_max)


def test_scenario_from_commuter_dict():
    data = {
        "beta": [0.5], "gamma": 1 / 7, "alpha": 1.0, "M": [[1.0]],
        "n": [1.0], "s0": [0.9], "i0": [0.05], "v_max": [0.06],
        "week_budgets": [1.0], "c_v": 8.0, "c_h": 100.0, "T": 7.0,
    }
    sc = scenario_from_dict(data)
    assert isinstance(sc, Scenario)
    assert sc.K == 1 and sc.T == 7.0


def test_validate_assumptions_flags_bad_cost():
    sc = preset("cities3")
    # zero health cost on every reachable stage breaks the cost assumption
    bad = dataclasses.replace(sc, c=np.zeros(sc.d))
    report = validate_assumptions(bad)
    assert not report.all_passed
    assert report.failed()
