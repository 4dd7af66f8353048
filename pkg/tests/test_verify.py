import copy
import json

import numpy as np
import pytest

from epictrl import (BangSchedule, GridControl, OptimizeOptions, full_adjoint,
                     optimize_switch_times, preset, simulate, verify_solution)
from epictrl.verify import (check_invariance, check_pmp, check_shadow_price,
                            check_structure)


@pytest.fixture(scope="module")
def toy_solution(toy_scenario):
    sc = toy_scenario
    res = optimize_switch_times(
        sc, OptimizeOptions(h=0.01, starts=2, max_iters=120))
    tr = simulate(sc, res.control, 0.01)
    adj, _ = full_adjoint(sc, tr)
    return sc, res.control, tr, adj


def test_verify_passes_on_toy_optimum(toy_solution, tmp_path):
    sc, sched, tr, adj = toy_solution
    report = verify_solution(sc, tr, adj, schedule=sched)
    assert report.passed
    assert not report.experimental
    names = [c.name for c in report.checks]
    assert names == ["structure", "no_singular", "shadow_price", "pmp",
                     "invariance"]
    # serialization round-trip
    path = tmp_path / "verify.json"
    report.to_json(path)
    data = json.loads(path.read_text())
    assert data["passed"] is True
    assert len(data["checks"]) == 5
    summary = report.summary()
    assert summary.endswith("overall: PASS")


def test_structure_detects_midweek_activation():
    sc = preset("cities3")
    N = round(sc.T / 0.01)
    u = np.zeros((N + 1, sc.K))
    u[300:500, 0] = 0.001   # switches on at t = 3, off at t = 5: not bang-bang
    tr = simulate(sc, GridControl(u), 0.01)
    res = check_structure(tr, None, sc)
    assert not res.passed
    assert res.offending is not None
    j, t_bad = res.offending
    assert j == 0 and abs(t_bad - 3.0) < 0.011


def test_structure_accepts_week_start_activation(toy_solution):
    sc, sched, tr, adj = toy_solution
    assert check_structure(tr, sched, sc).passed


def test_shadow_price_skips_without_infection():
    sc = preset("cities3")
    import dataclasses
    from epictrl import InitialCondition
    sc0 = dataclasses.replace(
        sc, init=InitialCondition(s0=sc.init.s0, x0=np.zeros((sc.d, sc.K))))
    tr = simulate(sc0, BangSchedule.never(sc.K, sc.n_weeks), 0.01)
    adj, _ = full_adjoint(sc0, tr)
    res = check_shadow_price(adj, tr, sc0)
    assert res.skipped
    assert res.passed  # skipped checks do not fail the report


def test_pmp_flags_increasing_lambda(toy_solution):
    sc, sched, tr, adj = toy_solution
    assert check_pmp(adj, tr, sc).passed
    bad = copy.deepcopy(adj)
    bad.lam = bad.lam + np.linspace(0.0, 1.0, len(bad.lam))  # made increasing
    res = check_pmp(bad, tr, sc)
    assert not res.passed
    assert not res.details["lambda_profile_ok"]


def test_invariance_flags_drift(toy_solution):
    sc, sched, tr, adj = toy_solution
    assert check_invariance(tr, sc).passed
    bad = copy.deepcopy(tr)
    # a time-varying offset breaks conservation without touching s, x
    bad.V = bad.V + np.linspace(0.0, 1e-6, len(bad.V))
    res = check_invariance(bad, sc)
    assert not res.passed
    assert res.details["drift"] > 1e-9


def test_tolerances_recorded(toy_solution):
    sc, sched, tr, adj = toy_solution
    report = verify_solution(sc, tr, adj, schedule=sched)
    assert report.tolerances["quorum"] == 0.99
    assert report.tolerances["min_len"] == 0.5
    assert isinstance(report.tolerances["binding_weeks"], list)
