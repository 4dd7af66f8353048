import time
from types import SimpleNamespace

import pytest

from epictrl import (OptimizeOptions, ShipmentSchedule, build_sir_commuter,
                     full_adjoint, optimize_switch_times, preset, simulate)

H = 0.01

# optimizer settings per preset; cities8 has 24 switch variables and needs a
# larger per-start evaluation budget
PRESET_OPTS = {
    "cities3": dict(starts=4, max_iters=400),
    "cities5": dict(starts=4, max_iters=400),
    "cities8": dict(starts=4, max_iters=600),
}


def make_toy():
    """Single-city, single-week scenario with an interior optimal switch."""
    return build_sir_commuter(
        beta=[0.5], gamma=1 / 7, alpha=1.0, M=[[1.0]], n=[1.0],
        s0=[0.9], i0=[0.05], v_max=[0.06],
        shipments=ShipmentSchedule([1.0]), c_v=8.0, c_h=100.0, T=7.0)


@pytest.fixture(scope="session")
def toy_scenario():
    return make_toy()


@pytest.fixture(scope="session")
def preset_optimum():
    """Factory computing (and caching) the optimized solution of a preset:
    scenario, optimizer result, trajectory, adjoint with multipliers, and the
    wall-clock time of the optimization itself."""
    cache = {}

    def get(name):
        if name not in cache:
            sc = preset(name)
            t0 = time.time()
            res = optimize_switch_times(
                sc, OptimizeOptions(h=H, seed=1, **PRESET_OPTS[name]))
            elapsed = time.time() - t0
            tr = simulate(sc, res.control, H)
            adj, info = full_adjoint(sc, tr)
            cache[name] = SimpleNamespace(
                scenario=sc, result=res, trajectory=tr, adjoint=adj,
                lam_info=info, elapsed=elapsed)
        return cache[name]

    return get
