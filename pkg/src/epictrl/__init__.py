"""Optimal vaccination scheduling for commuter-coupled metapopulation epidemics.

Forward simulation of the constrained controlled dynamics, switch-time and
forward-backward sweep optimization, adjoint/multiplier reconstruction, and
numerical verification of the bang-bang structure of optimal policies.
"""

from .model import (
    InitialCondition,
    PRESET_NAMES,
    Scenario,
    ScenarioError,
    ShipmentSchedule,
    ValidationReport,
    build_sir_commuter,
    commuter_coupling,
    load_scenario,
    migration_from_flows,
    preset,
    save_scenario,
    scenario_from_dict,
    scenario_to_dict,
    shipment_cumulative,
    shipment_smoothed,
    validate_assumptions,
)
from .forward import (
    BangSchedule,
    Event,
    GridControl,
    SimulationError,
    StateTrajectory,
    cost_linear,
    cost_quadratic,
    events_to_json,
    running_health_cost,
    simulate,
    trajectory_to_csv,
)
from .adjoint import (
    AdjointTrajectory,
    adjoint_to_csv,
    binding_weeks,
    compute_switching_functions,
    estimate_lambda,
    full_adjoint,
    integrate_adjoint,
    reconstruct_multipliers,
    switching_function,
)
from .optimize import (
    OptResult,
    OptimizeError,
    OptimizeOptions,
    brute_force_switch_grid,
    calibrate_cq,
    compare_costs,
    fbsm_grid,
    objective,
    optimize_quadratic,
    optimize_switch_times,
)
from .verify import (
    CheckResult,
    VerificationReport,
    check_invariance,
    check_no_singular,
    check_pmp,
    check_shadow_price,
    check_structure,
    verify_solution,
)

__version__ = "0.1.0"

__all__ = [
    "AdjointTrajectory", "BangSchedule", "CheckResult", "Event", "GridControl",
    "InitialCondition", "OptResult", "OptimizeError", "OptimizeOptions",
    "PRESET_NAMES", "Scenario", "ScenarioError", "ShipmentSchedule",
    "SimulationError", "StateTrajectory", "ValidationReport",
    "VerificationReport", "adjoint_to_csv", "binding_weeks",
    "brute_force_switch_grid", "build_sir_commuter", "calibrate_cq",
    "check_invariance", "check_no_singular", "check_pmp", "check_shadow_price",
    "check_structure", "commuter_coupling", "compare_costs",
    "compute_switching_functions", "cost_linear", "cost_quadratic",
    "estimate_lambda", "events_to_json", "fbsm_grid", "full_adjoint",
    "integrate_adjoint", "load_scenario", "migration_from_flows", "objective",
    "optimize_quadratic", "optimize_switch_times", "preset",
    "reconstruct_multipliers", "running_health_cost", "save_scenario",
    "scenario_from_dict", "scenario_to_dict", "shipment_cumulative",
    "shipment_smoothed", "simulate", "switching_function", "trajectory_to_csv",
    "validate_assumptions", "verify_solution",
]
