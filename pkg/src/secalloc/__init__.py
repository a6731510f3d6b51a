"""Security resource allocation over bipartite networks with behavioral planners."""

from .admm import AdmmConfig, run_admm
from .centralized import SolverConfig, kkt_residual, project_feasible, solve_op_a, solve_op_b
from .model import (
    AllocationPlan,
    AttackProbabilityModel,
    BehavioralModel,
    SolveReport,
    SourceSpec,
    TargetSpec,
    TraceRecord,
    TransportNetwork,
    attack_probability,
    marginal_perceived_cost,
    perceived_loss,
    prelec_weight,
    true_loss,
)
from .scenario_io import (
    ScenarioFile,
    SweepResult,
    SweepSample,
    build_case_study,
    parse_scenario,
    write_scenario,
    write_sweep_csv,
    write_trace_csv,
)
from .waterfill import (
    ThresholdTable,
    WaterfillTrace,
    active_target_count,
    build_threshold_table,
    gamma_sensitivity,
    threshold,
    waterfill_allocate,
)

__all__ = [
    "AdmmConfig",
    "AllocationPlan",
    "AttackProbabilityModel",
    "BehavioralModel",
    "ScenarioFile",
    "SolveReport",
    "SolverConfig",
    "SourceSpec",
    "SweepResult",
    "SweepSample",
    "TargetSpec",
    "ThresholdTable",
    "TraceRecord",
    "TransportNetwork",
    "WaterfillTrace",
    "active_target_count",
    "attack_probability",
    "build_case_study",
    "build_threshold_table",
    "gamma_sensitivity",
    "kkt_residual",
    "marginal_perceived_cost",
    "parse_scenario",
    "perceived_loss",
    "prelec_weight",
    "project_feasible",
    "run_admm",
    "solve_op_a",
    "solve_op_b",
    "threshold",
    "true_loss",
    "waterfill_allocate",
    "write_scenario",
    "write_sweep_csv",
    "write_trace_csv",
]

__version__ = "0.1.0"
