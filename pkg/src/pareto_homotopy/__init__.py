"""Homotopy continuation for constrained multiobjective optimization, with
scalarization and evolutionary baselines."""

from .homotopy import (
    Anchor,
    AnchorError,
    HomotopyDomainError,
    HomotopyState,
    Layout,
    NoStartSolutionError,
    StartSystemError,
    assemble_homotopy,
    homotopy_jacobian,
    init_anchor,
    kkt_residual,
    solve_t1_system,
)
from .nlp import NlpResult, NlpSpec, ProblemEvaluator, minimize_constrained, project_to_feasible
from .nsga2 import GaConfig, Individual, crowding_distance, evolve, fast_nondominated_sort, nsga2_solve
from .problems import (
    EvalCounters,
    FeasibilityReport,
    ProblemDefinition,
    ScalarFunction,
    evaluate_constraints,
    evaluate_objectives,
    feasibility_report,
    get_problem,
    hessians,
    jacobians,
    list_problems,
)
from .results import AllRunsFailedError, FrontEntry, FrontSet, SolveReport
from .sampling import (
    MetricsRow,
    PointCloud,
    grid_feasibility_scan,
    metrics_report,
    nondominance_filter,
    projected_cloud,
    uniform_feasibility_scan,
)
from .scalarization import (
    EpsilonGrid,
    WeightGrid,
    epsilon_constraint_front,
    epsilon_constraint_solve,
    global_criterion_solve,
    ideal_point,
    lexicographic_solve,
    weighted_sum_front,
    weighted_sum_solve,
)
from .tracker import (
    PathTrace,
    StepRecord,
    TrackerConfig,
    adapt_step,
    correct,
    homotopy_solve,
    pareto_front_homotopy,
    predict,
    tangent,
    trace,
)

__version__ = "0.1.0"

__all__ = [
    "Anchor",
    "AnchorError",
    "HomotopyDomainError",
    "HomotopyState",
    "Layout",
    "NoStartSolutionError",
    "StartSystemError",
    "assemble_homotopy",
    "homotopy_jacobian",
    "init_anchor",
    "kkt_residual",
    "solve_t1_system",
    "NlpResult",
    "NlpSpec",
    "ProblemEvaluator",
    "minimize_constrained",
    "project_to_feasible",
    "GaConfig",
    "Individual",
    "crowding_distance",
    "evolve",
    "fast_nondominated_sort",
    "nsga2_solve",
    "EvalCounters",
    "FeasibilityReport",
    "ProblemDefinition",
    "ScalarFunction",
    "evaluate_constraints",
    "evaluate_objectives",
    "feasibility_report",
    "get_problem",
    "hessians",
    "jacobians",
    "list_problems",
    "AllRunsFailedError",
    "FrontEntry",
    "FrontSet",
    "SolveReport",
    "MetricsRow",
    "PointCloud",
    "grid_feasibility_scan",
    "metrics_report",
    "nondominance_filter",
    "projected_cloud",
    "uniform_feasibility_scan",
    "EpsilonGrid",
    "WeightGrid",
    "epsilon_constraint_front",
    "epsilon_constraint_solve",
    "global_criterion_solve",
    "ideal_point",
    "lexicographic_solve",
    "weighted_sum_front",
    "weighted_sum_solve",
    "PathTrace",
    "StepRecord",
    "TrackerConfig",
    "adapt_step",
    "correct",
    "homotopy_solve",
    "pareto_front_homotopy",
    "predict",
    "tangent",
    "trace",
]
