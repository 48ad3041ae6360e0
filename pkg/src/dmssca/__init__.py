"""Decentralized momentum-based stochastic SCA over graphs."""

from .diagnostics import AggregatedTrace, IterationTrace, aggregate_runs, pathwise_monitor, measure
from .engine import (
    HyperParams,
    MonitorError,
    NetworkState,
    RunOutput,
    SelectedOutput,
    StepsizeReport,
    baseline_step,
    check_stepsize_conditions,
    corollary_schedule,
    initialize,
    run,
    step,
)
from .graphs import (
    Graph,
    MixingMatrix,
    build_graph,
    build_mixing_matrix,
    consensus_contract_check,
    load_edge_list,
    spectral_gap,
)
from .problems import (
    BoxSet,
    L1Regularizer,
    ProblemInstance,
    UnboundedSet,
    ZeroRegularizer,
    brute_force_minimize,
    global_objective,
    make_lasso_problem,
    make_piecewise_cubic_problem,
    make_quadratic_consensus_problem,
)
from .subproblem import (
    SubproblemInputs,
    SurrogateSpec,
    SubproblemSolution,
    solve_subproblem_closed_form,
    solve_subproblem_iterative,
    stationarity_residual,
)

__version__ = "0.1.0"
