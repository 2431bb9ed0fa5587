"""Entropy-regularized optimal transport on graphs.

Margin-constrained randomized shortest paths: optimal randomized routing
policies between prescribed input and output flow distributions, the
resulting coupling matrix, and the bag-of-paths surprisal distance.
"""

from .distances import (
    CouplingMatrix,
    DistanceMatrix,
    NodeWeights,
    cbop_distance,
    cbop_solution,
    coupling_matrix,
    node_weights,
    surprisal_distance,
)
from .errors import (
    ConvergenceError,
    GraphError,
    InfeasibleError,
    InputError,
    MarginError,
    NumericalError,
    RspError,
)
from .extended import (
    ExtendedGraph,
    MarginSpec,
    build_extended,
    compute_alpha,
    expected_visits_unconstrained,
    mu_lower_bound,
    read_margins,
    weights_from_alpha,
)
from .graph import (
    Graph,
    ValidationReport,
    from_matrices,
    load_graph,
    natural_transitions,
    read_edge_list,
    stationary_distribution,
    validate_structure,
)
from .rsp import (
    FlowField,
    RspSystem,
    build_system,
    edge_flows,
    free_energy,
    optimal_policy,
    path_sum_oracle,
)
from .solver import (
    MarginSolution,
    SolverConfig,
    constraint_residuals,
    dual_value,
    expected_costs_match,
    slackness,
    solve_margins,
    update_lambda_in,
    update_lambda_out,
)

__version__ = "0.1.0"
