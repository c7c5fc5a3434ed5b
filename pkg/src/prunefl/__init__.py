"""Joint network pruning and bandwidth allocation for wireless federated learning."""

from .cost import (
    ConstraintViolation,
    ConvergenceConstants,
    CostBreakdown,
    DivergenceError,
    learning_penalty,
    theorem1_bound,
    total_cost,
)
from .policies import Policy, allocate
from .solver import (
    ConvergenceWarning,
    SizeGuardError,
    Solution,
    SolverConfig,
    exhaustive_search,
    fpr_allocation,
    gba_allocation,
    optimize,
    solve_bandwidth,
    solve_t_tilde,
)
from .system import (
    Allocation,
    DomainError,
    InfeasibleError,
    SystemParams,
    UeProfile,
    packet_error_rate,
    round_latency,
    shannon_rate,
    reference_params,
)

__all__ = [
    "Allocation", "ConstraintViolation", "ConvergenceConstants", "ConvergenceWarning", "CostBreakdown",
    "DivergenceError", "DomainError", "InfeasibleError", "Policy", "SizeGuardError", "Solution",
    "SolverConfig", "SystemParams", "UeProfile", "allocate", "exhaustive_search", "fpr_allocation",
    "gba_allocation", "learning_penalty", "optimize", "packet_error_rate", "round_latency",
    "shannon_rate", "solve_bandwidth", "solve_t_tilde", "reference_params", "theorem1_bound", "total_cost",
]
