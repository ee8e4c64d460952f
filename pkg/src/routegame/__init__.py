"""Atomic routing games: exact solvers and multi-agent Q-learning experiments."""

from .engine import (
    AggregateProfile,
    CompiledGame,
    CostReport,
    ProfileMismatch,
    cost_report,
    edge_loads,
    group_average_costs,
    rosenthal_potential,
    social_cost,
    source_disparity,
    strategy_cost,
    validate_profile,
)
from .network import (
    AffineLatency,
    Edge,
    GroupSpec,
    Network,
    Path,
    as_rational,
    check_network,
    enumerate_paths,
    latency_eval,
    validate_network,
)
from .solvers import (
    EquilibriumResult,
    SolverError,
    best_response_step,
    enumeration_size,
    nash_multistart,
    nash_solve,
    price_of_anarchy,
    social_optimum,
    verify_ne,
    worst_nash,
)

__version__ = "0.1.0"

__all__ = [
    "AffineLatency",
    "AggregateProfile",
    "CompiledGame",
    "CostReport",
    "Edge",
    "EquilibriumResult",
    "GroupSpec",
    "Network",
    "Path",
    "ProfileMismatch",
    "SolverError",
    "as_rational",
    "best_response_step",
    "check_network",
    "cost_report",
    "edge_loads",
    "enumerate_paths",
    "enumeration_size",
    "group_average_costs",
    "latency_eval",
    "nash_multistart",
    "nash_solve",
    "price_of_anarchy",
    "rosenthal_potential",
    "social_cost",
    "social_optimum",
    "source_disparity",
    "strategy_cost",
    "validate_network",
    "validate_profile",
    "verify_ne",
    "worst_nash",
]
