"""Energy-efficiency optimization for cloud RANs with capacity-limited fronthaul.

Modules:
    scenario     network geometry, power model parameters, channel draws
    model        feasibility checking, rate/power/EE evaluation
    conic        SOCP builder and solver adapter (Clarabel backend)
    dbrb         global branch-reduce-and-bound solver
    sca_penalty  successive convex approximation, penalized binary relaxation
    sca_l0       successive convex approximation, smoothed l0 sparsity
    oracle       exhaustive reference solvers for tiny instances
    bench_cli    experiment runner and command-line interface
"""

from .scenario import (
    ChannelMatrix,
    ConfigError,
    PowerParams,
    Scenario,
    generate_channels,
    generate_network,
)
from .model import (
    Beamformers,
    FeasibilityReport,
    InfeasibleError,
    Solution,
    achieved_rates,
    check_feasibility,
    evaluate_ee,
    sinr,
    total_power,
)

__all__ = [
    "Beamformers",
    "ChannelMatrix",
    "ConfigError",
    "FeasibilityReport",
    "InfeasibleError",
    "PowerParams",
    "Scenario",
    "Solution",
    "achieved_rates",
    "check_feasibility",
    "evaluate_ee",
    "generate_channels",
    "generate_network",
    "sinr",
    "total_power",
]

__version__ = "0.1.0"
