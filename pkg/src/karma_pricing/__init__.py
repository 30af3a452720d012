"""Artificial-currency pricing for repeated weighted two-resource congestion games."""

from .congestion import GameConfig, LatencyModel, SystemOptimum, balanced_split, system_optimum
from .errors import AssumptionViolation, ConfigError, VerificationFailure
from .pricing import PricingPolicy, design_equality, design_equity, equality_bound, solve_theta

__all__ = [
    "AssumptionViolation", "ConfigError", "GameConfig", "LatencyModel", "PricingPolicy",
    "SystemOptimum", "VerificationFailure", "balanced_split", "design_equality",
    "design_equity", "equality_bound", "solve_theta", "system_optimum",
]
__version__ = "0.1.0"
