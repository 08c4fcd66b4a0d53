"""Branch-and-bound MILP framework with a reinforcement-learned branching
agent, histogram value targets, and oracle-checked verification suites."""

__version__ = "0.1.0"

from .milp import (
    Assignment,
    BoundChange,
    MilpInstance,
    apply_bound_change,
    make_instance,
    parse_instance,
    serialize_instance,
    validate,
)
from .simplex import LpResult, is_integral, solve_relaxation

__all__ = [
    "Assignment",
    "BoundChange",
    "LpResult",
    "MilpInstance",
    "apply_bound_change",
    "is_integral",
    "make_instance",
    "parse_instance",
    "serialize_instance",
    "solve_relaxation",
    "validate",
]
