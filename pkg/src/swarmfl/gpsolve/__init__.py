"""Geometric-programming algebra, condensation, convex solver, and the
data offloading/processing optimizer built on them."""

from .algebra import Monomial, Posynomial, as_posynomial, condense, const, variable
from .program import GpProgram
from .convex import ConvexGp, GpSolution, solve_convex, solve_gp, to_convex
from .offload import (
    OffloadPlan,
    OffloadProblem,
    algorithm1_solve,
    assemble_problem,
    baseline_greedy_offload,
    baseline_max_processed,
    initial_feasible_plan,
)

__all__ = [
    "Monomial",
    "Posynomial",
    "as_posynomial",
    "condense",
    "const",
    "variable",
    "GpProgram",
    "ConvexGp",
    "GpSolution",
    "solve_convex",
    "solve_gp",
    "to_convex",
    "OffloadPlan",
    "OffloadProblem",
    "algorithm1_solve",
    "assemble_problem",
    "baseline_greedy_offload",
    "baseline_max_processed",
    "initial_feasible_plan",
]
