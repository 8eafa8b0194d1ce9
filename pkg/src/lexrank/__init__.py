"""Lexicographic optimization over totally ordered rulebooks.

The core idea: a rulebook ``r_0 > r_1 > ... > r_{N-1}`` is scalarized as
``sum_i lambda^(N-i) r_i``; growing ``lambda`` makes the scalar order agree
with the lexicographic one, and continuation over ``lambda`` drives gradient
descent towards minimum-rank decisions.
"""

from .core import EPS_RANK, Ordering, Rule, Rulebook, RulebookError, lex_compare, rank, violations
from .scalarization import LambdaSchedule, utility, utility_gradient, utility_normalized
from .solvers import SolverConfig, central_path_solve, grid_oracle, preemptive_solve, timescale_solve

__all__ = [
    "EPS_RANK",
    "LambdaSchedule",
    "Ordering",
    "Rule",
    "Rulebook",
    "RulebookError",
    "SolverConfig",
    "central_path_solve",
    "grid_oracle",
    "lex_compare",
    "preemptive_solve",
    "rank",
    "timescale_solve",
    "utility",
    "utility_gradient",
    "utility_normalized",
    "violations",
]
