from .engine import (
    NON_DESCENT,
    STATIONARITY_TOL,
    solve_composite,
    solve_smooth,
    stationarity_error_smooth,
)
from .linesearch import (
    StepsizeRule,
    armijo_composite,
    armijo_smooth,
    exact_linesearch_composite,
    exact_linesearch_smooth,
)
from .problem import CompositeProblem, SmoothProblem, inner
from .rules import (
    ApproximationRule,
    builtin_rules,
    conditional_gradient,
    dc_linearize,
    gradient_projection,
    jacobi,
    proximal_gradient,
)
from .trace import IterateTrace, IterRecord

__all__ = [
    "ApproximationRule", "CompositeProblem", "IterRecord", "IterateTrace", "NON_DESCENT",
    "STATIONARITY_TOL", "SmoothProblem", "StepsizeRule", "armijo_composite", "armijo_smooth",
    "builtin_rules", "conditional_gradient", "dc_linearize", "exact_linesearch_composite",
    "exact_linesearch_smooth", "gradient_projection", "inner", "jacobi", "proximal_gradient",
    "solve_composite", "solve_smooth", "stationarity_error_smooth",
]
