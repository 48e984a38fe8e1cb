"""Exception hierarchy shared by the solvers."""


class ScaError(Exception):
    """Base class for all solver errors."""


class NoBracketError(ScaError, ValueError):
    """Bisection endpoints do not bracket a root."""


class InvalidFunctionValue(ScaError, ArithmeticError):
    """A callback returned NaN."""


class NotHermitianError(ScaError, ValueError):
    pass


class NotDescentDirection(ScaError, ValueError):
    """The search direction does not decrease the objective to first order."""


class LineSearchStalled(ScaError, RuntimeError):
    """Backtracking hit its iteration cap without sufficient decrease."""


class SubproblemInfeasible(ScaError, RuntimeError):
    """The approximate subproblem returned no usable point."""


class NumericalBreakdown(ScaError, ArithmeticError):
    """NaN objective or a diverging iterate."""


class DegenerateColumn(ScaError, ValueError):
    """A design matrix column is identically zero."""


class BPNotConverged(ScaError, RuntimeError):
    """The basis pursuit multiplier loop hit its outer cap."""
