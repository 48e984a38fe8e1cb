"""Stepsize rules: exact minimization along the update direction and
successive (Armijo) backtracking, for smooth and composite objectives."""

from dataclasses import dataclass
import logging
import math
from typing import Callable, Optional

from ..exceptions import LineSearchStalled, NotDescentDirection
from ..numerics import BISECT_TOL, Interval, bisect_root
from .problem import inner

log = logging.getLogger(__name__)

ARMIJO_ALPHA = 0.25
ARMIJO_BETA = 0.5
ARMIJO_MAX_M = 60


@dataclass(frozen=True)
class StepsizeRule:
    """How the engine picks ``gamma^t``.

    kind is one of ``exact``, ``closed_form``, ``armijo``, ``constant``
    or ``decreasing``. ``closed_form`` calls ``hook(problem, x, Bx)``.
    The decreasing rule starts at ``gamma`` and follows
    ``gamma <- gamma * (1 - d * gamma)``.
    """

    kind: str
    alpha: float = ARMIJO_ALPHA
    beta: float = ARMIJO_BETA
    gamma: float = 1.0
    d: float = 0.0
    hook: Optional[Callable] = None
    max_m: int = ARMIJO_MAX_M
    tol: float = BISECT_TOL

    def __post_init__(self):
        if self.kind not in ("exact", "closed_form", "armijo", "constant", "decreasing"):
            raise ValueError(f"unknown stepsize rule {self.kind!r}")
        if self.kind == "armijo" and not (0 < self.alpha < 1 and 0 < self.beta < 1):
            raise ValueError("Armijo parameters must lie in (0, 1)")
        if self.kind in ("constant", "decreasing") and not (0 < self.gamma <= 1):
            raise ValueError("stepsize must lie in (0, 1]")
        if self.kind == "closed_form" and self.hook is None:
            raise ValueError("closed_form stepsize needs a hook")

    @classmethod
    def exact(cls, tol=BISECT_TOL):
        return cls("exact", tol=tol)

    @classmethod
    def closed_form(cls, hook):
        return cls("closed_form", hook=hook)

    @classmethod
    def armijo(cls, alpha=ARMIJO_ALPHA, beta=ARMIJO_BETA, max_m=ARMIJO_MAX_M):
        return cls("armijo", alpha=alpha, beta=beta, max_m=max_m)

    @classmethod
    def constant(cls, gamma):
        return cls("constant", gamma=gamma)

    @classmethod
    def decreasing(cls, gamma0, d):
        return cls("decreasing", gamma=gamma0, d=d)


def next_decreasing(gamma, d):
    return gamma * (1.0 - d * gamma)


def _backtrack(f, x, d, fx, slope, dg, alpha, beta, max_m):
    # sufficient decrease f(x + b^m d) - f(x) <= b^m (alpha*slope + (alpha-1)*dg);
    # dg = 0 gives the smooth Armijo test with identical arithmetic
    rhs_unit = alpha * slope + (alpha - 1.0) * dg
    step = 1.0
    for _ in range(max_m + 1):
        if f(x + step * d) - fx <= step * rhs_unit:
            return step
        step *= beta
    raise LineSearchStalled(f"no sufficient decrease after {max_m} backtracks")


def armijo_smooth(p, x, d, alpha=ARMIJO_ALPHA, beta=ARMIJO_BETA, max_m=ARMIJO_MAX_M,
                  fx=None, slope=None):
    """Largest ``beta**m`` passing the Armijo test along ``d``."""
    if slope is None:
        slope = inner(p.grad(x), d)
    if not slope < 0:
        raise NotDescentDirection(f"directional derivative {slope:.3e} is not negative")
    if fx is None:
        fx = p.f(x)
    return _backtrack(p.f, x, d, fx, slope, 0.0, alpha, beta, max_m)


def armijo_composite(p, x, Bx, alpha=ARMIJO_ALPHA, beta=ARMIJO_BETA, max_m=ARMIJO_MAX_M,
                     fx=None, slope=None, dg=None):
    """Backtracking for ``f + g`` that only evaluates the smooth part ``f``.

    The nonsmooth part enters through ``g(Bx) - g(x)`` alone.
    """
    d = Bx - x
    if slope is None:
        slope = inner(p.grad(x), d)
    if dg is None:
        dg = p.g(Bx) - p.g(x)
    if not slope + dg < 0:
        raise NotDescentDirection("Bx - x is not a descent direction for f + g")
    if fx is None:
        fx = p.f(x)
    return _backtrack(p.f, x, d, fx, slope, dg, alpha, beta, max_m)


def _exact_on_line(dphi, slope0, tol):
    if not slope0 < 0:
        raise NotDescentDirection(f"directional derivative {slope0:.3e} is not negative")
    if dphi(1.0) <= 0:
        return 1.0
    return bisect_root(dphi, Interval(0.0, 1.0), tol=tol)


def exact_linesearch_smooth(p, x, d, tol=BISECT_TOL, alpha=ARMIJO_ALPHA, beta=ARMIJO_BETA):
    """Minimize ``f(x + gamma*d)`` over ``[0, 1]``.

    Uses bisection on the directional derivative when ``p.convex``;
    otherwise degrades to Armijo backtracking.
    """
    slope = inner(p.grad(x), d)
    if not p.convex:
        if not slope < 0:
            raise NotDescentDirection(f"directional derivative {slope:.3e} is not negative")
        log.info("exact line search on nonconvex objective; using Armijo instead")
        return armijo_smooth(p, x, d, alpha, beta, slope=slope)
    return _exact_on_line(lambda gm: inner(p.grad(x + gm * d), d), slope, tol)


def exact_linesearch_composite(p, x, Bx, tol=BISECT_TOL, alpha=ARMIJO_ALPHA, beta=ARMIJO_BETA):
    """Minimize ``f(x + gamma*d) + gamma*(g(Bx) - g(x))`` over ``[0, 1]``.

    The objective is differentiable in ``gamma`` even though ``g`` is not.
    """
    d = Bx - x
    dg = p.g(Bx) - p.g(x)
    slope = inner(p.grad(x), d)
    if not p.convex:
        log.info("exact line search on nonconvex objective; using Armijo instead")
        return armijo_composite(p, x, Bx, alpha, beta, slope=slope, dg=dg)
    return _exact_on_line(lambda gm: inner(p.grad(x + gm * d), d) + dg, slope + dg, tol)


def clamp_unit(v):
    if math.isnan(v):
        raise ValueError("stepsize is NaN")
    return min(max(v, 0.0), 1.0)
