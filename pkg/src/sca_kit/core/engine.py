"""The iteration ``x <- x + gamma (Bx - x)`` for smooth and composite problems."""

import logging
import math
import time

import numpy as np

from ..exceptions import NumericalBreakdown, SubproblemInfeasible
from .linesearch import (
    armijo_composite,
    armijo_smooth,
    clamp_unit,
    exact_linesearch_composite,
    exact_linesearch_smooth,
    next_decreasing,
)
from .problem import CompositeProblem, inner
from .trace import IterateTrace

log = logging.getLogger(__name__)

STATIONARITY_TOL = 1e-6
DIVERGENCE_GUARD = 1e12
NON_DESCENT = "non-descent direction"


def stationarity_error_smooth(p, x, Bx):
    """``-<grad f(x), Bx - x>``: nonnegative for a minimizing ``Bx``, zero
    exactly at stationary points."""
    return -inner(p.grad(x), Bx - x)


def _best_response(rule, p, x):
    Bx = rule(p, x)
    if Bx is None:
        raise SubproblemInfeasible(f"rule {rule.name} returned no point")
    Bx = np.asarray(Bx)
    if Bx.shape != x.shape:
        Bx = Bx.reshape(x.shape)
    if not np.all(np.isfinite(Bx)):
        raise SubproblemInfeasible(f"rule {rule.name} returned non-finite values")
    if float(np.max(np.abs(Bx), initial=0.0)) > DIVERGENCE_GUARD:
        raise NumericalBreakdown("best response exceeds the divergence guard")
    return Bx


def _is_nondescent(slope, d, x):
    scale = 1.0 + float(np.max(np.abs(x), initial=0.0))
    return slope >= 0 and float(np.max(np.abs(d), initial=0.0)) > 1e-8 * scale


def _run(p, rule, step, tol, max_iter, x0, composite, callback):
    x = p.start() if x0 is None else np.array(x0, copy=True)
    trace = IterateTrace()
    gamma_dec = step.gamma
    t0 = time.perf_counter()
    fx = p.f(x)
    for t in range(max_iter + 1):
        Fx = fx + p.g(x) if composite else fx
        if not math.isfinite(Fx):
            raise NumericalBreakdown(f"objective is {Fx} at iteration {t}")
        Bx = _best_response(rule, p, x)
        d = Bx - x
        slope = inner(p.grad(x), d)
        dg = p.g(Bx) - p.g(x) if composite else 0.0
        err = -(slope + dg)
        nondescent = _is_nondescent(slope + dg, d, x)
        if nondescent:
            trace.flag(t, NON_DESCENT)
            log.warning("iteration %d: Bx - x is not a descent direction", t)
        if err <= tol or t == max_iter:
            trace.append(t, Fx, math.nan, err, time.perf_counter() - t0)
            if err <= tol:
                trace.reason = NON_DESCENT if nondescent else "converged"
            else:
                trace.reason = "max_iter"
            break

        kind = step.kind
        if kind == "armijo" and rule.is_upper_bound:
            gamma = 1.0
        elif kind == "armijo":
            if composite:
                gamma = armijo_composite(p, x, Bx, step.alpha, step.beta, step.max_m, fx=fx, slope=slope, dg=dg)
            else:
                gamma = armijo_smooth(p, x, d, step.alpha, step.beta, step.max_m, fx=fx, slope=slope)
        elif kind == "exact":
            if composite:
                gamma = exact_linesearch_composite(p, x, Bx, step.tol, step.alpha, step.beta)
            else:
                gamma = exact_linesearch_smooth(p, x, d, step.tol, step.alpha, step.beta)
        elif kind == "closed_form":
            gamma = clamp_unit(float(step.hook(p, x, Bx)))
        elif kind == "constant":
            gamma = step.gamma
        else:
            gamma = gamma_dec
            gamma_dec = next_decreasing(gamma_dec, step.d)

        trace.append(t, Fx, gamma, err, time.perf_counter() - t0)
        x = x + gamma * d
        fx = p.f(x)
        if callback is not None:
            callback(t, x)
    return x, trace


def solve_smooth(p, rule, step, tol=STATIONARITY_TOL, max_iter=1000, x0=None, callback=None):
    """Minimize a smooth problem by successive approximation.

    Parameters
    ----------
    p : SmoothProblem
    rule : ApproximationRule
    step : StepsizeRule
    tol : float
        Stop once ``-<grad f(x), Bx - x> <= tol``.
    max_iter : int
        Maximum number of updates.
    x0 : ndarray, optional
        Feasible start; defaults to ``p.start()``.

    Returns
    -------
    x : ndarray
    trace : IterateTrace
    """
    if isinstance(p, CompositeProblem):
        raise TypeError("use solve_composite for composite problems")
    return _run(p, rule, step, tol, max_iter, x0, False, callback)


def solve_composite(p, rule, step, tol=STATIONARITY_TOL, max_iter=1000, x0=None, callback=None):
    """Minimize ``f + g`` by successive approximation.

    ``rule`` must minimize the surrogate of ``f`` plus ``g`` itself. The
    auxiliary epigraph variable is always reset to ``g(x^{t+1})``, so the
    trace records ``f + g`` directly.
    """
    if not isinstance(p, CompositeProblem):
        raise TypeError("solve_composite expects a CompositeProblem")
    return _run(p, rule, step, tol, max_iter, x0, True, callback)
