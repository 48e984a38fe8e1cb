"""Approximation rules: maps from the current iterate to ``Bx``, the
minimizer of a surrogate built around it."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional
import warnings

import numpy as np
from scipy.optimize import minimize

from .problem import CompositeProblem, inner


@dataclass
class ApproximationRule:
    """A best-response map ``(problem, x) -> Bx``.

    ``is_upper_bound`` marks surrogates that majorize ``f`` and are tight
    at the current point, which makes the unit stepsize safe.
    ``surrogate(problem, y, x)``, when given, evaluates the surrogate at
    ``y`` built around ``x``.
    """

    name: str
    best_response: Callable
    is_upper_bound: bool = False
    block_parallel: bool = False
    surrogate: Optional[Callable] = None

    def __call__(self, problem, x):
        return self.best_response(problem, x)


def _smooth(problem):
    return problem.smooth if isinstance(problem, CompositeProblem) else problem


def conditional_gradient():
    """Linearize ``f`` at ``x^t`` and minimize over the feasible set."""

    def br(problem, x):
        return _smooth(problem).linear_minimizer(problem.grad(x), x)

    def sur(problem, y, x):
        return inner(problem.grad(x), y - x)

    return ApproximationRule("conditional_gradient", br, surrogate=sur)


def gradient_projection(s=1.0, scaling=None):
    """``Bx = [x - s grad f(x)]_X``.

    ``scaling`` is an optional positive vector ``h`` replacing the
    quadratic term by ``sum h_i (y_i - x_i)^2 / (2s)``; it is only
    supported on boxes, where the scaled projection stays elementwise.
    """
    if s <= 0:
        raise ValueError("gradient projection step must be positive")
    h = None if scaling is None else np.asarray(scaling, dtype=float)
    if h is not None and np.any(h <= 0):
        raise ValueError("scaling must be positive")

    def br(problem, x):
        sp = _smooth(problem)
        g = problem.grad(x)
        if h is None:
            return sp.projection(x - s * g)
        if not sp.is_box:
            raise ValueError("scaled gradient projection needs a box feasible set")
        return sp.projection(x - s * g / h)

    def sur(problem, y, x):
        w = 1.0 if h is None else h
        return inner(problem.grad(x), y - x) + float(np.sum(w * np.abs(y - x) ** 2)) / (2 * s)

    return ApproximationRule(f"gradient_projection(s={s})", br, surrogate=sur)


def proximal_gradient(s=1.0, L=None):
    """``Bx = prox_{s g}(x - s grad f(x))``, used with a unit stepsize when
    ``s <= 1/L``. On a problem without a prox (``g = 0``) it coincides
    with gradient projection."""
    if s <= 0:
        raise ValueError("proximal step must be positive")
    upper = L is not None and s <= 1.0 / L
    if L is not None and not upper:
        warnings.warn("upper-bound property not guaranteed: s > 1/L", stacklevel=2)

    def br(problem, x):
        v = x - s * problem.grad(x)
        if isinstance(problem, CompositeProblem) and problem.prox is not None:
            return problem.prox(v, s)
        return _smooth(problem).projection(v)

    def sur(problem, y, x):
        return problem.f(x) + inner(problem.grad(x), y - x) + float(np.sum(np.abs(y - x) ** 2)) / (2 * s)

    return ApproximationRule(f"proximal_gradient(s={s})", br, is_upper_bound=upper, surrogate=sur)


def _block_bounds(sp, idx):
    if not sp.is_box:
        raise ValueError("the default Jacobi block solver needs a box feasible set")
    lo = sp.lower.reshape(-1)[idx]
    hi = sp.upper.reshape(-1)[idx]
    return [(None if np.isinf(a) else a, None if np.isinf(b) else b) for a, b in zip(lo, hi)]


def _default_block_solver(tau):
    def solve(problem, x, idx):
        sp = _smooth(problem)
        flat = x.reshape(-1)
        xk = flat[idx].copy()

        def fun(z):
            y = flat.copy()
            y[idx] = z
            y = y.reshape(x.shape)
            val = sp.f(y) + 0.5 * tau * float(np.sum((z - xk) ** 2))
            grad = sp.grad(y).reshape(-1)[idx] + tau * (z - xk)
            return val, grad

        res = minimize(fun, xk, jac=True, method="L-BFGS-B", bounds=_block_bounds(sp, idx),
                       options={"ftol": 1e-16, "gtol": 1e-13, "maxiter": 1000})
        return res.x

    return solve


def jacobi(tau=0.0, blocks=None, block_solver=None, workers=1):
    """Simultaneous per-block best responses against the frozen iterate.

    Block ``k`` minimizes ``f(x_k, x_{-k}^t) + tau/2 ||x_k - x_k^t||^2``
    over its own constraint set. ``blocks`` lists index arrays into the
    flattened variable (default: one block per coordinate).
    ``block_solver(problem, x, idx)`` returns new values for ``x[idx]``.
    With ``workers > 1`` the blocks are solved on a thread pool; each
    block reads the frozen ``x^t`` and writes a disjoint slice of ``Bx``.
    """
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    solver = block_solver or _default_block_solver(tau)

    def br(problem, x):
        bl = blocks if blocks is not None else [np.array([i]) for i in range(x.size)]
        frozen = x.copy()
        out = frozen.reshape(-1).copy()
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                parts = list(pool.map(lambda idx: solver(problem, frozen, idx), bl))
        else:
            parts = [solver(problem, frozen, idx) for idx in bl]
        for idx, val in zip(bl, parts):
            out[idx] = val
        return out.reshape(x.shape)

    def sur(problem, y, x):
        bl = blocks if blocks is not None else [np.array([i]) for i in range(x.size)]
        total = 0.0
        for idx in bl:
            z = x.reshape(-1).copy()
            z[idx] = y.reshape(-1)[idx]
            total += problem.f(z.reshape(x.shape)) + 0.5 * tau * float(np.sum((y.reshape(-1)[idx] - x.reshape(-1)[idx]) ** 2))
        return total

    return ApproximationRule(f"jacobi(tau={tau})", br, block_parallel=True, surrogate=sur)


def dc_linearize(f1, grad_f1, grad_f2, f2=None, argmin=None):
    """Difference-of-convex surrogate ``f1(y) - f2(x) - <grad f2(x), y - x>``.

    The surrogate majorizes ``f = f1 - f2`` so the unit step is valid.
    ``argmin(c)`` solves ``min_{y in X} f1(y) - <c, y>``; by default a
    bounded L-BFGS-B solve is used on box sets.
    """

    def br(problem, x):
        c = grad_f2(x)
        if argmin is not None:
            return argmin(c)
        sp = _smooth(problem)
        res = minimize(lambda y: (f1(y) - inner(c, y), grad_f1(y) - c), x.reshape(-1), jac=True,
                       method="L-BFGS-B", bounds=_block_bounds(sp, np.arange(x.size)),
                       options={"ftol": 1e-16, "gtol": 1e-13, "maxiter": 1000})
        return res.x.reshape(x.shape)

    def sur(problem, y, x):
        base = f2(x) if f2 is not None else 0.0
        return f1(y) - base - inner(grad_f2(x), y - x)

    return ApproximationRule("dc_linearize", br, is_upper_bound=True, surrogate=sur)


def builtin_rules():
    """Constructors of the built-in approximation rules, by name."""
    return {
        "conditional_gradient": conditional_gradient,
        "gradient_projection": gradient_projection,
        "proximal_gradient": proximal_gradient,
        "jacobi": jacobi,
        "dc_linearize": dc_linearize,
    }
