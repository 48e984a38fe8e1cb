"""Problem descriptions consumed by the iteration engine.

Variables are numpy arrays of any shape; complex arrays are allowed
for real-valued objectives of complex matrices. Gradients follow the
convention ``df = Re <grad, dx>`` with ``<a, b> = sum(conj(a) * b)``.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..numerics import project_box


def inner(a, b):
    """Real inner product ``Re sum(conj(a) * b)``."""
    return float(np.real(np.vdot(a, b)))


@dataclass
class SmoothProblem:
    """Minimize a differentiable ``f`` over a closed convex set.

    The feasible set is either a box (``lower``/``upper``, possibly
    infinite) or is described by a ``project`` hook. ``lmo`` is an
    optional linear minimization oracle ``c -> argmin_{x in X} <c, x>``
    used by the conditional gradient rule.
    """

    f: Callable
    grad: Callable
    shape: tuple
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    project: Optional[Callable] = None
    lmo: Optional[Callable] = None
    convex: bool = False
    x0: Optional[np.ndarray] = None
    dtype: type = float

    def __post_init__(self):
        if isinstance(self.shape, int):
            self.shape = (self.shape,)
        self.shape = tuple(self.shape)
        if self.project is None:
            lo = -np.inf if self.lower is None else self.lower
            hi = np.inf if self.upper is None else self.upper
            self.lower = np.broadcast_to(np.asarray(lo, dtype=float), self.shape).copy()
            self.upper = np.broadcast_to(np.asarray(hi, dtype=float), self.shape).copy()
            if np.any(self.lower > self.upper):
                raise ValueError("lower bound exceeds upper bound")

    @property
    def is_box(self):
        return self.project is None

    @property
    def n(self):
        return int(np.prod(self.shape))

    def projection(self, x):
        if self.project is not None:
            return self.project(x)
        return project_box(x, self.lower, self.upper)

    def linear_minimizer(self, c, x):
        """``argmin_{y in X} <c, y>``; ties keep the current coordinate."""
        if self.lmo is not None:
            return self.lmo(c)
        if not self.is_box:
            raise ValueError("conditional gradient needs an lmo hook for non-box sets")
        if not (np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper))):
            raise ValueError("conditional gradient needs a bounded box")
        return np.where(c > 0, self.lower, np.where(c < 0, self.upper, x))

    def start(self):
        if self.x0 is not None:
            return np.array(self.x0, dtype=self.dtype, copy=True)
        return self.projection(np.zeros(self.shape, dtype=self.dtype))

    def is_feasible(self, x, tol=1e-9):
        if self.is_box:
            return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))
        px = self.projection(x)
        return float(np.max(np.abs(px - x), initial=0.0)) <= tol * (1.0 + float(np.max(np.abs(x), initial=0.0)))


@dataclass
class CompositeProblem:
    """Minimize ``f(x) + g(x)`` with ``g`` convex, possibly nonsmooth.

    ``prox(v, s)`` returns ``argmin_{x in X} s*g(x) + ||x - v||^2 / 2``.
    """

    smooth: SmoothProblem
    g: Callable
    prox: Optional[Callable] = None
    extras: dict = field(default_factory=dict)

    @classmethod
    def zero(cls, smooth):
        """Composite wrapper with ``g = 0``; the prox reduces to projection."""
        return cls(smooth, g=lambda x: 0.0, prox=lambda v, s: smooth.projection(v))

    # pass-throughs so rules can treat both problem kinds alike
    @property
    def f(self):
        return self.smooth.f

    @property
    def grad(self):
        return self.smooth.grad

    @property
    def shape(self):
        return self.smooth.shape

    @property
    def convex(self):
        return self.smooth.convex

    def projection(self, x):
        return self.smooth.projection(x)

    def start(self):
        return self.smooth.start()

    def value(self, x):
        return self.smooth.f(x) + self.g(x)

    def midpoint_convexity_violations(self, points, tol=1e-12):
        """Count sampled pairs where ``g`` fails the midpoint inequality."""
        bad = 0
        for i in range(len(points)):
            for j in range(i + 1, len(points)):
                a, b = points[i], points[j]
                lhs = self.g(0.5 * (a + b))
                rhs = 0.5 * (self.g(a) + self.g(b))
                if lhs > rhs + tol * (1.0 + abs(rhs)):
                    bad += 1
        return bad
