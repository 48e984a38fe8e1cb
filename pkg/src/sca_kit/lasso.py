"""STELA for the LASSO ``min 0.5*||Ax - b||^2 + mu*||x||_1``.

Every coordinate takes its exact scalar best response (soft-thresholding)
in parallel; the stepsize minimizes the quadratic-plus-linear line
surrogate in closed form. The residual ``Ax - b`` is carried by
recursion so each iteration costs two matrix-vector products.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import time

import numpy as np

from .core.problem import CompositeProblem, SmoothProblem
from .core.rules import ApproximationRule
from .core.trace import IterateTrace
from .exceptions import BPNotConverged, DegenerateColumn
from .numerics import soft_threshold
from .rng import Rng

RESYNC_EVERY = 500


@dataclass
class LassoInstance:
    A: np.ndarray
    b: np.ndarray
    mu: float
    col_sq: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.A.ndim != 2 or self.A.shape[0] != self.b.size:
            raise ValueError(f"A {self.A.shape} and b ({self.b.size},) are inconsistent")
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        self.mu = float(self.mu)
        # column norms without forming A^T A
        self.col_sq = np.sum(self.A ** 2, axis=0)
        if np.any(self.col_sq <= 0):
            k = int(np.flatnonzero(self.col_sq <= 0)[0])
            raise DegenerateColumn(f"column {k} of A is zero")

    @property
    def shape(self):
        return self.A.shape

    def objective(self, x):
        r = self.A @ x - self.b
        return 0.5 * float(r @ r) + self.mu * float(np.abs(x).sum())

    def as_composite(self):
        """The instance as ``f + g`` for the generic engine."""
        A, b, mu = self.A, self.b, self.mu
        smooth = SmoothProblem(
            f=lambda x: 0.5 * float(np.sum((A @ x - b) ** 2)),
            grad=lambda x: A.T @ (A @ x - b),
            shape=(A.shape[1],),
            convex=True,
        )
        return CompositeProblem(
            smooth,
            g=lambda x: mu * float(np.abs(x).sum()),
            prox=lambda v, s: soft_threshold(v, s * mu),
            extras={"instance": self},
        )


@dataclass
class StelaState:
    x: np.ndarray
    s: np.ndarray
    d: np.ndarray

    @classmethod
    def start(cls, inst, x0=None):
        x = np.zeros(inst.A.shape[1]) if x0 is None else np.array(x0, dtype=float)
        return cls(x, inst.A @ x - inst.b, inst.col_sq)

    def resync(self, inst):
        self.s = inst.A @ self.x - inst.b

    def drift(self, inst):
        return float(np.linalg.norm(self.s - (inst.A @ self.x - inst.b)))


def _best_response(x, s, d, A, mu, workers=1):
    if workers <= 1:
        r = d * x - A.T @ s
        return soft_threshold(r, mu) / d
    # index-range partition of the columns of A
    parts = np.array_split(np.arange(x.size), workers)

    def block(idx):
        r = d[idx] * x[idx] - A[:, idx].T @ s
        return soft_threshold(r, mu) / d[idx]

    out = np.empty_like(x)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for idx, val in zip(parts, pool.map(block, parts)):
            out[idx] = val
    return out


def stela_best_response(st, inst, workers=1):
    """``Bx = d^{-1} * S_mu(d*x - A^T (Ax - b))`` with ``d = diag(A^T A)``."""
    if np.any(st.d <= 0):
        raise DegenerateColumn("zero diagonal element in A^T A")
    return _best_response(st.x, st.s, st.d, inst.A, inst.mu, workers)


def _step(s, Ad, dl1, mu):
    num = float(s @ Ad) + mu * dl1
    den = float(Ad @ Ad)
    if den == 0.0:
        # null-space direction: the surrogate is linear in gamma
        return 1.0 if num < 0 else 0.0
    return min(max(-num / den, 0.0), 1.0)


def stela_stepsize(st, Bx, inst, Ad=None):
    """Exact minimizer over ``[0, 1]`` of
    ``f(x + gamma*(Bx - x)) + gamma*(g(Bx) - g(x))``."""
    if Ad is None:
        Ad = inst.A @ (Bx - st.x)
    dl1 = float(np.sum(np.abs(Bx) - np.abs(st.x)))
    return _step(st.s, Ad, dl1, inst.mu)


def lasso_error(x, inst, grad=None):
    """``|| grad f(x) - clip(grad f(x) - x, -mu, mu) ||_2``; zero iff ``x`` is optimal."""
    if grad is None:
        grad = inst.A.T @ (inst.A @ x - inst.b)
    return float(np.linalg.norm(grad - np.clip(grad - x, -inst.mu, inst.mu)))


def stela_solve(inst, tol=1e-6, max_iter=2000, x0=None, workers=1, resync_every=RESYNC_EVERY):
    """Run STELA until ``lasso_error <= tol`` or ``max_iter`` updates.

    Returns
    -------
    x : ndarray
    trace : IterateTrace
    """
    A, mu = inst.A, inst.mu
    st = StelaState.start(inst, x0)
    trace = IterateTrace()
    t0 = time.perf_counter()
    l1 = float(np.abs(st.x).sum())
    for t in range(max_iter + 1):
        grad = A.T @ st.s
        err = lasso_error(st.x, inst, grad)
        obj = 0.5 * float(st.s @ st.s) + mu * l1
        if err <= tol or t == max_iter:
            trace.append(t, obj, np.nan, err, time.perf_counter() - t0)
            trace.reason = "converged" if err <= tol else "max_iter"
            break
        if workers > 1:
            Bx = _best_response(st.x, st.s, st.d, A, mu, workers)
        else:
            Bx = soft_threshold(st.d * st.x - grad, mu) / st.d
        dx = Bx - st.x
        Ad = A @ dx
        # elementwise difference avoids cancellation between two large sums
        gamma = _step(st.s, Ad, float(np.sum(np.abs(Bx) - np.abs(st.x))), mu)
        trace.append(t, obj, gamma, err, time.perf_counter() - t0)
        st.x = st.x + gamma * dx
        st.s = st.s + gamma * Ad
        l1 = float(np.abs(st.x).sum())
        if (t + 1) % resync_every == 0:
            st.resync(inst)
    return st.x, trace


def stela_rule(workers=1):
    """STELA's best response as an engine rule for ``inst.as_composite()``."""

    def br(problem, x):
        inst = problem.extras["instance"]
        return _best_response(x, inst.A @ x - inst.b, inst.col_sq, inst.A, inst.mu, workers)

    return ApproximationRule("stela", br, block_parallel=True)


def stela_closed_form_hook(problem, x, Bx):
    inst = problem.extras["instance"]
    st = StelaState(x, inst.A @ x - inst.b, inst.col_sq)
    return stela_stepsize(st, Bx, inst)


def flexa_baseline(inst, gamma0=0.9, d=1e-2, tol=1e-6, max_iter=2000, x0=None, tau="auto"):
    """Parallel soft-thresholding with a decreasing stepsize, for comparison.

    Coordinate ``k`` minimizes ``f(x_k, x_-k) + tau/2 (x_k - x_k^t)^2 + mu|x_k|``
    and the stepsize follows
    ``gamma <- gamma * (1 - min(1, 1e-4/e(x)) * d * gamma)``.

    ``tau="auto"`` starts from ``tr(A^T A) / (2K)`` and doubles it whenever
    the objective increases; ``tau=0`` uses STELA's best response unchanged,
    which diverges once ``gamma`` exceeds the Jacobi stability limit.
    """
    A, mu = inst.A, inst.mu
    st = StelaState.start(inst, x0)
    adapt = tau == "auto"
    tau = float(st.d.sum()) / (2 * st.d.size) if adapt else float(tau)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    trace = IterateTrace()
    t0 = time.perf_counter()
    gamma = gamma0
    prev = np.inf
    for t in range(max_iter + 1):
        grad = A.T @ st.s
        err = lasso_error(st.x, inst, grad)
        with np.errstate(over="ignore", invalid="ignore"):
            obj = 0.5 * float(st.s @ st.s) + mu * float(np.abs(st.x).sum())
        if not np.isfinite(obj):
            trace.append(t, obj, np.nan, err, time.perf_counter() - t0)
            trace.reason = "diverged"
            break
        if err <= tol or t == max_iter:
            trace.append(t, obj, np.nan, err, time.perf_counter() - t0)
            trace.reason = "converged" if err <= tol else "max_iter"
            break
        if adapt and obj > prev:
            tau *= 2.0
        prev = obj
        w = st.d + tau
        Bx = soft_threshold(w * st.x - grad, mu) / w
        dx = Bx - st.x
        trace.append(t, obj, gamma, err, time.perf_counter() - t0)
        st.x = st.x + gamma * dx
        st.s = st.s + gamma * (A @ dx)
        if (t + 1) % RESYNC_EVERY == 0:
            st.resync(inst)
        gamma = gamma * (1.0 - min(1.0, 1e-4 / err) * d * gamma)
    return st.x, trace


def basis_pursuit_solve(A, b, max_outer=50, c_max=1e2, inner_tol=1e-10, inner_max_iter=20000,
                        lam_tol=1e-6, raise_on_failure=True):
    """``min ||x||_1 s.t. Ax = b`` by the method of multipliers.

    Each x-update minimizes ``||x||_1 + lam^T (Ax - b) + c/2 ||Ax - b||^2``,
    which is the LASSO with data ``b - lam/c`` and weight ``1/c``, solved
    by STELA warm-started at the previous iterate. Then
    ``lam <- lam + c (Ax - b)`` and ``c <- min(2c, c_max)``, starting from
    ``c = 10 / ||A^T b||_inf``.

    Returns
    -------
    x, lam : ndarray
    info : dict
        ``outer`` iterations, final ``residual``, ``converged`` flag and a
        ``trace`` with one record per outer iteration (objective ``||x||_1``,
        error ``||Ax - b||``).
    """
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    n, k = A.shape
    lam = np.zeros(n)
    x = np.zeros(k)
    trace = IterateTrace()
    t0 = time.perf_counter()
    scale = float(np.max(np.abs(A.T @ b), initial=0.0))
    if scale == 0.0:
        trace.append(0, 0.0, np.nan, float(np.linalg.norm(b)), 0.0)
        trace.columns["penalty"] = [0.0]
        trace.reason = "converged"
        return x, lam, {"outer": 0, "residual": float(np.linalg.norm(b)), "converged": True,
                        "trace": trace}
    c = 10.0 / scale
    trace.append(0, 0.0, np.nan, float(np.linalg.norm(b)), 0.0)
    trace.columns["penalty"] = [c]
    converged = False
    outer = 0
    for outer in range(1, max_outer + 1):
        sub = LassoInstance(A, b - lam / c, 1.0 / c)
        x, _ = stela_solve(sub, tol=inner_tol, max_iter=inner_max_iter, x0=x)
        lam_new = lam + c * (A @ x - b)
        change = float(np.max(np.abs(lam_new - lam)))
        done = change <= lam_tol * (1.0 + float(np.max(np.abs(lam))))
        lam = lam_new
        trace.append(outer, float(np.abs(x).sum()), np.nan, float(np.linalg.norm(A @ x - b)),
                     time.perf_counter() - t0)
        trace.columns.setdefault("penalty", []).append(c)
        if done:
            converged = True
            break
        c = min(2.0 * c, c_max)
    trace.reason = "converged" if converged else "max_iter"
    info = {"outer": outer, "residual": float(np.linalg.norm(A @ x - b)), "converged": converged,
            "trace": trace}
    if not converged and raise_on_failure:
        raise BPNotConverged(f"multipliers did not converge in {max_outer} outer iterations "
                             f"(residual {info['residual']:.3e})")
    return x, lam, info


def random_instance(n, k, density=0.1, noise_var=1e-4, seed=0, mu_ratio=0.1):
    """Gaussian ``A`` with unit-norm rows, sparse ``x_true``, noisy ``b``,
    and ``mu = mu_ratio * ||A^T b||_inf``.

    Returns ``(instance, x_true)``.
    """
    rng = Rng(seed)
    A = rng.normal((n, k))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    nnz = max(1, int(round(density * k)))
    x_true = np.zeros(k)
    x_true[rng.choice(k, nnz)] = rng.normal(nnz)
    b = A @ x_true + np.sqrt(noise_var) * rng.normal(n)
    mu = mu_ratio * float(np.max(np.abs(A.T @ b)))
    return LassoInstance(A, b, mu), x_true


def bp_random_instance(n=2, k=4, nnz=1, seed=0):
    """Gaussian ``A`` (n x k) and ``b = A x_true`` with ``nnz`` nonzeros.

    Returns ``(A, b, x_true)``.
    """
    rng = Rng(seed)
    A = rng.normal((n, k))
    x_true = np.zeros(k)
    x_true[rng.choice(k, nnz)] = rng.normal(nnz)
    return A, A @ x_true, x_true
