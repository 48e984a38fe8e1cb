"""Energy-efficiency maximization for interfering uplink users.

The rate of user ``k`` is
``r_k(p) = log(1 + w_kk p_k / (sigma_k^2 + phi_k p_k + sum_{j!=k} w_kj p_j))``
and the goal is ``max sum_k r_k(p) / (Pc + sum_k p_k)`` over a box.

Each iteration keeps ``r_k`` exact in ``p_k``, linearizes the other
users' rates in ``p_k`` and keeps the denominator, which leaves K
independent pseudo-concave ratios solved by Dinkelbach's method.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import logging
import math

import numpy as np

from .core.engine import solve_smooth
from .core.linesearch import StepsizeRule
from .core.problem import SmoothProblem
from .core.rules import ApproximationRule
from .numerics import bisect_root
from .rng import Rng

log = logging.getLogger(__name__)

DINKELBACH_TOL = 1e-5
DINKELBACH_MAX_ITER = 100
GATE_TOL = 1e-6
FALLBACK_NOTICE = "closed-form fallback"


@dataclass
class EeInstance:
    w: np.ndarray        # (K, K) gains, w[k, j] couples user j into user k
    phi: np.ndarray      # (K,) impairment coefficients
    sigma2: np.ndarray   # (K,) noise powers
    Pc: float
    pmin: np.ndarray
    pmax: np.ndarray

    def __post_init__(self):
        self.w = np.atleast_2d(np.asarray(self.w, dtype=float))
        K = self.w.shape[0]
        if self.w.shape != (K, K):
            raise ValueError("gain matrix must be square")
        self.phi = np.broadcast_to(np.asarray(self.phi, dtype=float), (K,)).copy()
        self.sigma2 = np.broadcast_to(np.asarray(self.sigma2, dtype=float), (K,)).copy()
        self.pmin = np.broadcast_to(np.asarray(self.pmin, dtype=float), (K,)).copy()
        self.pmax = np.broadcast_to(np.asarray(self.pmax, dtype=float), (K,)).copy()
        self.Pc = float(self.Pc)
        if np.any(self.w <= 0):
            raise ValueError("gains must be positive")
        if np.any(self.phi < 0):
            raise ValueError("impairment coefficients must be nonnegative")
        if np.any(self.sigma2 <= 0) or not self.Pc > 0:
            raise ValueError("noise and circuit power must be positive")
        if np.any(self.pmin <= 0) or np.any(self.pmin > self.pmax):
            raise ValueError("power bounds must satisfy 0 < pmin <= pmax")

    @property
    def K(self):
        return self.w.shape[0]

    def check_feasible(self, p, slack=1e-12):
        p = np.asarray(p, dtype=float)
        if p.shape != (self.K,):
            raise ValueError(f"expected {self.K} powers, got shape {p.shape}")
        if np.any(p < self.pmin - slack) or np.any(p > self.pmax + slack):
            raise ValueError("power vector outside the box")
        return p


def dbm_to_linear(x):
    """0 dBm maps to one unit."""
    return 10.0 ** (np.asarray(x, dtype=float) / 10.0)


def ee_instance_from_channels(h, eps=0.01, sigma2=1.0, Pc=10.0, pmin=0.1, pmax=10.0):
    """Gains from channels ``h[k, j]`` (user ``j`` to cell ``k``, length M).

    ``w_kk = |h_kk^H h_kk|^2``,
    ``w_kj = |h_kk^H h_kj|^2 + eps h_kk^H D_j h_kk``,
    ``phi_k = eps h_kk^H D_k h_kk`` with ``D_j = diag(|h_jj|^2)``.
    """
    h = np.asarray(h, dtype=complex)
    K = h.shape[0]
    hkk = h[np.arange(K), np.arange(K)]          # (K, M)
    dg = np.abs(hkk) ** 2                        # diagonal of D_j, row j
    cross = np.abs(np.einsum("km,kjm->kj", hkk.conj(), h)) ** 2
    imp = eps * dg @ dg.T                        # h_kk^H D_j h_kk
    w = cross + imp
    w[np.arange(K), np.arange(K)] = np.sum(dg, axis=1) ** 2
    phi = eps * np.diag(dg @ dg.T).copy()
    return EeInstance(w, phi, sigma2, Pc, pmin, pmax)


def ee_random_instance(K, M, eps=0.01, seed=0):
    """i.i.d. CN(0, 1) channels; unit noise, Pc = 10 dBm, box [-10, 10] dBm."""
    h = Rng(seed).complex_normal((K, K, M))
    return ee_instance_from_channels(h, eps, 1.0, float(dbm_to_linear(10.0)),
                                     float(dbm_to_linear(-10.0)), float(dbm_to_linear(10.0)))


def _powers(p, inst):
    """Total received power and interference-plus-noise-plus-impairment."""
    T = inst.sigma2 + inst.phi * p + inst.w @ p
    D = T - np.diag(inst.w) * p
    return T, D


def rates(p, inst):
    T, D = _powers(np.asarray(p, dtype=float), inst)
    return np.log(T) - np.log(D)


def rate_jacobian(p, inst):
    """``J[j, k] = d r_j / d p_k``."""
    T, D = _powers(np.asarray(p, dtype=float), inst)
    J = inst.w / T[:, None] - inst.w / D[:, None]
    idx = np.arange(inst.K)
    J[idx, idx] = (inst.phi + np.diag(inst.w)) / T - inst.phi / D
    return J


def ee_objective(p, inst):
    p = inst.check_feasible(p)
    return float(rates(p, inst).sum() / (inst.Pc + p.sum()))


def ee_gradient(p, inst):
    p = inst.check_feasible(p)
    R = float(rates(p, inst).sum())
    S = inst.Pc + float(p.sum())
    return (rate_jacobian(p, inst).sum(axis=0) * S - R) / S ** 2


def ee_kkt_residual(p, inst):
    """``||p - proj(p + grad EE(p))||_inf``; zero exactly at box-KKT points."""
    g = ee_gradient(p, inst)
    return float(np.max(np.abs(p - np.clip(p + g, inst.pmin, inst.pmax))))


@dataclass
class UserTerms:
    """Everything user ``k``'s scalar subproblem needs from ``p^t``."""
    k: int
    w: float        # w_kk
    phi: float
    inter: float    # sigma_k^2 + sum_{j!=k} w_kj p_j^t
    pi: float       # sum_{j!=k} d r_j / d p_k at p^t
    base: float     # sum_{j!=k} r_j(p^t)
    pk: float       # p_k^t
    offset: float   # Pc + sum_{j!=k} p_j^t
    lo: float
    hi: float

    def numerator(self, x):
        own = math.log1p(self.w * x / (self.inter + self.phi * x))
        return own + self.base + (x - self.pk) * self.pi

    def denominator(self, x):
        return self.offset + x

    def ratio(self, x):
        return self.numerator(x) / self.denominator(x)

    def own_slope(self, x):
        """Derivative of ``r_k(x, p_-k^t)``, positive and decreasing."""
        u = self.phi + self.w
        return self.w * self.inter / ((self.inter + u * x) * (self.inter + self.phi * x))


def user_terms(k, p, inst):
    p = np.asarray(p, dtype=float)
    others = np.arange(inst.K) != k
    J = rate_jacobian(p, inst)
    r = rates(p, inst)
    return UserTerms(
        k=k, w=float(inst.w[k, k]), phi=float(inst.phi[k]),
        inter=float(inst.sigma2[k] + inst.w[k, others] @ p[others]),
        pi=float(J[others, k].sum()), base=float(r[others].sum()), pk=float(p[k]),
        offset=float(inst.Pc + p[others].sum()), lo=float(inst.pmin[k]), hi=float(inst.pmax[k]))


def ee_surrogate(p, p_t, inst):
    """Sum over users of ``r~_k(p_k; p^t) / (Pc + p_k + sum_{j!=k} p_j^t)``."""
    p = inst.check_feasible(p)
    p_t = inst.check_feasible(p_t)
    return float(sum(user_terms(k, p_t, inst).ratio(p[k]) for k in range(inst.K)))


def closed_form_literal(ut, lam):
    """The quadratic-root expression exactly as it is usually quoted.

    Kept for comparison; it does not satisfy the stationarity condition in
    general, which is why every call is certified before use.
    """
    a = np.float64(ut.pi - lam)
    w, phi, inter = ut.w, ut.phi, ut.inter
    with np.errstate(all="ignore"):
        rad = (2 * phi + w) ** 2 - 4 * phi * (w / (a * inter) + 1.0)
        x = inter * (np.sqrt(rad) - 1.0) / (2 * phi * a * (phi + w))
    return float(np.clip(x, ut.lo, ut.hi)) if np.isfinite(x) else math.nan


def closed_form_rederived(ut, lam):
    """Root of ``own_slope(x) = lam - pi`` in closed form, clipped to the box.

    With ``u = phi + w`` and ``c = lam - pi`` the condition is the quadratic
    ``u phi x^2 + inter (u + phi) x + inter^2 - w inter / c = 0``.
    """
    c = lam - ut.pi
    if c <= 0:
        return ut.hi
    w, phi, inter = ut.w, ut.phi, ut.inter
    u = phi + w
    if phi == 0:
        x = w * inter / (u * c) - inter / u
    else:
        disc = w * w + 4 * u * phi * w / (c * inter)
        # rationalized form avoids cancellation when c is large
        x = inter * (disc - (w + 2 * phi) ** 2) / (2 * u * phi * (math.sqrt(disc) + w + 2 * phi))
    return min(max(x, ut.lo), ut.hi)


def bisection_oracle(ut, lam, tol=1e-13):
    """Maximizer of ``numerator(x) - lam * denominator(x)`` on the box by
    bisection on the decreasing derivative."""
    c = lam - ut.pi

    def g(x):
        return c - ut.own_slope(x)

    if g(ut.lo) >= 0:
        return ut.lo
    if g(ut.hi) <= 0:
        return ut.hi
    return bisect_root(g, (ut.lo, ut.hi), tol=tol, max_iter=200)


def certify(ut, lam, x, tol=GATE_TOL):
    """True if ``x`` satisfies the box KKT conditions of the inner problem."""
    if not math.isfinite(x) or x < ut.lo or x > ut.hi:
        return False
    g = ut.own_slope(x) + ut.pi - lam
    scale = max(1.0, abs(lam - ut.pi))
    if x <= ut.lo:
        return g <= tol * scale
    if x >= ut.hi:
        return g >= -tol * scale
    return abs(g) <= tol * scale


class InnerSolver:
    """Closed-form inner maximizer guarded by a KKT certificate.

    ``formula`` is ``"literal"``, ``"rederived"`` or ``"bisection"``. A
    closed-form point that fails the certificate is replaced by the
    bisection oracle and counted in ``fallbacks``.
    """

    def __init__(self, formula="literal"):
        if formula not in ("literal", "rederived", "bisection"):
            raise ValueError(f"unknown inner formula {formula!r}")
        self.formula = formula
        self.calls = 0
        self.fallbacks = 0

    def __call__(self, ut, lam):
        self.calls += 1
        if self.formula == "bisection":
            return bisection_oracle(ut, lam)
        fn = closed_form_literal if self.formula == "literal" else closed_form_rederived
        x = fn(ut, lam)
        if certify(ut, lam, x):
            return x
        if self.fallbacks == 0:
            log.info("%s: user %d, lambda %.6g", FALLBACK_NOTICE, ut.k, lam)
        self.fallbacks += 1
        return bisection_oracle(ut, lam)


def dinkelbach_user(k, p_t, inst, tol=DINKELBACH_TOL, max_iter=DINKELBACH_MAX_ITER,
                    inner=None, history=None):
    """Maximize user ``k``'s surrogate ratio over ``[pmin_k, pmax_k]``.

    Starts from level 0 and stops when consecutive levels differ by at
    most ``tol``; the returned power maximizes ``numerator - lam *
    denominator`` at the last level. Levels are appended to ``history``
    when given.
    """
    inner = inner or InnerSolver()
    ut = user_terms(k, p_t, inst)
    lam = 0.0
    x = inner(ut, lam)
    for _ in range(max_iter):
        new = ut.ratio(x)
        if history is not None:
            history.append(new)
        done = abs(new - lam) <= tol
        lam = new
        x = inner(ut, lam)
        if done:
            break
    return x


def ee_best_response(p_t, inst, tol=DINKELBACH_TOL, inner=None, workers=1):
    inner = inner or InnerSolver()
    p_t = np.asarray(p_t, dtype=float)

    def one(k):
        return dinkelbach_user(k, p_t, inst, tol=tol, inner=inner)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.array(list(pool.map(one, range(inst.K))))
    return np.array([one(k) for k in range(inst.K)])


def ee_problem(inst):
    """``-EE`` on the power box, for the engine."""
    return SmoothProblem(
        f=lambda p: -ee_objective(np.clip(p, inst.pmin, inst.pmax), inst),
        grad=lambda p: -ee_gradient(np.clip(p, inst.pmin, inst.pmax), inst),
        shape=(inst.K,),
        lower=inst.pmin,
        upper=inst.pmax,
        x0=inst.pmin.copy(),
    )


def ee_rule(inst, formula="literal", tol=DINKELBACH_TOL, workers=1):
    inner = InnerSolver(formula)
    rule = ApproximationRule(
        f"ee_dinkelbach({formula})",
        lambda p, x: ee_best_response(x, inst, tol=tol, inner=inner, workers=workers),
        block_parallel=True)
    rule.inner = inner
    return rule


def ee_solve(inst, tol=1e-14, max_iter=200, p0=None, formula="literal", alpha=0.25, beta=0.5,
             dinkelbach_tol=DINKELBACH_TOL, workers=1):
    """Stationary power allocation by best response plus Armijo backtracking.

    Returns
    -------
    p : ndarray
    trace : IterateTrace
        Objective column holds ``-EE``; the ``ee`` column holds EE itself.
        ``trace.columns["fallbacks"]`` has the running count of inner
        closed-form rejections.
    """
    rule = ee_rule(inst, formula, dinkelbach_tol, workers)
    fallbacks = []

    def cb(t, x):
        fallbacks.append(rule.inner.fallbacks)

    p, trace = solve_smooth(ee_problem(inst), rule, StepsizeRule.armijo(alpha, beta),
                            tol=tol, max_iter=max_iter, x0=p0, callback=cb)
    trace.columns["ee"] = [-r.objective for r in trace.records]
    trace.columns["fallbacks"] = [0] + fallbacks[:len(trace.records) - 1]
    if rule.inner.fallbacks:
        log.info("%s engaged %d of %d times", FALLBACK_NOTICE, rule.inner.fallbacks, rule.inner.calls)
    trace.inner_calls = rule.inner.calls
    trace.inner_fallbacks = rule.inner.fallbacks
    return np.clip(p, inst.pmin, inst.pmax), trace
