"""Sum capacity of the MIMO broadcast channel.

The surrogate keeps, for each user, the exact log-det with the other
users' covariances frozen. It is maximized by dual decomposition: each
user waterfills against its own interference-plus-noise covariance and
a common multiplier is found by bisection on the total power.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core.engine import solve_smooth
from .core.linesearch import StepsizeRule
from .core.problem import SmoothProblem
from .core.rules import ApproximationRule
from .exceptions import NoBracketError
from .numerics import hermitian_eig
from .rng import Rng

LAMBDA_FLOOR = 1e-12
POWER_RTOL = 1e-12
PSD_TOL = 1e-9


@dataclass
class MimoBcInstance:
    H: np.ndarray  # (K, nR, nT) complex
    P: float

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        if self.H.ndim != 3:
            raise ValueError("H must have shape (K, nR, nT)")
        if not self.P > 0:
            raise ValueError("power budget must be positive")
        self.P = float(self.P)

    @classmethod
    def from_db(cls, H, P_dB):
        return cls(H, 10.0 ** (P_dB / 10.0))

    @property
    def K(self):
        return self.H.shape[0]

    @property
    def nR(self):
        return self.H.shape[1]

    @property
    def nT(self):
        return self.H.shape[2]

    def zeros(self):
        return np.zeros((self.K, self.nT, self.nT), dtype=complex)


def random_instance(K, nT, nR, P_dB, seed=0):
    """I.i.d. CN(0, 1) channel entries."""
    rng = Rng(seed)
    return MimoBcInstance.from_db(rng.complex_normal((K, nR, nT)), P_dB)


def _covariance(Q, inst):
    HQH = np.einsum("kri,kij,ksj->krs", inst.H, Q, inst.H.conj())
    return HQH


def bc_objective(Q, inst):
    """``log det(I + sum_k H_k Q_k H_k^H)`` in nats."""
    M = np.eye(inst.nR) + _covariance(Q, inst).sum(axis=0)
    sign, logdet = np.linalg.slogdet(M)
    return float(logdet)


def bc_gradient(Q, inst):
    """``H_k^H M^{-1} H_k`` for every user, with ``M = I + sum_j H_j Q_j H_j^H``."""
    M = np.eye(inst.nR) + _covariance(Q, inst).sum(axis=0)
    MinvH = np.linalg.solve(M, inst.H.transpose(1, 0, 2).reshape(inst.nR, -1))
    MinvH = MinvH.reshape(inst.nR, inst.K, inst.nT).transpose(1, 0, 2)
    G = np.einsum("kri,krj->kij", inst.H.conj(), MinvH)
    return 0.5 * (G + G.conj().transpose(0, 2, 1))


def _channel_modes(H, R):
    """Eigenpairs of ``H^H R^{-1} H``."""
    X = H.conj().T @ np.linalg.solve(R, H)
    return hermitian_eig(0.5 * (X + X.conj().T))


def _levels(sig, lam):
    out = np.zeros_like(sig)
    pos = sig > 0
    out[pos] = np.maximum(1.0 / lam - 1.0 / sig[pos], 0.0)
    return out


def _assemble(V, q):
    Q = (V * q) @ V.conj().T
    return 0.5 * (Q + Q.conj().T)


def waterfill_user(H, R, lam):
    """Maximizer of ``log|R + H Q H^H| - lam tr(Q)`` over PSD ``Q``.

    ``Q = V diag([1/lam - 1/s_i]^+) V^H`` where ``(s_i, V)`` are the
    eigenpairs of ``H^H R^{-1} H``.
    """
    if not lam > 0:
        raise ValueError("multiplier must be positive")
    sig, V = _channel_modes(np.asarray(H, dtype=complex), np.asarray(R, dtype=complex))
    return _assemble(V, _levels(np.maximum(sig, 0.0), lam))


def _solve_multiplier(sigs, P):
    """Common multiplier with ``sum [1/lam - 1/s]^+ = P`` over all modes."""
    allsig = np.concatenate(sigs)
    allsig = allsig[allsig > 0]
    if allsig.size == 0:
        return 0.0

    def power(lam):
        return float(np.maximum(1.0 / lam - 1.0 / allsig, 0.0).sum())

    lo, hi = LAMBDA_FLOOR, 1.0
    if power(lo) <= P:
        # slack budget even at the floor: complementary slackness gives lam -> 0
        return lo
    while power(hi) > P:
        hi *= 2.0
        if hi > 1e300:
            raise NoBracketError("total power is not decreasing in the multiplier")
    for _ in range(200):
        if P - power(hi) <= POWER_RTOL * P:
            break
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if power(mid) > P:
            lo = mid
        else:
            hi = mid
    # the bracket fixes the active modes; solve their level exactly
    active = allsig[1.0 / allsig < 1.0 / hi]
    if active.size:
        level = (P + float(np.sum(1.0 / active))) / active.size
        cand = 1.0 / level
        if np.all(1.0 / active < level) and np.all(1.0 / allsig[1.0 / allsig >= 1.0 / hi] >= level):
            return cand
    return hi


def bc_best_response(Q, inst, workers=1, return_multiplier=False):
    """Jointly optimal per-user waterfilling against frozen interference,
    under the shared power budget."""
    cov = _covariance(Q, inst)
    M = np.eye(inst.nR) + cov.sum(axis=0)

    def modes(k):
        return _channel_modes(inst.H[k], M - cov[k])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            eig = list(pool.map(modes, range(inst.K)))
    else:
        eig = [modes(k) for k in range(inst.K)]
    sigs = [np.maximum(s, 0.0) for s, _ in eig]
    lam = _solve_multiplier(sigs, inst.P)
    BQ = inst.zeros()
    if lam > 0:
        for k, (sig, V) in enumerate(eig):
            BQ[k] = _assemble(V, _levels(sigs[k], lam))
    if return_multiplier:
        return BQ, lam
    return BQ


def total_power(Q):
    return float(np.real(np.trace(Q, axis1=1, axis2=2)).sum())


def project_feasible(Q, P):
    """Euclidean projection onto ``{Q_k PSD, sum tr(Q_k) <= P}``."""
    Q = np.asarray(Q, dtype=complex)
    eig = [hermitian_eig(0.5 * (q + q.conj().T)) for q in Q]
    vals = np.concatenate([w for w, _ in eig])
    v = np.maximum(vals, 0.0)
    if v.sum() > P:
        v = _project_simplex(vals, P)
    out = np.empty_like(Q)
    pos = 0
    for k, (w, V) in enumerate(eig):
        out[k] = _assemble(V, v[pos:pos + w.size])
        pos += w.size
    return out


def _project_simplex(v, z):
    """Projection of ``v`` onto ``{u >= 0, sum u = z}``."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - z
    idx = np.arange(1, v.size + 1)
    rho = idx[u - css / idx > 0][-1]
    theta = css[rho - 1] / rho
    return np.maximum(v - theta, 0.0)


def psd_repair(Q):
    """Clip tiny negative eigenvalues (>= -1e-9) to zero; larger ones are errors."""
    out = np.empty_like(Q)
    for k, q in enumerate(Q):
        w, V = hermitian_eig(0.5 * (q + q.conj().T))
        if w.min(initial=0.0) < -PSD_TOL * max(1.0, abs(w).max(initial=0.0)):
            raise ValueError(f"covariance {k} has eigenvalue {w.min():.3e}")
        out[k] = _assemble(V, np.maximum(w, 0.0))
    return out


def bc_best_response_regularized(Q, inst, tau=1e-5, inner_iter=300):
    """Best response with a proximal term ``tau/2 ||Q_k - Q_k^t||^2``.

    No closed form exists, so the surrogate is maximized by projected
    gradient ascent with stepsize ``1 / (max_k ||H_k||^4 + tau)``.
    """
    cov = _covariance(Q, inst)
    M = np.eye(inst.nR) + cov.sum(axis=0)
    R = M[None] - cov
    L = max(float(np.linalg.norm(h, 2)) ** 4 for h in inst.H) + tau
    Z = Q.copy()
    for _ in range(inner_iter):
        G = np.empty_like(Z)
        for k in range(inst.K):
            Mk = R[k] + inst.H[k] @ Z[k] @ inst.H[k].conj().T
            G[k] = inst.H[k].conj().T @ np.linalg.solve(Mk, inst.H[k])
        G = 0.5 * (G + G.conj().transpose(0, 2, 1)) - tau * (Z - Q)
        Z = project_feasible(Z + G / L, inst.P)
    return Z


def surrogate_value(Z, Q, inst, tau=0.0):
    """``sum_k log|R_k(Q_-k) + H_k Z_k H_k^H| - tau/2 sum ||Z_k - Q_k||^2``."""
    cov = _covariance(Q, inst)
    M = np.eye(inst.nR) + cov.sum(axis=0)
    total = 0.0
    for k in range(inst.K):
        Mk = M - cov[k] + inst.H[k] @ Z[k] @ inst.H[k].conj().T
        total += float(np.linalg.slogdet(Mk)[1])
    return total - 0.5 * tau * float(np.sum(np.abs(Z - Q) ** 2))


def bc_problem(inst):
    """The sum-rate maximization as a minimization for the engine."""
    return SmoothProblem(
        f=lambda Q: -bc_objective(Q, inst),
        grad=lambda Q: -bc_gradient(Q, inst),
        shape=(inst.K, inst.nT, inst.nT),
        project=lambda Q: project_feasible(Q, inst.P),
        convex=True,
        x0=inst.zeros(),
        dtype=complex,
    )


def bc_rule(inst, workers=1, tau=0.0, inner_iter=300):
    if tau > 0:
        return ApproximationRule(
            f"bc_regularized(tau={tau})",
            lambda p, Q: bc_best_response_regularized(Q, inst, tau, inner_iter),
            block_parallel=True)
    return ApproximationRule("bc_waterfill", lambda p, Q: bc_best_response(Q, inst, workers),
                             block_parallel=True)


def bc_solve(inst, step="exact", tol=1e-6, max_iter=500, Q0=None, workers=1,
             tau=1e-5, d=1e-2, gamma0=1.0):
    """Sum-capacity covariances by successive approximation.

    Parameters
    ----------
    step : {"exact", "fixed", "decreasing"}
        ``exact`` bisects the concave line restriction, ``fixed`` uses
        ``gamma = 1/K``. ``decreasing`` switches to the regularized best
        response (weight ``tau``) with ``gamma <- gamma (1 - d gamma)``.
    tol : float
        Stop once ``Re tr(grad(Q) (BQ - Q)) <= tol``.

    Returns
    -------
    Q : ndarray, shape (K, nT, nT)
    trace : IterateTrace
        Includes a ``sum_rate`` column.
    """
    p = bc_problem(inst)
    if step == "exact":
        rule, rule_step = bc_rule(inst, workers), StepsizeRule.exact()
    elif step == "fixed":
        rule, rule_step = bc_rule(inst, workers), StepsizeRule.constant(1.0 / inst.K)
    elif step == "decreasing":
        rule, rule_step = bc_rule(inst, workers, tau=tau), StepsizeRule.decreasing(gamma0, d)
    else:
        raise ValueError(f"unknown step {step!r}")
    Q, trace = solve_smooth(p, rule, rule_step, tol=tol, max_iter=max_iter, x0=Q0)
    trace.columns["sum_rate"] = [-r.objective for r in trace.records]
    return Q, trace


def single_user_capacity(H, P):
    """Closed-form point-to-point waterfilling capacity (nats) by sorting."""
    s = np.linalg.svd(np.asarray(H, dtype=complex), compute_uv=False) ** 2
    s = np.sort(s[s > 0])[::-1]
    for m in range(s.size, 0, -1):
        level = (P + float(np.sum(1.0 / s[:m]))) / m
        if level > 1.0 / s[m - 1]:
            return float(np.sum(np.log(level * s[:m])))
    return 0.0
