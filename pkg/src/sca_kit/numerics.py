"""Small numerical kernels shared by the solvers.

Scalar bisection, box projection, soft-thresholding, a cyclic Jacobi
eigensolver for complex Hermitian matrices and a central-difference
gradient checker.
"""

from dataclasses import dataclass
import math

import numpy as np

from .exceptions import InvalidFunctionValue, NoBracketError, NotHermitianError

BISECT_TOL = 1e-8
BISECT_MAX_ITER = 64


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError("interval endpoints must be finite")
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self):
        return self.hi - self.lo


def _checked(g, x):
    v = float(g(x))
    if math.isnan(v):
        raise InvalidFunctionValue(f"function returned NaN at {x!r}")
    return v


def bisect_root(g, iv, tol=BISECT_TOL, max_iter=BISECT_MAX_ITER):
    """Root of a nondecreasing scalar function by bisection.

    Parameters
    ----------
    g : callable
        Nondecreasing on ``iv``.
    iv : Interval or tuple
        Bracketing interval.
    tol : float
        Stop once the bracket is narrower than ``tol`` or ``|g| <= tol``.
    max_iter : int
        Maximum number of halvings.

    Returns
    -------
    float
        Midpoint of the final bracket (or the point where ``|g| <= tol``).
    """
    if not isinstance(iv, Interval):
        iv = Interval(*iv)
    lo, hi = iv.lo, iv.hi
    g_lo = _checked(g, lo)
    if abs(g_lo) <= tol:
        return lo
    g_hi = _checked(g, hi)
    if abs(g_hi) <= tol:
        return hi
    if g_lo > 0 or g_hi < 0:
        raise NoBracketError(
            f"no bracket: g({lo})={g_lo:.3e}, g({hi})={g_hi:.3e}")
    for _ in range(max_iter):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        gm = _checked(g, mid)
        if abs(gm) <= tol:
            return mid
        # g nondecreasing: positive value means the root lies to the left
        if gm > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def project_box(x, lo, hi):
    """Elementwise projection ``max(min(x, hi), lo)``."""
    x = np.asarray(x, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    try:
        shape = np.broadcast_shapes(x.shape, lo.shape, hi.shape)
    except ValueError as exc:
        raise ValueError("dimension mismatch in project_box") from exc
    if shape != x.shape:
        raise ValueError("dimension mismatch in project_box")
    if np.any(lo > hi):
        raise ValueError("lower bound exceeds upper bound")
    return np.maximum(np.minimum(x, hi), lo)


def soft_threshold(b, a):
    """Soft-thresholding ``[b - a]^+ - [-b - a]^+``, the prox of ``a*|.|``."""
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("soft-threshold level must be nonnegative")
    return np.maximum(b - a, 0.0) - np.maximum(-b - a, 0.0)


def _check_hermitian(M, rtol=1e-12):
    M = np.asarray(M, dtype=complex)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise NotHermitianError(f"expected a square matrix, got shape {M.shape}")
    scale = max(np.abs(M).max(initial=0.0), 1.0)
    if np.abs(M - M.conj().T).max(initial=0.0) > rtol * scale:
        raise NotHermitianError("matrix is not Hermitian")
    return M


def hermitian_eig(M, tol=1e-15, max_sweeps=100):
    """Eigendecomposition of a complex Hermitian matrix by cyclic Jacobi sweeps.

    Returns ``(w, V)`` with ``w`` real and sorted in descending order and
    ``V`` unitary such that ``M = V diag(w) V^H``.
    """
    A = _check_hermitian(M).copy()
    n = A.shape[0]
    A = 0.5 * (A + A.conj().T)
    V = np.eye(n, dtype=complex)
    total = np.linalg.norm(A)
    offmask = ~np.eye(n, dtype=bool)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A[offmask])
        if off <= tol * max(total, 1e-300):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                mag = abs(apq)
                if mag == 0.0:
                    continue
                phase = apq / mag
                theta = (A[q, q].real - A[p, p].real) / (2.0 * mag)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                # unitary rotation acting on coordinates (p, q)
                G = np.array([[c, s * phase], [-s * np.conj(phase), c]])
                idx = [p, q]
                A[:, idx] = A[:, idx] @ G
                A[idx, :] = G.conj().T @ A[idx, :]
                A[p, q] = A[q, p] = 0.0
                V[:, idx] = V[:, idx] @ G
    w = np.diag(A).real.copy()
    order = np.argsort(w)[::-1]
    return w[order], V[:, order]


def check_gradient(f, grad, x, h=1e-5):
    """Worst deviation between an analytic gradient and central differences.

    The deviation is ``max_i |g_i - fd_i| / max(1, ||fd||_inf)``. A NaN in
    either gradient propagates to the result.
    """
    x = np.asarray(x, dtype=float)
    g = np.asarray(grad(x), dtype=float).reshape(x.shape)
    fd = np.empty_like(x)
    flat = x.reshape(-1)
    fd_flat = fd.reshape(-1)
    for i in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[i] += h
        xm[i] -= h
        fd_flat[i] = (f(xp.reshape(x.shape)) - f(xm.reshape(x.shape))) / (2.0 * h)
    scale = max(1.0, float(np.max(np.abs(fd), initial=0.0)))
    return float(np.max(np.abs(g - fd), initial=0.0)) / scale
