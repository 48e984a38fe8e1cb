"""Reproducible random streams.

Uniform doubles come from the PCG64 bit generator (top 53 bits of each
64-bit output); Gaussian variates use the Box-Muller transform so that
the stream does not depend on numpy's choice of normal sampler.
"""

import numpy as np


class Rng:
    def __init__(self, seed):
        self.seed = int(seed)
        self._bits = np.random.PCG64(self.seed)

    def uniform(self, size=None):
        n = 1 if size is None else int(np.prod(size))
        raw = self._bits.random_raw(n)
        u = (raw >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)
        return float(u[0]) if size is None else u.reshape(size)

    def normal(self, size):
        n = int(np.prod(size))
        m = (n + 1) // 2
        u1 = self.uniform(m)
        u2 = self.uniform(m)
        # 1 - u1 lies in (0, 1], keeping the log finite
        r = np.sqrt(-2.0 * np.log1p(-u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])
        return z[:n].reshape(size)

    def complex_normal(self, size):
        """Circularly symmetric CN(0, 1) samples."""
        z = self.normal((2,) + tuple(np.atleast_1d(size)))
        return ((z[0] + 1j * z[1]) / np.sqrt(2.0)).reshape(size)

    def choice(self, n, k):
        """``k`` distinct indices from ``range(n)`` (partial Fisher-Yates)."""
        idx = np.arange(n)
        u = self.uniform(k) if k else np.empty(0)
        for i in range(k):
            j = i + int(u[i] * (n - i))
            idx[i], idx[j] = idx[j], idx[i]
        return np.sort(idx[:k])
