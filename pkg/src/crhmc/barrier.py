"""Logarithmic barrier for box constraints l <= x <= u.

The barrier is separable, so its Hessian and third derivative are diagonal;
these diagonals define the local metric and its directional derivative used
throughout the dynamics. Infinite bounds are clamped to +-1e7 when the model
is constructed, so every barrier instance sees finite bounds.
"""

from __future__ import annotations

import numpy as np

from .errors import InfeasiblePointError

BOUND_CLAMP = 1.0e7


def clamp_bounds(l, u):
    """Replace infinite bounds by the +-1e7 clamp."""
    l = np.asarray(l, dtype=np.float64).copy()
    u = np.asarray(u, dtype=np.float64).copy()
    l = np.maximum(l, -BOUND_CLAMP)
    u = np.minimum(u, BOUND_CLAMP)
    return l, u


class BoxBarrier:
    """phi(x) = -sum_i [log(x_i - l_i) + log(u_i - x_i)] on a finite box."""

    def __init__(self, l, u):
        self.l, self.u = clamp_bounds(l, u)
        if self.l.shape != self.u.shape or self.l.ndim != 1:
            raise ValueError("bounds must be 1-d vectors of equal length")
        if np.any(self.l >= self.u):
            raise ValueError("bounds must satisfy l < u strictly")

    @property
    def dim(self):
        return self.l.size

    def center(self):
        return 0.5 * (self.l + self.u)

    def contains(self, x):
        return bool(np.all(x > self.l) and np.all(x < self.u))

    def _gaps(self, x):
        x = np.asarray(x, dtype=np.float64)
        a = x - self.l
        b = self.u - x
        if np.any(a <= 0.0) or np.any(b <= 0.0):
            bad = int(np.argmin(np.minimum(a, b)))
            raise InfeasiblePointError(
                f"coordinate {bad} at or outside the box: "
                f"x={x[bad]!r}, l={self.l[bad]!r}, u={self.u[bad]!r}"
            )
        return a, b

    def value(self, x):
        a, b = self._gaps(x)
        return -float(np.sum(np.log(a)) + np.sum(np.log(b)))

    def gradient(self, x):
        a, b = self._gaps(x)
        return -1.0 / a + 1.0 / b

    def hessian_diag(self, x):
        a, b = self._gaps(x)
        return 1.0 / (a * a) + 1.0 / (b * b)

    def hessian_deriv_diag(self, x):
        """Diagonal of the third-derivative tensor; only (i,i,i) entries exist."""
        a, b = self._gaps(x)
        return -2.0 / (a * a * a) + 2.0 / (b * b * b)

    def step_to_boundary(self, x, d):
        """Largest t >= 0 with x + t d inside the closed box (inf if unbounded)."""
        x = np.asarray(x, dtype=np.float64)
        d = np.asarray(d, dtype=np.float64)
        self._gaps(x)
        t = np.inf
        pos = d > 0
        neg = d < 0
        if np.any(pos):
            t = min(t, float(np.min((self.u[pos] - x[pos]) / d[pos])))
        if np.any(neg):
            t = min(t, float(np.min((self.l[neg] - x[neg]) / d[neg])))
        return t
