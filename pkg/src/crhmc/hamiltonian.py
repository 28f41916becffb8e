"""Subspace Hamiltonian for exp(-alpha' x) on {Ax = b} intersected with a box.

With the diagonal barrier metric g(x) and the projection
P = g^{-1/2} A^T (A g^{-1} A^T)^{-1} A g^{-1/2}, the energy splits as

    h1(x)    = alpha' x + 1/2 (log det g + log det A g^{-1} A^T)
    h2(x, v) = 1/2 v' g^{-1/2} (I - P) g^{-1/2} v

The x-independent term -1/2 log det A A^T is dropped from stored energies;
it cancels in every energy difference and Metropolis ratio.  Velocities are
kept in the full n-space: both h2 and the dynamics are invariant under
shifting v by anything in Range(A^T), so no explicit projection onto
Null(A) is ever formed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .barrier import BoxBarrier
from .sparse import (
    CholeskySymbolic,
    GramBuilder,
    LeverageSchedule,
    cholesky_factorize,
    selected_inverse,
)


@dataclass
class PhaseState:
    """Position-velocity pair; x strictly feasible with Ax = b to tolerance."""

    x: np.ndarray
    v: np.ndarray

    def copy(self):
        return PhaseState(self.x.copy(), self.v.copy())


@dataclass
class OracleCache:
    """Per-position quantities shared by every evaluation at the same x."""

    x: np.ndarray
    g: np.ndarray
    dg: np.ndarray
    inv_g: np.ndarray
    factor: object  # CholeskyFactor of A g^{-1} A^T, or None when m = 0
    sigma: np.ndarray
    log_det_g: float
    log_det_gram: float


class HamiltonianOracle:
    """Energies and derivatives of the subspace Hamiltonian with caching.

    One oracle serves one chain; the cache holds the last two positions so a
    rejected proposal does not force a refactorization at the current point.
    """

    def __init__(self, model):
        self.model = model
        self.A = model.A
        self.b = model.b
        self.alpha = model.alpha
        self.barrier = BoxBarrier(model.l, model.u)
        self.m = model.m
        self.n = model.n
        if self.m > 0:
            self._gram = GramBuilder(self.A)
            pat = self._gram.pattern
            self._symbolic = CholeskySymbolic(pat.n_rows, pat.indptr, pat.indices)
            self._leverage = LeverageSchedule(self.A, self._symbolic)
        else:
            self._gram = None
            self._symbolic = None
            self._leverage = None
        self._cache = {}
        self._cache_order = []

    # -- cache ---------------------------------------------------------------

    def refresh_cache(self, x):
        """Quantities at x: metric, its derivative, factor, leverage scores."""
        key = x.tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        g = self.barrier.hessian_diag(x)
        dg = self.barrier.hessian_deriv_diag(x)
        inv_g = 1.0 / g
        if self.m > 0:
            M = self._gram.numeric(inv_g)
            factor = cholesky_factorize(M, reuse_symbolic=self._symbolic)
            sigma = self._leverage.scores(selected_inverse(factor), g)
            log_det_gram = factor.log_det()
        else:
            factor = None
            sigma = np.zeros(self.n)
            log_det_gram = 0.0
        entry = OracleCache(
            x=x.copy(),
            g=g,
            dg=dg,
            inv_g=inv_g,
            factor=factor,
            sigma=sigma,
            log_det_g=float(np.sum(np.log(g))),
            log_det_gram=log_det_gram,
        )
        self._cache[key] = entry
        self._cache_order.append(key)
        if len(self._cache_order) > 2:
            dead = self._cache_order.pop(0)
            self._cache.pop(dead, None)
        return entry

    # -- linear maps ----------------------------------------------------------

    def apply_W(self, cache, w):
        """M(x)^+ w = g^{-1} w - g^{-1} A^T (A g^{-1} A^T)^{-1} A g^{-1} w."""
        gw = cache.inv_g * w
        if self.m == 0:
            return gw
        y = cache.factor.solve(self.A.matvec(gw))
        return gw - cache.inv_g * self.A.matvec_t(y)

    # -- energies ---------------------------------------------------------

    def h1(self, cache):
        return float(self.alpha @ cache.x) + 0.5 * (
            cache.log_det_g + cache.log_det_gram
        )

    def h2(self, cache, v):
        return 0.5 * float(v @ self.apply_W(cache, v))

    def total_energy(self, cache, v):
        return self.h1(cache) + self.h2(cache, v)

    def grad_h1(self, cache):
        """alpha_k + (1 - sigma_k) dg_k / (2 g_k) for the separable barrier."""
        return self.alpha + 0.5 * (1.0 - cache.sigma) * cache.dg * cache.inv_g

    # -- dynamics ---------------------------------------------------------

    def dxdt(self, cache, v):
        return self.apply_W(cache, v)

    def dvdt_h2(self, cache, v):
        """1/2 Dg[dx/dt, dx/dt]; diagonal tensor, entries dg_k (dx/dt)_k^2 / 2."""
        w = self.apply_W(cache, v)
        return 0.5 * cache.dg * w * w

    # -- velocity ---------------------------------------------------------

    def sample_velocity(self, cache, rng):
        """v = g^{1/2} w, w standard normal.

        The distribution of (W v, h2) matches a N(0, M(x)) draw: both are
        invariant to shifting v by Range(A^T).
        """
        return np.sqrt(cache.g) * rng.standard_normal(self.n)

    def momentum_mix(self, cache, v_old, beta, rng):
        if not 0.0 <= beta <= 1.0:
            raise ValueError(f"momentum beta must lie in [0, 1], got {beta}")
        fresh = self.sample_velocity(cache, rng)
        return np.sqrt(beta) * v_old + np.sqrt(1.0 - beta) * fresh
