"""Three-stage implicit midpoint step: half-kick on h1, implicit midpoint on h2,
half-kick on h1.

Stage 2 solves the implicit midpoint equations by fixed-point iteration,
preconditioned with the Cholesky factor of A g^{-1} A^T held at the step's
starting point.  Every failure mode (iteration cap, loss of feasibility,
non-finite values) is reported as ``converged=False`` and consumed by the
sampler as a Metropolis rejection; nothing here is fatal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InfeasiblePointError
from .hamiltonian import PhaseState


@dataclass
class ImmResult:
    x1: np.ndarray
    v1: np.ndarray
    converged: bool
    fixed_point_iters: int
    final_residual: float


def default_tol(oracle, cache, v):
    """1e-10 (1 + |v|_{g^{-1}}) at the step's starting metric."""
    return 1e-10 * (1.0 + float(np.sqrt(np.sum(v * v * cache.inv_g))))


def imm_step(oracle, state, h, max_iters=20, tol=None, fixed_iters=None):
    """One reversible step of size h from ``state``.

    Stage 2 stops when the mixed-norm change between successive iterates
    (position in |.|_{g}, velocity and A^T nu in |.|_{g^{-1}}, all at the
    starting point) drops below ``tol``, or after exactly ``fixed_iters``
    iterations when that is given.
    """
    cache0 = oracle.refresh_cache(state.x)
    g0, inv_g0 = cache0.g, cache0.inv_g
    if tol is None:
        tol = default_tol(oracle, cache0, state.v)

    # stage 1: half-kick on h1
    v13 = state.v - 0.5 * h * oracle.grad_h1(cache0)
    x13 = state.x

    # stage 2: fixed point of the midpoint map, factor at x as preconditioner
    barrier = oracle.barrier
    A = oracle.A
    m = oracle.m
    x23 = x13.copy()
    v23 = v13.copy()
    nu = np.zeros(m)
    guard_used = False
    converged = False
    residual = np.inf
    iters = 0
    for _ in range(max_iters):
        iters += 1
        x_mid = 0.5 * (x13 + x23)
        v_mid = 0.5 * (v13 + v23)
        try:
            g_mid = barrier.hessian_diag(x_mid)
            dg_mid = barrier.hessian_deriv_diag(x_mid)
        except InfeasiblePointError:
            return ImmResult(state.x, state.v, False, iters, residual)
        nu_prev = nu
        if m > 0:
            nu = nu + cache0.factor.solve(A.matvec((v_mid - A.matvec_t(nu)) / g_mid))
            w = (v_mid - A.matvec_t(nu)) / g_mid
        else:
            w = v_mid / g_mid
        x23_new = x13 + h * w
        v23_new = v13 + 0.5 * h * dg_mid * w * w
        if not (np.all(np.isfinite(x23_new)) and np.all(np.isfinite(v23_new))):
            return ImmResult(state.x, state.v, False, iters, residual)
        if not barrier.contains(x23_new):
            if guard_used:
                return ImmResult(state.x, state.v, False, iters, residual)
            guard_used = True
            d = x23_new - x13
            t_max = barrier.step_to_boundary(x13, d)
            x23_new = x13 + 0.99 * min(t_max, 1.0) * d
        dx = x23_new - x23
        dv = v23_new - v23
        residual = float(
            np.sqrt(np.sum(g0 * dx * dx)) + np.sqrt(np.sum(inv_g0 * dv * dv))
        )
        if m > 0:
            dnu = A.matvec_t(nu - nu_prev)
            residual += h * float(np.sqrt(np.sum(inv_g0 * dnu * dnu)))
        x23, v23 = x23_new, v23_new
        if fixed_iters is not None:
            if iters >= fixed_iters:
                converged = True
                break
        elif residual <= tol:
            converged = True
            break
    if not converged:
        return ImmResult(state.x, state.v, False, iters, residual)

    # stage 3: half-kick on h1 at the new position
    try:
        cache1 = oracle.refresh_cache(x23)
    except InfeasiblePointError:
        return ImmResult(state.x, state.v, False, iters, residual)
    v1 = v23 - 0.5 * h * oracle.grad_h1(cache1)
    x1 = x23
    if m > 0 and float(np.max(np.abs(A.matvec(x1) - oracle.b))) > 1e-8:
        return ImmResult(state.x, state.v, False, iters, residual)
    return ImmResult(x1, v1, True, iters, residual)


def null_space_basis(A_dense, m):
    """Orthonormal basis of Null(A) via SVD; identity when there are no rows."""
    n = A_dense.shape[1]
    if m == 0:
        return np.eye(n)
    _, s, vt = np.linalg.svd(A_dense, full_matrices=True)
    rank = int(np.sum(s > 1e-12 * s.max()))
    return vt[rank:].T


def jacobian_probe(oracle, state, h, eps=1e-5):
    """Finite-difference |det| of the step restricted to the reduced phase space.

    Positions are perturbed within Null(A); velocities are probed along the
    same basis and read back through it (the dynamics are invariant modulo
    Range(A^T)).  Test helper only; the sampler never calls this.
    """
    U = null_space_basis(oracle.A.to_dense(), oracle.m)
    k = U.shape[1]
    dim = 2 * k

    def run(x, v):
        res = imm_step(oracle, PhaseState(x, v), h, max_iters=80, tol=1e-13)
        if not res.converged:
            raise RuntimeError("jacobian probe requires a converged step")
        return np.concatenate([U.T @ res.x1, U.T @ res.v1])

    J = np.zeros((dim, dim))
    for i in range(dim):
        dx = np.zeros(oracle.n)
        dv = np.zeros(oracle.n)
        if i < k:
            dx = eps * U[:, i]
        else:
            dv = eps * U[:, i - k]
        fp = run(state.x + dx, state.v + dv)
        fm = run(state.x - dx, state.v - dv)
        J[:, i] = (fp - fm) / (2 * eps)
    return abs(float(np.linalg.det(J)))
