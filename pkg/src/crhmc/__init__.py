"""Constrained Riemannian Hamiltonian Monte Carlo over {Ax = b, l <= x <= u}.

Samples densities exp(-alpha' x) (uniform for alpha = 0) with a barrier
Hessian metric, sparse Cholesky factorizations, selected-inverse leverage
scores, and an implicit midpoint integrator, preserving sparsity end to end.
"""

from .barrier import BoxBarrier
from .diagnostics import (
    EssReport,
    ess,
    ks_statistic,
    mixing_entry,
    mixing_report,
    thin_twice,
    uniformity_radii,
    uniformity_statistic,
)
from .errors import (
    InfeasiblePointError,
    ModelInfeasibleError,
    NotPositiveDefiniteError,
    NumericalFailureError,
)
from .hamiltonian import HamiltonianOracle, PhaseState
from .integrator import ImmResult, imm_step, jacobian_probe
from .models import (
    PolytopeModel,
    birkhoff,
    hypercube,
    load_model,
    load_samples,
    save_model,
    save_samples,
    simplex,
)
from .preprocess import TransformRecord, analytic_center, lift_samples, rescale, simplify
from .sampler import (
    ChainStats,
    SampleBatch,
    SamplerConfig,
    baseline_char_step,
    chain_rng,
    mcmc_step,
    run_chain,
    run_char_chain,
)
from .sparse import (
    CholeskyFactor,
    SelectedInverse,
    SparseMatrix,
    cholesky_factorize,
    dependent_rows,
    leverage_scores,
    selected_inverse,
    solve,
)

__version__ = "0.1.0"
