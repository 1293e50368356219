"""Numerical toolkit for Hamilton-Jacobi equations on cones of non-negative
measures: dyadic projections, kernel energies, a monotone Lipschitz
Hamiltonian extension, a monotone grid solver, Hopf-Lax variational solvers,
and convergence/invariance harnesses."""

from .measures import (
    DiscreteMeasure,
    DyadicGrid,
    MeasureSpec,
    coarsen,
    delta,
    dyadic_grid,
    lift,
    norm_l1,
    norm_l1_star,
    project_measure,
    tv_distance,
    uniform,
    wasserstein,
)
from .kernels import (
    Kernel,
    KernelMatrix,
    check_lower_bound,
    check_nonneg_definite,
    g_mu,
    kernel,
    kernel_cauchy_schwarz_check,
    kernel_matrix,
    pair_energy,
    quadratic_energy,
    translate,
)
from .hamiltonian import (
    ConeDecomposition,
    ExtendedHamiltonian,
    cone_decompose,
    evaluate,
    evaluate_batch,
    extended_hamiltonian,
    lipschitz_audit,
    regularized_c,
)
from .initial import (
    InitialCondition,
    initial_from_config,
    linear_form,
    linear_functional,
    raw_functional,
    softmin_functional,
)
from .grid_solver import (
    GridSolution,
    LatticeDomain,
    SchemeError,
    grid_solution_csv,
    lipschitz_profile,
    query,
    solve,
    step_once,
)
from .hopflax import (
    HopfLaxResult,
    first_order_residual,
    hopf_lax_finite,
    hopf_lax_measure,
    semigroup_residual,
)
from .limits import (
    ConvergenceReport,
    RIndependenceResult,
    b_invariance,
    bidual_sanity,
    distance_like,
    error_envelope,
    gradient_in_set_check,
    k_convergence,
    r_independence,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
