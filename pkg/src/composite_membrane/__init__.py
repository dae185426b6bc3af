"""Composite membrane eigenvalue optimization on uniform grids."""

from .geometry import DomainSpec, GridDomain, DegenerateGridError, rasterize, measure, read_mask_file
from .discretization import Field, SymmetricSparseOperator, assemble, quadrature_inner, rayleigh_quotient
from .eigensolver import (
    EigenConvergenceError,
    EigenResult,
    NonPerronError,
    second_eigenvalue,
    smallest_eigenpair,
)
from .optimizer import (
    Configuration,
    DegenerateAreaError,
    OptimizationResult,
    find_alpha_bar,
    multistart,
    optimize,
    select_sublevel,
)
from .analysis import (
    BaseEigenpair,
    InvariantViolation,
    base_eigenpair,
    check_nesting,
    check_perturbation_bounds,
    convexity_check,
    estimate_exceptional_set,
    extract_free_boundary,
    lobe_containment,
    monotonicity_probe,
    symmetry_metrics,
)

__version__ = "0.1.0"
