"""Elliptic solves on irregular planar domains: measure data, capacity
density diagnostics and periodic homogenization studies.
"""

from .capacity import (
    CondenserSpec,
    cdc_ratio,
    cdc_scan,
    hardy_constant,
    hardy_refinement_study,
    uniform_perfectness_scan,
    variational_capacity,
    vdc_ratio,
    vdc_scan,
    verify_strong_barrier,
)
from .elliptic import (
    CoefficientField,
    DirichletSystem,
    FieldSolution,
    assemble,
    discrete_energy,
    load_vector,
    solve,
    solve_poisson,
)
from .errors import (
    CdchError,
    DegenerateCondenser,
    EllipticityViolation,
    EmptyInterior,
    InvalidParams,
    InvalidSpec,
    NoConvergence,
    UnderResolved,
)
from .experiments import (
    convergence_study,
    first_order_expansion,
    hoelder_estimate_study,
    hoelder_seminorm,
    radial_example,
)
from .geometry import DomainGrid, DomainSpec, build_grid, distance_field, interior_subdomain
from .homogenize import (
    PeriodicCoefficient,
    flux_corrector,
    homogenized_matrix,
    oscillating_coefficient,
    solve_cell,
    solve_cell_problem,
)
from .measures import MeasureSpec, MeasureTerm, ball_mass, morrey_norm, truncate

__version__ = "0.1.0"

__all__ = [
    "CdchError",
    "CoefficientField",
    "CondenserSpec",
    "DegenerateCondenser",
    "DirichletSystem",
    "DomainGrid",
    "DomainSpec",
    "EllipticityViolation",
    "EmptyInterior",
    "FieldSolution",
    "InvalidParams",
    "InvalidSpec",
    "MeasureSpec",
    "MeasureTerm",
    "NoConvergence",
    "PeriodicCoefficient",
    "UnderResolved",
    "assemble",
    "ball_mass",
    "build_grid",
    "cdc_ratio",
    "cdc_scan",
    "convergence_study",
    "discrete_energy",
    "distance_field",
    "first_order_expansion",
    "flux_corrector",
    "hardy_constant",
    "hardy_refinement_study",
    "hoelder_estimate_study",
    "hoelder_seminorm",
    "homogenized_matrix",
    "interior_subdomain",
    "load_vector",
    "morrey_norm",
    "oscillating_coefficient",
    "radial_example",
    "solve",
    "solve_cell",
    "solve_cell_problem",
    "solve_poisson",
    "truncate",
    "uniform_perfectness_scan",
    "variational_capacity",
    "vdc_ratio",
    "vdc_scan",
    "verify_strong_barrier",
]
