"""Numerical laboratory for dead-core free boundaries of the
reaction-diffusion infinity-Laplace equation."""

__version__ = "0.1.0"

from .grid import (
    DIRICHLET,
    EXTERIOR,
    INTERIOR,
    DomainMask,
    GridSpec,
    InvalidGeometryError,
    ScalarField,
    StencilSet,
    ball_mask,
    make_grid,
    stencil_directions,
)
from .operators import (
    MaskedRayError,
    SlopeExtremes,
    apply_operator,
    discrete_inf_laplacian,
    residual,
    slope_extremes,
)
from .radial import (
    DegenerateSourceError,
    RadialDeadCoreSolution,
    RadialProfile,
    beta_exponent,
    exact_profile,
    field_from_solution,
    plateau_radius,
    quadrature_profile,
    upsilon,
    verify_ansatz,
)
from .solver import (
    BracketFailureError,
    PreconditionError,
    SolveOptions,
    SolveReport,
    node_update,
    solve_dirichlet,
)
from .sources import (
    BORDERLINE,
    LOWER_GROWTH,
    MONOTONE,
    UPPER_GROWTH,
    CombinedSource,
    ConditionReport,
    CubicSource,
    ExpMinusOneSource,
    LogOnePlusCubeSource,
    LogOnePlusSquareSource,
    PowerSource,
    SourceDomainError,
    SourceTerm,
    SpatiallyScaledSource,
    ZeroSource,
    check_condition,
    check_monotone,
    make_source,
)
