"""Logarithmic Laplacian (-Delta + m) ln(-Delta + m) on discretized closed manifolds."""

from .calculus import Kind, OperatorSpec, apply, bootstrap_apply, project, solve_direct, spectral_multiplier
from .calderon import (
    CauchyData,
    ManifoldPair,
    MomentReport,
    ObservationSet,
    Trajectory,
    difference_trajectory,
    hardy_check,
    make_cauchy_data,
    moment_decay_report,
    moment_integrals,
    recover_heat_kernel_equality,
)
from .manifold import (
    Field,
    SpectralManifold,
    build_circle,
    build_flat_torus,
    build_weighted_graph,
    inner_product,
)
from .quadrature import QuadratureScheme
from .semigroup import (
    check_gaussian_bound,
    frac_power_via_quadrature,
    heat_kernel,
    log_via_derivative,
    log_via_quadrature,
    semigroup_apply,
)

__version__ = "0.1.0"
