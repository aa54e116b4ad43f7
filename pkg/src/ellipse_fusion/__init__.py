"""Fusing location estimates whose cross-estimate correlation is unknown."""

from .errors import (
    DomainError,
    EllipseFusionError,
    InfeasibleError,
    InsufficientInformationError,
    ValidationError,
)
from .fusion import (
    InflatedConvolver,
    fuse_convolve,
    fuse_convolve_inflated,
    fuse_max_entropy,
    fuse_structured,
)
from .gls import (
    Estimate,
    FusionResult,
    StackedSystem,
    alpha_metric,
    beta_metric,
    blue_covariance,
    gls_solve,
    power_covariance,
)
from .joint import (
    ComponentRule,
    CorrelationVector,
    SearchOptions,
    StructuredModel,
    build_joint,
    build_structured_joint,
    pairwise_max_vector,
    psd_conjecture_trial,
    search_rmax_vector,
)
from .linalg import (
    PsdReport,
    adjugate,
    check_psd,
    gaussian_entropy,
    pseudo_inverse,
    spd_product_sqrt,
    spd_sqrt,
)
from .pairwise import (
    PairwiseGeometry,
    RmaxResult,
    build_geometry,
    dP_inv_det_derivative,
    mismatch_covariance,
    pairwise_alpha,
    pairwise_beta,
    pairwise_precision,
    scalar_weights,
    solve_rmax,
)

__version__ = "0.1.0"
