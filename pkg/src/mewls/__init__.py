"""Robust bivariate B-spline regression via maximum-entropy weighting.

Fits tensor-product spline surfaces to noisy, outlier-contaminated data by
jointly solving for control points, a Lagrange multiplier and an
entropy-maximal weight distribution, then applies the weights to outlier
detection and image restoration.
"""

from ._kernels import BACKEND
from .bspline import (
    ControlNet,
    Dataset,
    DesignMatrix,
    KnotVector,
    SurfaceSpec,
    basis_values,
    clamped_knots,
    design_matrix,
    design_matrix_scattered,
    design_matrix_structured,
    eval_surface,
    expand_closed_net,
    extract_free_net,
    fold_design_columns,
    scattered_data,
    structured_data,
    uniform_knots,
)
from .data import (
    SyntheticConfig,
    cv_mse,
    franke,
    generate_franke_dataset,
    generate_sphere_dataset,
    remap_to_validity,
)
from .diagnostics import (
    ConvergenceReport,
    JacobianBlocks,
    entropy,
    jacobian_blocks,
    ols_constraint_slope,
    spectral_radius,
    weight_iteration_matrix,
)
from .errors import (
    ConfigError,
    DegenerateResidualsError,
    DomainError,
    InfeasibleTargetError,
    InvalidInputError,
    IterationError,
    MewlsError,
    SingularSystemError,
)
from .image import (
    BoxCountResult,
    ImageGrid,
    box_counting_dimension,
    fit_image,
    image_to_dataset,
    mask_boundary,
    outlier_mask,
    restore_image,
    roi_contours,
    weight_grid,
)
from .solver import (
    ContinuationSchedule,
    FitReport,
    MewlsState,
    continuation_fit,
    gauss_seidel_fit,
    mse_constraint,
    mse_constraint_slope,
    softmax_weights,
    solve_multiplier,
)
from .wls import residual_sq_norms, solve_wls, weighted_mse

__version__ = "0.1.0"
