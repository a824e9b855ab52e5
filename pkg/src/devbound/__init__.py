"""Empirical certification of uniform deviation bounds for random matrices.

The library measures how far row-subgaussian linear maps deviate from their
expected scaling, uniformly over structured sets, and drives the downstream
guarantees that follow: conditioning of tall matrices, distance-preserving
projections, kernel escape, kernel-section radii, image radii, and
constrained least-squares error bounds.  Randomness is fully derived from
named substreams of one seed, so every experiment is replayable bit for bit.
"""

from .complexity import (
    EstimateCI,
    chi_mean,
    complexity_closed_form,
    gaussian_complexity_mc,
    gaussian_width_mc,
    sandwich_check,
    width_closed_form,
)
from .deviation import (
    DeviationReport,
    calibrate_local_constant,
    calibrate_tail_constant,
    expectation_sweep,
    local_check,
    one_sided_sweep,
    sample_star_probes,
    sup_deviation,
    tail_curve,
    wilson_interval,
)
from .ensembles import (
    FAMILIES,
    EnsembleSpec,
    MatrixSample,
    read_matrix_csv,
    row_psi2_bound,
    sample_matrix,
    scalar_psi2,
    whiten,
    write_matrix_csv,
)
from .geometry import (
    Ball2,
    FiniteCloud,
    GenericBallIntersect,
    GeoSet,
    L1Ball,
    L1BallSlice,
    Scaled,
    SparseVectors,
    Sphere,
    StarCloudSlice,
    StarHull,
    Subspace,
    SupportResult,
    UnsupportedOperation,
    ball_intersect,
    diff_cloud,
    parse_set,
    project_l1_ball,
    random_subspace_basis,
)
from .applications import (
    EscapeReport,
    ImageRadiusReport,
    JLReport,
    KernelSectionReport,
    SingularIntervalReport,
    escape_check,
    jl_embed,
    jl_global_bound,
    jl_local_bound,
    max_image_norm,
    min_image_norm,
    mstar_radius,
    random_image_radius,
    singular_interval_check,
)
from .recovery import (
    PhaseReport,
    SelectionReport,
    SolveResult,
    SolverOptions,
    calibrate_selection_constant,
    constrained_least_squares,
    error_diagnostics,
    model_selection_sweep,
    pava_nondecreasing,
    phase_transition,
    subspace_error_ratios,
)
from .tails import (
    OrliczEstimate,
    bernstein_bound,
    deviation_samples,
    increment_ratio,
    norm_concentration_check,
    orlicz_norm_empirical,
)

__version__ = "0.1.0"

__all__ = [
    "Ball2",
    "DeviationReport",
    "EnsembleSpec",
    "EscapeReport",
    "EstimateCI",
    "FAMILIES",
    "FiniteCloud",
    "GenericBallIntersect",
    "GeoSet",
    "ImageRadiusReport",
    "JLReport",
    "KernelSectionReport",
    "L1Ball",
    "L1BallSlice",
    "MatrixSample",
    "OrliczEstimate",
    "PhaseReport",
    "Scaled",
    "SelectionReport",
    "SingularIntervalReport",
    "SolveResult",
    "SolverOptions",
    "SparseVectors",
    "Sphere",
    "StarCloudSlice",
    "StarHull",
    "Subspace",
    "SupportResult",
    "UnsupportedOperation",
    "ball_intersect",
    "bernstein_bound",
    "calibrate_local_constant",
    "calibrate_selection_constant",
    "calibrate_tail_constant",
    "chi_mean",
    "complexity_closed_form",
    "constrained_least_squares",
    "deviation_samples",
    "diff_cloud",
    "error_diagnostics",
    "escape_check",
    "expectation_sweep",
    "gaussian_complexity_mc",
    "gaussian_width_mc",
    "increment_ratio",
    "jl_embed",
    "jl_global_bound",
    "jl_local_bound",
    "local_check",
    "max_image_norm",
    "min_image_norm",
    "model_selection_sweep",
    "mstar_radius",
    "norm_concentration_check",
    "one_sided_sweep",
    "orlicz_norm_empirical",
    "parse_set",
    "pava_nondecreasing",
    "phase_transition",
    "project_l1_ball",
    "random_image_radius",
    "random_subspace_basis",
    "read_matrix_csv",
    "row_psi2_bound",
    "sample_matrix",
    "sample_star_probes",
    "sandwich_check",
    "scalar_psi2",
    "singular_interval_check",
    "subspace_error_ratios",
    "sup_deviation",
    "tail_curve",
    "whiten",
    "width_closed_form",
    "wilson_interval",
    "write_matrix_csv",
]
