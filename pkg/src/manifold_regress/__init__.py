"""Extrinsic kernel regression for manifold-valued responses.

Responses on the sphere, planar shape space, Stiefel and Grassmann
manifolds are embedded in a Euclidean space, smoothed there with kernel
weights and projected back onto the embedded image.
"""

from .errors import (
    AntipodalPoints,
    DataError,
    DimensionMismatch,
    EmptyNeighborhood,
    InvalidPoint,
    ManifoldRegressError,
    NonConvergence,
    NumericalError,
    ProjectionError,
    RankDeficientDesign,
)
from .kernels import GAUSSIAN, Bandwidth, KernelSpec, kernel_weights
from .manifolds import (
    Grassmann,
    Manifold,
    PlanarShape,
    Sphere,
    Stiefel,
    embed,
    great_circle,
    intrinsic_distance,
    project,
    shape_from_landmarks,
)
from .regression import (
    Dataset,
    FitConfig,
    IntrinsicConfig,
    Prediction,
    extrinsic_kernel_predict,
    extrinsic_median_predict,
    grassmann_dim_estimate,
    intrinsic_sphere_predict,
    local_polynomial_predict,
    predict,
    predict_batch,
    weighted_geometric_median,
)
from .selection import DEFAULT_GRID, CvPlan, CvReport, cross_validate, mse_metrics

__version__ = "0.1.0"
