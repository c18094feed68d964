"""Deformable 3D shape recovery from noisy 2D tracks with closed-form
per-element uncertainty, a noise-aware exact-rank search, a Monte Carlo
calibration harness, and uncertainty-weighted sub-trajectory fusion.
"""

from .errors import (
    CoverageError,
    DegenerateAlignmentError,
    DegenerateSampleError,
    DimensionError,
    IoError,
    ManifestError,
    NrsfmUqError,
    NumericalError,
    ParseError,
    SpecError,
    TrialError,
)
from .model import (
    NoiseModel,
    RearrangedShape,
    RotationStack,
    ShapeMatrix,
    TrackMatrix,
    center_shape,
    center_tracks,
    inverse_rearrange,
    mean_3d_error,
    project,
    rearrange,
)
from .synth import SceneSpec, SyntheticScene, add_noise, generate, orbit_rotations
from .solver import SolveReport, SolverConfig, default_mu, noise_scaled_mu, objective, solve, svt
from .rank_search import RankSearchResult, numerical_rank, search_rank, truncate_rank
from .uncertainty import (
    FactorPair,
    UncertaintyField,
    covariance,
    error_ellipse,
    factorize,
    leverage_field,
    rectify,
)
from .stats import McConfig, McReport, normal_quantile, qq_series, run_monte_carlo, shapiro_wilk
from .fusion import FusedResult, SegmentPlan, fuse, fuse_average, plan_segments, run_segmented

__version__ = "0.1.0"

__all__ = [
    "CoverageError",
    "DegenerateAlignmentError",
    "DegenerateSampleError",
    "DimensionError",
    "IoError",
    "ManifestError",
    "NrsfmUqError",
    "NumericalError",
    "ParseError",
    "SpecError",
    "TrialError",
    "NoiseModel",
    "RearrangedShape",
    "RotationStack",
    "ShapeMatrix",
    "TrackMatrix",
    "center_shape",
    "center_tracks",
    "inverse_rearrange",
    "mean_3d_error",
    "project",
    "rearrange",
    "SceneSpec",
    "SyntheticScene",
    "add_noise",
    "generate",
    "orbit_rotations",
    "SolveReport",
    "SolverConfig",
    "default_mu",
    "noise_scaled_mu",
    "objective",
    "solve",
    "svt",
    "RankSearchResult",
    "numerical_rank",
    "search_rank",
    "truncate_rank",
    "FactorPair",
    "UncertaintyField",
    "covariance",
    "error_ellipse",
    "factorize",
    "leverage_field",
    "rectify",
    "McConfig",
    "McReport",
    "normal_quantile",
    "qq_series",
    "run_monte_carlo",
    "shapiro_wilk",
    "FusedResult",
    "SegmentPlan",
    "fuse",
    "fuse_average",
    "plan_segments",
    "run_segmented",
]
