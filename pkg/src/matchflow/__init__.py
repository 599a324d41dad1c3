"""Dense optical flow from sparse matching, robust interpolation, and
variational refinement."""

__version__ = "0.1.0"

from .descriptors import (
    CensusDescriptor,
    SiftDescriptor,
    WHDescriptor,
    census_at,
    census_distance,
    sift_at,
    sift_distance,
    wh_at,
)
from .edges import EdgeMap, GeodesicParams, detect_edges, geodesic_distances, load_edges, save_edges
from .errors import (
    DegenerateFitError,
    FormatError,
    InterpolationImpossibleError,
    InvalidInputError,
    MatchflowError,
    OutOfBoundsError,
    PipelineStageError,
    UndefinedMetricError,
)
from .evaluate import EvalReport, epe, evaluate_pair, fl_outlier_rate, run_eval
from .filtering import (
    FilterParams,
    Match,
    MatchSet,
    consistency_check,
    region_filter,
    sparsify,
    two_pass_filter,
)
from .flow import FlowField
from .flowio import read_flo, read_kitti_png, visualize, write_flo, write_kitti_png
from .image import (
    Image,
    PyramidConfig,
    ScalePyramid,
    build_pyramid,
    load_image,
    sample_bilinear,
    save_image,
    to_cielab,
    to_gray,
)
from .interpolate import (
    AffineModel,
    InterpParams,
    RobustFit,
    assign_support,
    densify,
    fit_affine,
    interpolate,
    propagate_models,
    robust_model,
)
from .kdtree import KDTree, kd_nearest
from .matcher import (
    CostField,
    MatchingParams,
    alt_matching_params,
    init_coarsest,
    match_full,
    propagate_scale,
    upscale_flow,
)
from .pipeline import PipelineConfig, PipelineResult, config_from_preset, load_config, run_pipeline
from .superpixels import SuperpixelSegmentation, segment
from .variational import VariationalParams, build_mask, energy, refine

__all__ = [
    "AffineModel",
    "CensusDescriptor",
    "CostField",
    "DegenerateFitError",
    "EdgeMap",
    "EvalReport",
    "FilterParams",
    "FlowField",
    "FormatError",
    "GeodesicParams",
    "Image",
    "InterpParams",
    "InterpolationImpossibleError",
    "InvalidInputError",
    "KDTree",
    "Match",
    "MatchSet",
    "MatchflowError",
    "MatchingParams",
    "OutOfBoundsError",
    "PipelineConfig",
    "PipelineResult",
    "PipelineStageError",
    "PyramidConfig",
    "RobustFit",
    "ScalePyramid",
    "SiftDescriptor",
    "SuperpixelSegmentation",
    "UndefinedMetricError",
    "VariationalParams",
    "WHDescriptor",
    "alt_matching_params",
    "assign_support",
    "build_mask",
    "build_pyramid",
    "census_at",
    "census_distance",
    "config_from_preset",
    "consistency_check",
    "densify",
    "detect_edges",
    "energy",
    "epe",
    "evaluate_pair",
    "fit_affine",
    "fl_outlier_rate",
    "geodesic_distances",
    "init_coarsest",
    "interpolate",
    "kd_nearest",
    "load_config",
    "load_edges",
    "load_image",
    "match_full",
    "propagate_models",
    "propagate_scale",
    "read_flo",
    "read_kitti_png",
    "refine",
    "region_filter",
    "robust_model",
    "run_eval",
    "run_pipeline",
    "sample_bilinear",
    "save_edges",
    "save_image",
    "segment",
    "sift_at",
    "sift_distance",
    "sparsify",
    "to_cielab",
    "to_gray",
    "two_pass_filter",
    "upscale_flow",
    "visualize",
    "wh_at",
    "write_flo",
    "write_kitti_png",
    "__version__",
]
