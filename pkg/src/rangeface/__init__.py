"""Occlusion-robust 3D face processing on range images.

The pipeline: weighted-median smoothing, ICP rigid registration against a
mean-face model, depth-difference occlusion detection, gappy subspace
restoration of the occluded parts, surface-normal features, and rank-k
identification.
"""

from .config import PipelineConfig, load_config, save_config
from .core import (
    OcclusionMask,
    PointCloud,
    RangeImage,
    RigidTransform,
    apply_transform,
    cloud_to_range_image,
    range_image_to_cloud,
)
from .errors import (
    DatasetError,
    DegenerateGeometryError,
    EmptyInputError,
    NumericalError,
    PointCloudParseError,
    RangefaceError,
    RankDeficiencyError,
    UnderdeterminedFitError,
    ValidationError,
)
from .features import NormalMap, feature_vector, pca_coefficient_vector, surface_normals
from .occlusion import (
    DifferenceMap,
    ThresholdProfile,
    apply_mask,
    difference_map,
    find_edges,
    find_threshold_mask,
)
from .pipeline import (
    detect_against_reference,
    mask_iou,
    project_to_image,
    run_experiment,
    run_experiment_on_scans,
    strip_timings,
)
from .preprocess import MedianFilterConfig, weighted_median_filter
from .recognition import (
    ClassifierConfig,
    EvaluationReport,
    LabeledFeature,
    MlpConfig,
    OcclusionKind,
    classify,
    evaluate,
    load_model,
    save_model,
    split_dataset,
    train,
)
from .registration import IcpConfig, IcpResult, icp
from .restoration import (
    GappyCoefficients,
    PcaBasis,
    gappy_fit,
    load_basis,
    reconstruct,
    restore_face,
    save_basis,
    train_pca,
)
from .dataset_io import (
    generate_synthetic_dataset,
    load_dataset,
    load_manifest,
    load_mask,
    load_point_cloud,
    load_range_image,
    save_mask,
    save_point_cloud,
    save_range_image,
)

__version__ = "0.1.0"

__all__ = [
    "ClassifierConfig",
    "DatasetError",
    "DegenerateGeometryError",
    "DifferenceMap",
    "EmptyInputError",
    "EvaluationReport",
    "GappyCoefficients",
    "IcpConfig",
    "IcpResult",
    "LabeledFeature",
    "MedianFilterConfig",
    "MlpConfig",
    "NormalMap",
    "NumericalError",
    "OcclusionKind",
    "OcclusionMask",
    "PcaBasis",
    "PipelineConfig",
    "PointCloud",
    "PointCloudParseError",
    "RangeImage",
    "RangefaceError",
    "RankDeficiencyError",
    "RigidTransform",
    "ThresholdProfile",
    "UnderdeterminedFitError",
    "ValidationError",
    "apply_mask",
    "apply_transform",
    "classify",
    "cloud_to_range_image",
    "detect_against_reference",
    "difference_map",
    "evaluate",
    "feature_vector",
    "find_edges",
    "find_threshold_mask",
    "gappy_fit",
    "generate_synthetic_dataset",
    "icp",
    "load_basis",
    "load_config",
    "load_dataset",
    "load_manifest",
    "load_mask",
    "load_model",
    "load_point_cloud",
    "load_range_image",
    "mask_iou",
    "pca_coefficient_vector",
    "project_to_image",
    "range_image_to_cloud",
    "reconstruct",
    "restore_face",
    "run_experiment",
    "run_experiment_on_scans",
    "save_basis",
    "save_config",
    "save_mask",
    "save_model",
    "save_point_cloud",
    "save_range_image",
    "split_dataset",
    "strip_timings",
    "surface_normals",
    "train",
    "train_pca",
    "weighted_median_filter",
    "__version__",
]
