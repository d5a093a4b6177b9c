"""CT volume ensemble fusion and clinical scoring toolkit."""

from .clinical import (
    CtClass,
    CtThresholds,
    Dynamics,
    LesionShareReport,
    ct_class,
    dynamics,
    fit_ct_thresholds,
    lesion_share,
    quantize_share,
    stratified_two_fold_split,
)
from .dicom import parse_dicom_series
from .errors import CtFusionError
from .evaluation import (
    ComparisonRow,
    PanelConfig,
    StudyCase,
    accuracy,
    dice,
    fit_panel_bias_thresholds,
    iou,
    leave_one_out_study,
    mae_me,
    paired_permutation_test,
    panel_ground_truth,
    panel_share_truth,
)
from .fusion import (
    FusionConfig,
    ProjectionWeights,
    SubsetSearchConfig,
    fit_projection_weights,
    fuse_families,
    mean_ensemble,
    merge_projections,
    score_fusion,
    select_best_subset,
    unanimous_vote,
)
from .models import (
    ModelFamily,
    ModelPrediction,
    RegionGrowConfig,
    load_predictions,
    reference_region_grow,
)
from .overlay import write_overlay_image
from .preprocess import (
    Axis,
    PlaneStack,
    ZScoreStats,
    assemble_projection,
    compute_zscore_stats,
    extract_projection,
    normalize_lung_window,
    normalize_zscore,
    resize_with_coords,
    to_hounsfield,
)
from .sidecar import read_raw_volume, write_raw_volume
from .study import build_study_report, load_study, render_text_report
from .synth import (
    Phantom,
    PhantomSpec,
    RaterSpec,
    emit_study,
    make_phantom,
    simulate_model,
    simulate_rater,
    write_dicom_series,
)
from .volumes import BinaryMask, CtVolume, ProbabilityVolume, UnitState

__version__ = "0.1.0"

__all__ = [
    "Axis",
    "BinaryMask",
    "ComparisonRow",
    "CtClass",
    "CtFusionError",
    "CtThresholds",
    "CtVolume",
    "Dynamics",
    "FusionConfig",
    "LesionShareReport",
    "ModelFamily",
    "ModelPrediction",
    "PanelConfig",
    "Phantom",
    "PhantomSpec",
    "PlaneStack",
    "ProbabilityVolume",
    "ProjectionWeights",
    "RaterSpec",
    "RegionGrowConfig",
    "StudyCase",
    "SubsetSearchConfig",
    "UnitState",
    "ZScoreStats",
    "accuracy",
    "assemble_projection",
    "build_study_report",
    "compute_zscore_stats",
    "ct_class",
    "dice",
    "dynamics",
    "emit_study",
    "extract_projection",
    "fit_ct_thresholds",
    "fit_panel_bias_thresholds",
    "fit_projection_weights",
    "fuse_families",
    "iou",
    "leave_one_out_study",
    "lesion_share",
    "load_predictions",
    "load_study",
    "mae_me",
    "make_phantom",
    "mean_ensemble",
    "merge_projections",
    "normalize_lung_window",
    "normalize_zscore",
    "paired_permutation_test",
    "panel_ground_truth",
    "panel_share_truth",
    "parse_dicom_series",
    "quantize_share",
    "read_raw_volume",
    "reference_region_grow",
    "render_text_report",
    "resize_with_coords",
    "score_fusion",
    "select_best_subset",
    "simulate_model",
    "simulate_rater",
    "stratified_two_fold_split",
    "to_hounsfield",
    "unanimous_vote",
    "write_dicom_series",
    "write_overlay_image",
    "write_raw_volume",
]
