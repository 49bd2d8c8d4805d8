"""Instance-based active-learning selection engine and campaign simulator."""

from .records import (
    Box2D,
    CameraModel,
    Dataset,
    GroundTruthObject,
    InstanceRecord,
    ViewSpec,
    validate_dataset,
)
from .dataio import DatasetError, load_dataset, write_dataset
from .geometry import (
    MatchResult,
    Radius2D,
    associate_ensemble,
    iou_2d,
    labeling_radius,
    match_request,
    suppress_duplicate,
)
from .features import (
    FusedCosineMetric,
    PcaModel,
    cosine_distance,
    fused_distance,
    pca_fit,
    pca_transform,
)
from .selection import (
    DepthFilters,
    SelectionRequest,
    StrategyConfig,
    coreset_score,
    coreset_select,
    image_level_select,
    select_confidence,
    select_depth_extreme,
    select_ens_depth_var,
    select_random,
)
from .simulation import (
    CampaignConfig,
    MaskGrid,
    RoundLog,
    RoundState,
    SyntheticSpec,
    bagging_fraction,
    build_class_mask,
    covering_radius,
    generate_synthetic,
    masked_pointwise_loss,
    run_campaign,
    run_round,
    sample_bagged_labels,
    sample_loss_weights,
)
from .metrics import Curve, CurvePoint, accounting_x, aurc_segment, interpolate_at_budget, naurc

__version__ = "0.1.0"
