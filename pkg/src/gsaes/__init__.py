"""Scene-level aesthetic score regression on 3D Gaussian Splatting primitives.

The package covers the full pipeline: scene and camera ingestion, geometric
preprocessing, the selector-fusion-regressor model, its training objective
and loop, the evaluation protocol, and annotation aggregation, plus a
synthetic scene generator for desk-scale verification.
"""

__version__ = "0.1.0"

from .annotation import (
    ATTRIBUTES,
    SceneLabel,
    ViewLevelAnnotation,
    aggregate_scene_score,
    build_attribute_prompt,
)
from .geometry import (
    SceneNormalization,
    assign_to_grid,
    fps_subsample,
    normalize_scene,
    project_point,
    select_candidate_views,
)
from .ingest import (
    CameraView,
    GaussianScene,
    load_camera_manifest,
    parse_gaussian_ply,
    sh_dc_to_rgb,
    write_gaussian_ply,
)
from .losses import LossConfig, huber, rank_loss, rank_pairs, total_loss
from .metrics import (
    MetricsReport,
    aggregate_seed_runs,
    compute_metrics,
    kendall,
    linear_calibration,
    logistic_fit_plcc,
    mae,
    pearson,
    rmse,
    spearman,
    trivial_predictor,
)
from .model import (
    ModelConfig,
    SceneAestheticRegressor,
    SceneBatch,
    count_parameters,
    featurize_primitives,
    topk_weights,
)
from .training import (
    SceneSample,
    TrainConfig,
    assemble_sample,
    grad_check,
    make_split,
    train,
)
