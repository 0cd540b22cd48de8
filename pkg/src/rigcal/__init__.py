"""rigcal: multi-camera rig extrinsic refinement against depth-map geometry.

The library refines the extrinsics of an N-camera rig by jointly
minimizing cross-view depth-transfer consistency and multi-view triplet
cycle consistency, and ships a synthetic rig simulator with exact ground
truth for end-to-end verification. See the README for the CLI and file
formats.
"""

from .dataset import CameraRecord, CameraRig, EstimateFile, load_estimate, load_rig, save_estimate, save_rig
from .geometry import (
    CameraIntrinsics,
    RigidTransform,
    TangentVector,
    backproject,
    compose,
    exp_se3,
    inverse,
    log_se3,
    project,
    relative_transform,
    sample_depth,
)
from .metrics import (
    CalibrationReport,
    ablation_summary,
    gauge_align,
    report_errors,
    rotation_error_deg,
    translation_error_mm,
)
from .optimizer import OptimizerConfig, OptResult, refine, solve_normal_equations
from .residuals import (
    ObjectiveConfig,
    ResidualBlock,
    SampledPoint,
    cycle_residual,
    geo_residual,
    sample_cycle_points,
    sample_geo_correspondences,
    total_objective,
)
from .simulator import (
    NoiseModel,
    RigLayout,
    Scene,
    cast_ray,
    covisible_fraction,
    default_layout,
    default_scene,
    generate_dataset,
    perturb_rig,
    render_depth,
)

__version__ = "0.1.0"
