"""Scale-aware monocular depth/pose and BEV layout toolkit.

Ground-plane geometry that turns a metric bird's-eye-view distance field into
per-pixel front-view depths, the self-supervised losses built on it, a
cross-view attention module, evaluation metrics and a synthetic benchmark.
"""

from .cct import CctWeights, cct_cm, cct_cv, cct_forward, cct_fuse
from .config import (DepthEvalConfig, DepthPoseLossConfig, LayoutLossConfig, ToolkitConfig,
                     default_config_json, load_config)
from .depth_losses import (batch_cgt_loss, cgt_loss, depth_pose_objective, fit_scale, min_reprojection,
                           photometric_error, reprojection_loss, smoothness_loss, ssim)
from .estimators import ScaleRecovery, SignedDistanceTransformer
from .exceptions import (DegenerateHomography, DegenerateUnionWarning, DimensionMismatch, EmptyMaskWarning,
                         EmptyValidRegion, InvalidPose, NonFiniteValue, NonPositiveDepth, NoValidPixels,
                         ScaleviewError, ShapeMismatch, TrajectoryTooShort, UniformMaskWarning)
from .geometry import (BevSpec, CameraIntrinsics, DistanceField, Se3Pose, build_distance_field,
                       build_homography, camera_extrinsics, project_distance_field)
from .gradcheck import check_gradient, gradient_suite
from .layout_losses import (LayoutGrid, SdfMap, boundary_loss, hybrid_loss, signed_distance,
                            soft_iou_loss, total_layout_loss, wbce_loss)
from .metrics import (MetricsReport, aggregate_depth_metrics, average_precision, depth_metrics,
                      layout_metrics, odometry_drift)
from .synth import SyntheticScene, render_scene, scale_recovery_experiment
from .warping import bilinear_sample, warp_image

__version__ = "0.1.0"
