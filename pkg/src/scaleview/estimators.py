"""scikit-learn style wrappers so scale recovery and SDF construction compose
with pipelines and parameter search.
"""

import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .depth_losses import cgt_loss, fit_scale
from .exceptions import DimensionMismatch, UniformMaskWarning
from .geometry import BevSpec, DistanceField, Se3Pose, camera_extrinsics, project_distance_field
from .layout_losses import signed_distance


def _as_stack(X, name="X"):
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise DimensionMismatch(f"{name} must be H x W or n x H x W, got shape {arr.shape}")
    return arr


class ScaleRecovery(TransformerMixin, BaseEstimator):
    """Recover the metric scale of up-to-scale depth maps from the ground plane.

    Parameters
    ----------
    intrinsics : CameraIntrinsics
        Camera of the depth maps; its size must match the depth maps.
    camera_height, pitch : float
        Rig geometry used when ``t_ego_cam`` is not given.
    t_ego_cam, t_bev_ego : Se3Pose, optional
        Explicit extrinsics.
    cells, extent_z : BEV grid definition.
    road_mask : (cells, cells) array, optional
        BEV cells allowed to transfer scale.

    Attributes
    ----------
    scale_ : float
        Pooled scale over all frames passed to ``fit``.
    field_ : DistanceField
    """

    def __init__(self, intrinsics=None, camera_height=1.65, pitch=0.0, t_ego_cam=None,
                 t_bev_ego=None, cells=256, extent_z=40.0, road_mask=None):
        self.intrinsics = intrinsics
        self.camera_height = camera_height
        self.pitch = pitch
        self.t_ego_cam = t_ego_cam
        self.t_bev_ego = t_bev_ego
        self.cells = cells
        self.extent_z = extent_z
        self.road_mask = road_mask

    def _field(self, shape):
        if self.intrinsics is None:
            raise ValueError("intrinsics must be set")
        spec = BevSpec(self.cells, self.extent_z, self.camera_height)
        t_ego_cam = self.t_ego_cam or camera_extrinsics(self.camera_height, self.pitch)
        return project_distance_field(spec, self.intrinsics, t_ego_cam,
                                      self.t_bev_ego or Se3Pose.identity(),
                                      self.road_mask, out_size=shape)

    def _pooled(self, depths, field):
        n = depths.shape[0]
        stacked = DistanceField(field.bev_z, np.tile(field.fv_z, (n, 1)), np.tile(field.fv_mask, (n, 1)))
        return depths.reshape(-1, depths.shape[2]), stacked

    def fit(self, X, y=None):
        depths = _as_stack(X)
        self.field_ = self._field(depths.shape[1:])
        d, f = self._pooled(depths, self.field_)
        self.scale_ = fit_scale(d, f)
        return self

    def transform(self, X):
        check_is_fitted(self, "scale_")
        out = _as_stack(X) * self.scale_
        return out[0] if np.ndim(X) == 2 else out

    def score(self, X, y=None):
        """Negative CGT loss of the rescaled depths (higher is better)."""
        check_is_fitted(self, "scale_")
        d, f = self._pooled(_as_stack(X) * self.scale_, self.field_)
        return -cgt_loss(d, f)


class SignedDistanceTransformer(TransformerMixin, BaseEstimator):
    """Map binary layouts to signed distance maps (stateless).

    Uniform layouts have no boundary; their SDF is filled with
    ``uniform_fill`` times the sign (``inf`` keeps them out of losses).
    """

    def __init__(self, uniform_fill=np.inf):
        self.uniform_fill = uniform_fill

    def fit(self, X, y=None):
        _as_stack(X)
        return self

    def transform(self, X):
        masks = _as_stack(X)
        out = np.empty_like(masks)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UniformMaskWarning)
            for i, m in enumerate(masks):
                sdf = signed_distance(m.astype(np.uint8))
                out[i] = np.sign(sdf.values) * self.uniform_fill if sdf.uniform else sdf.values
        return out[0] if np.ndim(X) == 2 else out
