"""Synthetic flat-road scenes with analytic depth for end-to-end checks.

Rendering intersects each pixel ray with the world ground plane ``z = 0``
directly; it never goes through the BEV homography, so it serves as an
independent route for verifying :func:`~scaleview.geometry.project_distance_field`.
"""

from dataclasses import dataclass, field

import numpy as np

from .config import DepthEvalConfig
from .depth_losses import cgt_loss, fit_scale
from .exceptions import ScaleviewError
from .geometry import BevSpec, CameraIntrinsics, Se3Pose, camera_extrinsics, project_distance_field
from .metrics import MetricsReport, depth_metrics

SKY_INTENSITY = 0.5


def _straight_motion(n_frames, step):
    return tuple(Se3Pose(np.eye(3), [i * step, 0.0, 0.0]) for i in range(n_frames))


@dataclass(frozen=True, eq=False)
class SyntheticScene:
    """Camera rig moving over a textured ground plane.

    ``poses`` are ego-to-world transforms with the ego origin on the ground.
    ``road_mask`` marks BEV cells eligible for scale transfer (e.g. road with
    vehicle footprints removed); ``None`` means every cell.
    """

    K: CameraIntrinsics = field(default_factory=lambda: CameraIntrinsics(300.0, 300.0, 191.5, 63.5, 384, 128))
    camera_height: float = 1.65
    pitch: float = 0.0
    poses: tuple = field(default_factory=lambda: _straight_motion(3, 0.5))
    bev: BevSpec = field(default_factory=BevSpec)
    road_mask: np.ndarray = None
    seed: int = 0
    n_waves: int = 6
    min_wavelength: float = 2.0
    max_wavelength: float = 8.0

    def __post_init__(self):
        if not self.camera_height > 0:
            raise ScaleviewError("camera height must be positive")
        horizon_v = self.K.cy - self.K.fy * np.tan(self.pitch)
        if horizon_v >= self.K.height - 1:
            raise ScaleviewError("pitch places the horizon below the image")
        if len(self.poses) < 1:
            raise ScaleviewError("scene needs at least one pose")
        if self.road_mask is not None:
            mask = np.asarray(self.road_mask).astype(bool)
            if mask.shape != (self.bev.cells, self.bev.cells):
                raise ScaleviewError("road_mask does not match the BEV grid")
            object.__setattr__(self, "road_mask", mask)
        object.__setattr__(self, "poses", tuple(self.poses))
        rng = np.random.default_rng(self.seed)
        wl = rng.uniform(self.min_wavelength, self.max_wavelength, self.n_waves)
        theta = rng.uniform(0, np.pi, self.n_waves)
        k = 2 * np.pi / wl
        object.__setattr__(self, "_kx", k * np.cos(theta))
        object.__setattr__(self, "_ky", k * np.sin(theta))
        object.__setattr__(self, "_phase", rng.uniform(0, 2 * np.pi, self.n_waves))
        object.__setattr__(self, "_amp", rng.uniform(0.5, 1.0, self.n_waves))

    @property
    def extrinsics(self):
        """``T_ego^cam`` of the rig."""
        return camera_extrinsics(self.camera_height, self.pitch)

    def texture(self, x, y):
        """Ground intensity at world coordinates, within [0.1, 0.9]."""
        x = np.asarray(x, dtype=np.float64)[..., None]
        y = np.asarray(y, dtype=np.float64)[..., None]
        waves = self._amp * np.sin(self._kx * x + self._ky * y + self._phase)
        return 0.5 + 0.4 * waves.sum(axis=-1) / self._amp.sum()

    def camera_to_world(self, frame_index):
        return self.poses[frame_index] @ self.extrinsics.inverse()

    def relative_pose(self, target, source):
        """Transform taking camera points of frame ``target`` into frame ``source``."""
        return self.camera_to_world(source).inverse() @ self.camera_to_world(target)

    def distance_field(self, out_size=None):
        return project_distance_field(self.bev, self.K, self.extrinsics, road_mask=self.road_mask,
                                      out_size=out_size or (self.K.height, self.K.width))

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        kw = {}
        if "intrinsics" in data:
            kw["K"] = CameraIntrinsics(**data.pop("intrinsics"))
        if "bev" in data:
            kw["bev"] = BevSpec(**data.pop("bev"))
        if "poses" in data:
            kw["poses"] = tuple(Se3Pose.from_matrix(p) for p in data.pop("poses"))
        elif "motion" in data:
            m = data.pop("motion")
            kw["poses"] = _straight_motion(int(m.get("frames", 3)), float(m.get("step", 0.5)))
        if "vehicle_boxes" in data:
            bev = kw.get("bev", BevSpec())
            mask = np.ones((bev.cells, bev.cells), dtype=bool)
            for r0, r1, c0, c1 in data.pop("vehicle_boxes"):
                mask[r0:r1, c0:c1] = False
            kw["road_mask"] = mask
        allowed = {"camera_height", "pitch", "seed", "n_waves", "min_wavelength", "max_wavelength"}
        unknown = set(data) - allowed
        if unknown:
            raise ScaleviewError(f"unknown scene keys: {sorted(unknown)}")
        kw.update(data)
        return cls(**kw)


def render_scene(scene, frame_index):
    """Render one frame; returns ``(image, depth, valid)``.

    ``image`` is H x W x 1 in [0, 1], ``depth`` is the camera-frame depth of
    the ground hit point and 0 (sentinel) where the ray misses the ground.
    """
    K = scene.K
    T = scene.camera_to_world(frame_index)
    v, u = np.mgrid[0:K.height, 0:K.width].astype(np.float64)
    rays = np.stack([u, v, np.ones_like(u)], axis=-1) @ K.inverse.T
    dirs = rays @ T.rotation.T
    origin = T.translation
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = -origin[2] / dirs[..., 2]
    valid = np.isfinite(lam) & (lam > 0)
    lam = np.where(valid, lam, 0.0)
    hit = origin + dirs * lam[..., None]
    image = np.where(valid, scene.texture(hit[..., 0], hit[..., 1]), SKY_INTENSITY)
    return image[..., None], lam, valid


def scale_recovery_experiment(scene, scale, noise=0.0, frame_index=0, seed=0,
                              eval_cfg=DepthEvalConfig(apply_median_scaling=False)):
    """Recover an unknown global depth scale from the projected distance field.

    The ground-truth depth divided by ``scale`` (optionally with multiplicative
    Gaussian noise) stands in for an up-to-scale prediction.
    """
    if not scale > 0:
        raise ScaleviewError("scale must be positive")
    _, gt, valid = render_scene(scene, frame_index)
    field = scene.distance_field()
    rng = np.random.default_rng(seed)
    pred = np.where(valid, gt, gt[valid].max()) / scale
    if noise:
        pred = pred * np.clip(1.0 + noise * rng.standard_normal(pred.shape), 0.1, None)
    s_hat = fit_scale(pred, field)
    rescaled = s_hat * pred

    report = MetricsReport()
    report.add("true_scale", scale)
    report.add("recovered_scale", s_hat)
    report.add("relative_error", abs(s_hat / scale - 1.0))
    report.add("residual_cgt", cgt_loss(rescaled, field))
    report.add("cgt_pixels", field.n_valid)
    dm = depth_metrics(rescaled, np.where(valid, gt, 0.0), valid, eval_cfg)
    for name in ("abs_rel", "sq_rel", "rmse", "rmse_log"):
        report.add(name, dm[name], dm.units[name])
    return report
