"""Rigid transforms, pinhole projection and the BEV ground-plane geometry.

Coordinate conventions used throughout the package:

* camera frame: x right, y down, z forward (optical axis);
* ego frame: x forward, y left, z up, origin on the ground directly below
  the camera;
* BEV frame: a ground-plane frame (x forward, y left, z up) related to the
  ego frame by ``t_bev_ego``; identity by default;
* BEV grid: row 0 is the farthest row ahead, column 0 the leftmost column.
  Cell ``(col, row)`` has its center at integer grid coordinates.
* pixel ``(u, v)`` has its center at integer image coordinates.
"""

from dataclasses import dataclass, field

import numpy as np

from .exceptions import DegenerateHomography, InvalidPose, NonPositiveDepth, ScaleviewError

_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = 1
    height: int = 1

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ScaleviewError("focal lengths must be positive")
        if self.width < 1 or self.height < 1:
            raise ScaleviewError("image size must be at least 1 x 1")

    @property
    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    @property
    def inverse(self):
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])

    @classmethod
    def from_matrix(cls, K, width=1, height=1):
        K = np.asarray(K, dtype=np.float64).reshape(3, 3)
        return cls(float(K[0, 0]), float(K[1, 1]), float(K[0, 2]), float(K[1, 2]),
                   int(width), int(height))

    def scaled(self, s):
        """Intrinsics for an image resampled by factor ``s``."""
        return CameraIntrinsics(self.fx * s, self.fy * s, self.cx * s, self.cy * s,
                                max(1, round(self.width * s)), max(1, round(self.height * s)))


@dataclass(frozen=True, eq=False)
class Se3Pose:
    """Rigid transform ``p -> R p + t`` (translation in meters)."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise InvalidPose("pose contains non-finite values")
        if np.abs(R.T @ R - np.eye(3)).max() >= _ORTHO_TOL or np.linalg.det(R) <= 0:
            raise InvalidPose("rotation must be orthonormal with determinant +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, M, orthonormalize=False):
        """Build from a 3x4 or 4x4 matrix, optionally projecting R onto SO(3).

        Projection is meant for poses parsed from text files whose rotations
        were rounded on output.
        """
        M = np.asarray(M, dtype=np.float64)
        if M.size == 12:
            M = M.reshape(3, 4)
        elif M.size == 16:
            M = M.reshape(4, 4)[:3]
        else:
            raise InvalidPose(f"expected 12 or 16 values, got {M.size}")
        R = M[:, :3]
        if orthonormalize:
            R = nearest_rotation(R)
        return cls(R, M[:, 3])

    @property
    def matrix(self):
        """4x4 homogeneous matrix."""
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    @property
    def matrix34(self):
        return self.matrix[:3]

    def inverse(self):
        Rt = self.rotation.T
        return Se3Pose(Rt, -Rt @ self.translation)

    def __matmul__(self, other):
        if not isinstance(other, Se3Pose):
            return NotImplemented
        return Se3Pose(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation)

    def apply(self, points):
        """Transform points of shape (..., 3)."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def __repr__(self):
        return f"Se3Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def nearest_rotation(M):
    """Closest rotation matrix to ``M`` in the Frobenius norm."""
    U, _, Vt = np.linalg.svd(np.asarray(M, dtype=np.float64))
    D = np.diag([1.0, 1.0, np.sign(np.linalg.det(U @ Vt))])
    return U @ D @ Vt


def rotation_about_axis(axis, angle):
    """Rodrigues rotation matrix."""
    axis = np.asarray(axis, dtype=np.float64)
    axis = axis / np.linalg.norm(axis)
    x, y, z = axis
    Kx = np.array([[0, -z, y], [z, 0, -x], [-y, x, 0]])
    return np.eye(3) + np.sin(angle) * Kx + (1 - np.cos(angle)) * (Kx @ Kx)


# ego (x fwd, y left, z up) -> camera (x right, y down, z fwd) for a level camera
EGO_TO_CAMERA_AXES = np.array([[0.0, -1.0, 0.0],
                               [0.0, 0.0, -1.0],
                               [1.0, 0.0, 0.0]])


def camera_extrinsics(height, pitch=0.0, roll=0.0, yaw=0.0):
    """``T_ego^cam`` for a camera mounted ``height`` meters above the ego origin.

    Positive ``pitch`` tilts the optical axis toward the ground; ``roll``
    rotates about the optical axis and ``yaw`` turns the camera left.
    """
    c, s = np.cos(pitch), np.sin(pitch)
    R_pitch = np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    R_roll = rotation_about_axis([0.0, 0.0, 1.0], roll)
    R_yaw = rotation_about_axis([0.0, 0.0, 1.0], -yaw)  # about ego z, applied before axis swap
    R = R_roll @ R_pitch @ EGO_TO_CAMERA_AXES @ R_yaw
    center = np.array([0.0, 0.0, float(height)])
    return Se3Pose(R, -R @ center)


def project_point(K, p_cam):
    """Project a camera-frame point; returns ``(u, v, depth)``."""
    x, y, z = (float(c) for c in np.asarray(p_cam, dtype=np.float64).reshape(3))
    if not z > 0:
        raise NonPositiveDepth(f"point depth must be positive, got {z}")
    return K.fx * x / z + K.cx, K.fy * y / z + K.cy, z


def project_points(K, points):
    """Vectorized pinhole projection of (..., 3) points.

    Returns ``(uv, depth)``; no depth check, callers mask ``depth <= 0``.
    """
    pts = np.asarray(points, dtype=np.float64)
    z = pts[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        u = K.fx * pts[..., 0] / z + K.cx
        v = K.fy * pts[..., 1] / z + K.cy
    return np.stack([u, v], axis=-1), z


def backproject_point(K, u, v, depth):
    return depth * (K.inverse @ np.array([u, v, 1.0]))


@dataclass(frozen=True)
class BevSpec:
    """Square metric BEV grid ``extent_z`` meters ahead and ``extent_z/2`` to each side."""

    cells: int = 256
    extent_z: float = 40.0
    camera_height: float = 1.65

    def __post_init__(self):
        if self.cells < 2:
            raise ScaleviewError("BEV grid needs at least 2 cells per side")
        if not self.extent_z > 0:
            raise ScaleviewError("extent_z must be positive")

    @property
    def cell_size(self):
        return self.extent_z / self.cells

    @property
    def plane_matrix(self):
        """Map homogeneous ``(col, row, 1)`` to BEV-plane ``(forward, left, 1)`` in meters."""
        s = self.cell_size
        return np.array([[0.0, -s, self.extent_z - 0.5 * s],
                         [-s, 0.0, 0.5 * self.extent_z - 0.5 * s],
                         [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class DistanceField:
    bev_z: np.ndarray
    fv_z: np.ndarray
    fv_mask: np.ndarray

    @property
    def n_valid(self):
        return int(self.fv_mask.sum())


def build_distance_field(spec):
    """Forward distance of every BEV cell center, row 0 farthest."""
    N = spec.cells
    rows = np.arange(N, dtype=np.float64)
    z = spec.extent_z * (N - rows - 0.5) / N
    return np.repeat(z[:, None], N, axis=1)


def _ground_projection(t_ego_cam, t_bev_ego, spec):
    """3x3 map from ``(col, row, 1)`` to the camera-frame point on the BEV plane."""
    P = (t_ego_cam @ t_bev_ego).matrix34
    return P[:, [0, 1, 3]] @ spec.plane_matrix


def build_homography(K, t_ego_cam, t_bev_ego, spec):
    """Homography taking homogeneous BEV cells ``(col, row, 1)`` to pixels."""
    H = K.matrix @ _ground_projection(t_ego_cam, t_bev_ego, spec)
    if abs(np.linalg.det(H)) < 1e-12:
        raise DegenerateHomography("camera center lies on the ground plane")
    return H


def project_distance_field(spec, K, t_ego_cam, t_bev_ego=None, road_mask=None, out_size=None):
    """Project the BEV distance field into the camera image.

    Each output pixel is traced back through the inverse homography to the
    ground plane. The pixel is valid when the hit point is in front of the
    camera, falls inside the BEV grid, and its nearest cell is marked in
    ``road_mask``. Valid pixels store the camera-frame depth of the hit point.
    """
    if t_bev_ego is None:
        t_bev_ego = Se3Pose.identity()
    if out_size is None:
        out_size = (K.height, K.width)
    Hd, Wd = (int(x) for x in out_size)
    N = spec.cells
    if road_mask is not None:
        road_mask = np.asarray(road_mask).astype(bool)
        if road_mask.shape != (N, N):
            raise ScaleviewError(f"road_mask must be {N}x{N}, got {road_mask.shape}")

    H = build_homography(K, t_ego_cam, t_bev_ego, spec)
    G = _ground_projection(t_ego_cam, t_bev_ego, spec)
    Hinv = np.linalg.inv(H)

    v, u = np.mgrid[0:Hd, 0:Wd].astype(np.float64)
    pix = np.stack([u, v, np.ones_like(u)], axis=-1)
    grid = pix @ Hinv.T
    w = grid[..., 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        col = grid[..., 0] / w
        row = grid[..., 1] / w
    ok = np.abs(w) > 1e-15
    cr1 = np.stack([np.where(ok, col, 0.0), np.where(ok, row, 0.0), np.ones_like(col)], axis=-1)
    depth = (cr1 @ G.T)[..., 2]

    ci = np.floor(col + 0.5)
    ri = np.floor(row + 0.5)
    with np.errstate(invalid="ignore"):
        ok &= depth > 0
        ok &= (ci >= 0) & (ci < N) & (ri >= 0) & (ri < N)
    if road_mask is not None:
        ci_safe = np.where(ok, ci, 0).astype(int)
        ri_safe = np.where(ok, ri, 0).astype(int)
        ok &= road_mask[ri_safe, ci_safe]

    fv_z = np.where(ok, depth, 0.0)
    return DistanceField(build_distance_field(spec), fv_z, ok.astype(np.uint8))
