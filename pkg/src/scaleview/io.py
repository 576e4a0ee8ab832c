"""File formats: PNG images/depths/layouts, KITTI poses, calibration, feature maps."""

import json
import struct

import numpy as np
from PIL import Image

from .cct import CctWeights
from .exceptions import ScaleviewError
from .geometry import CameraIntrinsics, Se3Pose

DEPTH_PNG_SCALE = 256.0


def read_image(path):
    """8-bit PNG -> H x W x C float array in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im)
    if arr.dtype != np.uint8:
        raise ScaleviewError(f"{path}: expected an 8-bit image, got {arr.dtype}")
    arr = arr.astype(np.float64) / 255.0
    return arr[..., None] if arr.ndim == 2 else arr


def write_image(path, img):
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[..., 0]
    Image.fromarray(np.round(np.clip(arr, 0, 1) * 255).astype(np.uint8)).save(path)


def read_depth(path):
    """16-bit PNG (value / 256 m) -> ``(depth, valid)``; zero marks missing depth."""
    with Image.open(path) as im:
        raw = np.asarray(im)
    if raw.ndim != 2 or raw.dtype not in (np.uint16, np.int32, np.uint8):
        raise ScaleviewError(f"{path}: expected a single-channel 16-bit depth PNG")
    depth = raw.astype(np.float64) / DEPTH_PNG_SCALE
    return depth, raw > 0


def write_depth(path, depth):
    raw = np.round(np.asarray(depth, dtype=np.float64) * DEPTH_PNG_SCALE)
    if raw.max(initial=0) > 65535:
        raise ScaleviewError("depth exceeds the 16-bit PNG range (256 m)")
    Image.fromarray(np.clip(raw, 0, 65535).astype(np.uint16)).save(path)


def read_layout(path, binary=True):
    """8-bit layout PNG: ground truth thresholds at 128, predictions become value/255."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L")).astype(np.float64)
    return (arr >= 128).astype(np.uint8) if binary else arr / 255.0


def write_layout(path, grid):
    write_image(path, np.asarray(grid, dtype=np.float64))


def read_poses(path):
    """KITTI odometry file: one row-major 3x4 camera-to-world matrix per line."""
    poses = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            vals = line.split()
            if len(vals) != 12:
                raise ScaleviewError(f"{path}:{lineno}: expected 12 values, got {len(vals)}")
            try:
                M = np.array([float(v) for v in vals])
            except ValueError as exc:
                raise ScaleviewError(f"{path}:{lineno}: {exc}") from None
            # text files round rotations, project back onto SO(3)
            poses.append(Se3Pose.from_matrix(M, orthonormalize=True))
    return poses


def write_poses(path, poses):
    with open(path, "w") as fh:
        for p in poses:
            fh.write(" ".join(f"{v:.9e}" for v in p.matrix34.ravel()) + "\n")


def _parse_values(text, n, key):
    if isinstance(text, list):
        vals = [float(v) for v in text]
    else:
        vals = [float(v) for v in str(text).replace(",", " ").split()]
    if len(vals) != n:
        raise ScaleviewError(f"calibration entry {key!r} needs {n} values, got {len(vals)}")
    return vals


def read_calibration(path):
    """Read ``K`` (9 values), ``T_ego_cam`` and optional ``T_bev_ego`` (12 values each).

    Accepts JSON objects or plain text with ``key: v1 v2 ...`` lines. Image
    size may be given as ``width`` and ``height``.
    """
    with open(path) as fh:
        text = fh.read()
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        data = {}
        for line in text.splitlines():
            if ":" in line:
                key, val = line.split(":", 1)
                data[key.strip()] = val.strip()
    if "K" not in data or "T_ego_cam" not in data:
        raise ScaleviewError(f"{path}: calibration needs K and T_ego_cam")
    K = np.array(_parse_values(data["K"], 9, "K")).reshape(3, 3)
    width = int(float(data.get("width", 1)))
    height = int(float(data.get("height", 1)))
    calib = {
        "K": CameraIntrinsics.from_matrix(K, width, height),
        "T_ego_cam": Se3Pose.from_matrix(_parse_values(data["T_ego_cam"], 12, "T_ego_cam"), orthonormalize=True),
        "T_bev_ego": Se3Pose.identity(),
    }
    if "T_bev_ego" in data:
        calib["T_bev_ego"] = Se3Pose.from_matrix(_parse_values(data["T_bev_ego"], 12, "T_bev_ego"),
                                                 orthonormalize=True)
    return calib


def write_calibration(path, K, t_ego_cam, t_bev_ego=None):
    data = {
        "K": K.matrix.ravel().tolist(),
        "width": K.width,
        "height": K.height,
        "T_ego_cam": t_ego_cam.matrix34.ravel().tolist(),
    }
    if t_bev_ego is not None:
        data["T_bev_ego"] = t_bev_ego.matrix34.ravel().tolist()
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)


# Feature map binary: <i4 H, <i4 W, <i4 D, then H*W*D little-endian float64 row-major.

_HEADER = struct.Struct("<3i")


def write_features(path, arr):
    arr = np.asarray(arr, dtype="<f8")
    if arr.ndim != 3:
        raise ScaleviewError("feature maps must be H x W x D")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(*arr.shape))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_features(path):
    with open(path, "rb") as fh:
        head = fh.read(_HEADER.size)
        if len(head) != _HEADER.size:
            raise ScaleviewError(f"{path}: truncated header")
        shape = _HEADER.unpack(head)
        if min(shape) < 1:
            raise ScaleviewError(f"{path}: invalid shape {shape}")
        body = fh.read()
    n = shape[0] * shape[1] * shape[2]
    if len(body) != 8 * n:
        raise ScaleviewError(f"{path}: expected {n} float64 values, found {len(body) // 8}")
    return np.frombuffer(body, dtype="<f8").reshape(shape).astype(np.float64)


def write_weights(path, w):
    """Weights use the feature layout with shape (2D + 1, D, 1): kernel rows then bias."""
    stacked = np.vstack([w.fuse_kernel, w.bias[None, :]])
    write_features(path, stacked[:, :, None])


def read_weights(path):
    arr = read_features(path)
    if arr.shape[2] != 1 or arr.shape[0] != 2 * arr.shape[1] + 1:
        raise ScaleviewError(f"{path}: weights must have shape (2D + 1, D, 1), got {arr.shape}")
    arr = arr[:, :, 0]
    return CctWeights(arr[:-1], arr[-1])
