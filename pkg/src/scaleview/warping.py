"""Differentiable inverse warping for self-supervised view synthesis."""

import numpy as np

from ._validation import check_depth, check_image
from .exceptions import DimensionMismatch
from .geometry import project_points


def backproject(depth, K):
    """Camera-frame 3D point of every pixel, shape H x W x 3."""
    depth = check_depth(depth)
    H, W = depth.shape
    v, u = np.mgrid[0:H, 0:W].astype(np.float64)
    rays = np.stack([u, v, np.ones_like(u)], axis=-1) @ K.inverse.T
    return rays * depth[..., None]


# coordinates this close to an integer are treated as exact pixel centers, so
# round-off from K^-1 followed by K neither shifts samples nor drops border pixels
SNAP_TOL = 1e-9


def _snap(x):
    with np.errstate(invalid="ignore"):
        r = np.round(x)
        return np.where(np.abs(x - r) < SNAP_TOL, r, x)


def bilinear_sample(img, coords, return_grad=False):
    """Sample ``img`` at continuous pixel coordinates ``coords[..., (u, v)]``.

    Coordinates outside ``[0, W-1] x [0, H-1]`` are masked out and yield 0.
    With ``return_grad`` the partial derivatives of the output with respect
    to u and v are also returned (right-sided at integer coordinates).
    """
    img = check_image(img, "img")
    coords = np.asarray(coords, dtype=np.float64)
    if coords.shape[-1] != 2:
        raise DimensionMismatch("coords must have a trailing dimension of 2")
    H, W, _ = img.shape
    u = _snap(coords[..., 0])
    v = _snap(coords[..., 1])
    with np.errstate(invalid="ignore"):
        valid = np.isfinite(u) & np.isfinite(v) & (u >= 0) & (u <= W - 1) & (v >= 0) & (v <= H - 1)
    u = np.where(valid, u, 0.0)
    v = np.where(valid, v, 0.0)

    u0 = np.clip(np.floor(u), 0, max(W - 2, 0)).astype(int)
    v0 = np.clip(np.floor(v), 0, max(H - 2, 0)).astype(int)
    u1 = np.minimum(u0 + 1, W - 1)
    v1 = np.minimum(v0 + 1, H - 1)
    du = (u - u0)[..., None]
    dv = (v - v0)[..., None]

    I00 = img[v0, u0]
    I01 = img[v0, u1]
    I10 = img[v1, u0]
    I11 = img[v1, u1]
    top = I00 + (I01 - I00) * du
    bot = I10 + (I11 - I10) * du
    out = top + (bot - top) * dv
    m = valid[..., None]
    out = np.where(m, out, 0.0)
    if not return_grad:
        return out, valid
    d_du = np.where(m, (I01 - I00) * (1 - dv) + (I11 - I10) * dv, 0.0)
    d_dv = np.where(m, bot - top, 0.0)
    return out, valid, d_du, d_dv


def reprojection_coords(depth, t_rel, K, return_grad=False):
    """Pixel coordinates in the source view of every target pixel.

    ``t_rel`` maps target-camera points into the source camera. Returns
    ``(coords, in_front)``; with ``return_grad`` also d(coords)/d(depth) of
    shape H x W x 2 (each pixel depends only on its own depth).
    """
    depth = check_depth(depth)
    H, W = depth.shape
    v, u = np.mgrid[0:H, 0:W].astype(np.float64)
    rays = np.stack([u, v, np.ones_like(u)], axis=-1) @ K.inverse.T
    rays_src = rays @ t_rel.rotation.T
    q = rays_src * depth[..., None] + t_rel.translation
    coords, z = project_points(K, q)
    in_front = z > 0
    coords = np.where(in_front[..., None], coords, np.nan)
    if not return_grad:
        return coords, in_front
    with np.errstate(divide="ignore", invalid="ignore"):
        zz = z * z
        du = K.fx * (rays_src[..., 0] * z - q[..., 0] * rays_src[..., 2]) / zz
        dv = K.fy * (rays_src[..., 1] * z - q[..., 1] * rays_src[..., 2]) / zz
    grad = np.where(in_front[..., None], np.stack([du, dv], axis=-1), 0.0)
    return coords, in_front, grad


def warp_image(src, depth, t_rel, K, return_grad=False):
    """Reconstruct the target view by sampling ``src`` along reprojected rays.

    Returns ``(recon, valid)``; pixels whose transformed point lies behind
    the source camera or that sample outside ``src`` are invalid and zero.
    With ``return_grad`` a third array d(recon)/d(depth), H x W x C, is
    returned.
    """
    src = check_image(src, "src")
    depth = check_depth(depth)
    if not return_grad:
        coords, in_front = reprojection_coords(depth, t_rel, K)
        recon, valid = bilinear_sample(src, coords)
        return recon, valid & in_front
    coords, in_front, dcoords = reprojection_coords(depth, t_rel, K, return_grad=True)
    recon, valid, d_du, d_dv = bilinear_sample(src, coords, return_grad=True)
    valid &= in_front
    drecon = d_du * dcoords[..., :1] + d_dv * dcoords[..., 1:]
    drecon = np.where(valid[..., None], drecon, 0.0)
    return recon, valid, drecon
