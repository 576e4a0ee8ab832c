import numpy as np
import pytest

from oracles import bilinear_at, plane_depth, reproject_pixel
from scaleview.exceptions import DimensionMismatch, ScaleviewError
from scaleview.geometry import CameraIntrinsics, Se3Pose, rotation_about_axis
from scaleview.warping import backproject, bilinear_sample, reprojection_coords, warp_image

K = CameraIntrinsics(30.0, 32.0, 11.5, 8.5, 24, 18)


def test_backproject_reprojects_to_pixel_grid(rng):
    depth = rng.uniform(1, 5, (18, 24))
    pts = backproject(depth, K)
    np.testing.assert_allclose(pts[..., 2], depth)
    u = K.fx * pts[..., 0] / pts[..., 2] + K.cx
    np.testing.assert_allclose(u, np.broadcast_to(np.arange(24.0), (18, 24)), atol=1e-12)


def test_bilinear_matches_scalar_oracle(rng):
    img = rng.uniform(0, 1, (6, 7, 2))
    coords = np.stack([rng.uniform(0, 6, 40), rng.uniform(0, 5, 40)], axis=-1)
    out, valid = bilinear_sample(img, coords)
    assert valid.all()
    for (u, v), o in zip(coords, out):
        np.testing.assert_allclose(o, bilinear_at(img, u, v), atol=1e-14)


def test_bilinear_integer_and_edge_coordinates(rng):
    img = rng.uniform(0, 1, (4, 5, 1))
    v, u = np.mgrid[0:4, 0:5].astype(float)
    out, valid = bilinear_sample(img, np.stack([u, v], -1))
    assert valid.all()
    np.testing.assert_array_equal(out, img)


def test_bilinear_out_of_range_is_masked():
    img = np.ones((4, 4, 1))
    coords = np.array([[-0.01, 1.0], [3.0001, 1.0], [1.0, np.nan], [3.0, 3.0]])
    out, valid = bilinear_sample(img, coords)
    np.testing.assert_array_equal(valid, [False, False, False, True])
    np.testing.assert_array_equal(out[:, 0], [0, 0, 0, 1])


def test_bilinear_gradient_matches_difference(rng):
    img = rng.uniform(0, 1, (5, 5, 1))
    c = np.array([[1.3, 2.6]])
    _, _, du, dv = bilinear_sample(img, c, return_grad=True)
    h = 1e-6
    fu = (bilinear_sample(img, c + [h, 0])[0] - bilinear_sample(img, c - [h, 0])[0]) / (2 * h)
    fv = (bilinear_sample(img, c + [0, h])[0] - bilinear_sample(img, c - [0, h])[0]) / (2 * h)
    np.testing.assert_allclose(du, fu, atol=1e-8)
    np.testing.assert_allclose(dv, fv, atol=1e-8)


def test_bad_coords_shape():
    with pytest.raises(DimensionMismatch):
        bilinear_sample(np.zeros((3, 3)), np.zeros((2, 3)))


def test_identity_warp_is_exact(rng):
    src = rng.uniform(0, 1, (18, 24, 3))
    depth = rng.uniform(1, 10, (18, 24))
    recon, valid = warp_image(src, depth, Se3Pose.identity(), K)
    assert valid.all()
    np.testing.assert_array_equal(recon, src)


def test_planar_warp_matches_per_pixel_oracle():
    depth = plane_depth(K, [0.0, 0.1, 1.0], 6.0, 18, 24)
    T = Se3Pose(rotation_about_axis([0.2, 1.0, 0.1], 0.04), [0.3, -0.05, 0.2])
    coords, in_front = reprojection_coords(depth, T, K)
    assert in_front.all()
    worst = 0.0
    for v in range(18):
        for u in range(24):
            us, vs, _ = reproject_pixel(K, T, u, v, depth[v, u])
            worst = max(worst, abs(us - coords[v, u, 0]), abs(vs - coords[v, u, 1]))
    assert worst < 1e-6


def test_points_behind_source_are_invalid():
    depth = np.full((18, 24), 2.0)
    T = Se3Pose(np.eye(3), [0.0, 0.0, -3.0])
    recon, valid = warp_image(np.ones((18, 24)), depth, T, K)
    assert not valid.any()
    assert np.all(recon == 0)


def test_pure_translation_shifts_image(rng):
    # fronto-parallel plane at depth d, translation tx shifts by fx * tx / d
    src = rng.uniform(0, 1, (18, 24, 1))
    d = 3.0
    T = Se3Pose(np.eye(3), [d / K.fx * 2, 0.0, 0.0])  # two-pixel shift
    recon, valid = warp_image(src, np.full((18, 24), d), T, K)
    np.testing.assert_allclose(recon[:, :22][valid[:, :22]], src[:, 2:][valid[:, :22]], atol=1e-12)
    assert not valid[:, 22:].any()


def test_depth_gradient_matches_difference(rng):
    src = rng.uniform(0, 1, (18, 24, 2))
    depth = rng.uniform(2, 4, (18, 24))
    T = Se3Pose(rotation_about_axis([0, 1, 0], 0.02), [0.1, 0.0, 0.05])
    _, valid, g = warp_image(src, depth, T, K, return_grad=True)
    h = 1e-6
    rp, _ = warp_image(src, depth + h, T, K)
    rm, _ = warp_image(src, depth - h, T, K)
    fd = (rp - rm) / (2 * h)
    # compare away from bilinear cell edges where the one-sided derivative is ambiguous
    coords, _ = reprojection_coords(depth, T, K)
    frac = np.abs(coords - np.round(coords))
    smooth = valid & (frac.min(axis=-1) > 1e-3)
    np.testing.assert_allclose(g[smooth], fd[smooth], atol=1e-6)


def test_rejects_invalid_depth():
    with pytest.raises(ScaleviewError):
        warp_image(np.zeros((18, 24)), np.zeros((18, 24)), Se3Pose.identity(), K)
