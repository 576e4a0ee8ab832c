"""Central finite-difference checks of the hand-derived gradients."""

from dataclasses import dataclass

import numpy as np

from . import cct, depth_losses as dl, layout_losses as ll
from .exceptions import NonFiniteValue
from .geometry import CameraIntrinsics, DistanceField, Se3Pose, rotation_about_axis
from .warping import reprojection_coords

STEP = 1e-5
TOL = 1e-4


@dataclass
class GradReport:
    name: str
    max_rel_error: float
    rel_errors: np.ndarray
    tol: float

    @property
    def passed(self):
        return bool(self.max_rel_error < self.tol)

    def row(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{self.name:<28s} {self.max_rel_error:10.3e}  {status}"


def numerical_gradient(fun, x0, step=STEP):
    x = np.array(x0, dtype=np.float64).ravel()
    out = np.empty_like(x)
    for i in range(x.size):
        orig = x[i]
        x[i] = orig + step
        fp = fun(x)
        x[i] = orig - step
        fm = fun(x)
        x[i] = orig
        out[i] = (fp - fm) / (2 * step)
    return out


def check_gradient(fun, x0, grad, step=STEP, tol=TOL, name="f"):
    """Compare ``grad(x0)`` with central differences of ``fun`` around ``x0``.

    The relative error per coordinate is ``|a - n| / max(|a|, |n|, 1e-8)``.
    Raises :class:`NonFiniteValue` if any evaluation is non-finite.
    """
    x0 = np.asarray(x0, dtype=np.float64).ravel()
    f0 = fun(x0.copy())
    analytic = np.asarray(grad(x0.copy()), dtype=np.float64).ravel()
    if not np.isfinite(f0) or not np.all(np.isfinite(analytic)):
        raise NonFiniteValue(f"{name}: non-finite value or gradient at x0")
    numeric = numerical_gradient(fun, x0, step)
    if not np.all(np.isfinite(numeric)):
        raise NonFiniteValue(f"{name}: non-finite finite-difference value")
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    rel = np.abs(analytic - numeric) / denom
    return GradReport(name, float(rel.max()), rel, tol)


# -- seeded instances for every loss --------------------------------------

def _image(rng, shape=(8, 8, 3)):
    return rng.uniform(0.05, 0.95, shape)


def _away_from(rng, center, margin, shape):
    """Values near ``center`` but at least ``margin`` away from it."""
    sign = rng.choice([-1.0, 1.0], size=shape)
    return center + sign * rng.uniform(margin, 3 * margin, shape)


def _check_photometric(rng, step, tol):
    t = _image(rng)
    r = np.clip(_away_from(rng, t, 0.02, t.shape), 0.005, 0.995)
    w = rng.uniform(0.5, 1.5, t.shape[:2])
    f = lambda x: float((w * dl.photometric_error(t, x.reshape(t.shape))).sum())
    g = lambda x: dl.photometric_error_vjp(t, x.reshape(t.shape), w)
    return check_gradient(f, r, g, step, tol, "photometric_error")


def _check_min_reprojection(rng, step, tol, margin=1e-4):
    while True:
        t = _image(rng)
        r1 = np.clip(_away_from(rng, t, 0.02, t.shape), 0.005, 0.995)
        r2 = np.clip(_away_from(rng, t, 0.02, t.shape), 0.005, 0.995)
        src = np.clip(_away_from(rng, t, 0.05, t.shape), 0.005, 0.995)
        m = np.ones(t.shape[:2], dtype=bool)
        e1 = dl.photometric_error(t, r1)
        e2 = dl.photometric_error(t, r2)
        ident = dl.photometric_error(t, src)
        best = np.minimum(e1, e2)
        if np.abs(e1 - e2).min() > margin and np.abs(best - ident).min() > margin:
            break

    def f(x):
        return dl.min_reprojection(t, [(x.reshape(t.shape), m), (r2, m)], [src])[0]

    def g(x):
        return dl.min_reprojection(t, [(x.reshape(t.shape), m), (r2, m)], [src], return_grad=True)[2][0]

    return check_gradient(f, r1, g, step, tol, "min_reprojection")


def _plane_scene(rng, H=8, W=8):
    K = CameraIntrinsics(6.0, 6.0, (W - 1) / 2, (H - 1) / 2, W, H)
    yy, xx = np.mgrid[0:H, 0:W]
    src = 0.5 + 0.2 * np.sin(0.9 * xx + 0.3) * np.cos(0.7 * yy + 0.1) + 0.1 * np.sin(0.4 * xx * yy)
    return K, src[..., None]


def _check_reprojection_depth(rng, step, tol, margin=1e-4):
    K, src = _plane_scene(rng)
    H, W = src.shape[:2]
    target = np.clip(src + rng.uniform(-0.05, 0.05, src.shape), 0, 1)
    poses = [Se3Pose(rotation_about_axis([0, 1, 0], 0.01), [0.08, 0.01, 0.0]),
             Se3Pose(rotation_about_axis([1, 0, 0], -0.01), [-0.07, 0.0, 0.03])]
    while True:
        depth = rng.uniform(1.5, 2.5, (H, W))
        ok = True
        for T in poses:
            coords, _, dc = reprojection_coords(depth, T, K, return_grad=True)
            frac = coords - np.floor(coords)
            reach = 10 * step * np.abs(dc) + margin
            if np.any((frac < reach) | (1 - frac < reach)):
                ok = False
        if not ok:
            continue
        try:
            recons = [dl.warp_image(src, depth, T, K) for T in poses]
        except Exception:
            continue
        errs = [np.where(m, dl.photometric_error(target, r), np.inf) for r, m in recons]
        ident = dl.photometric_error(target, src)
        best = np.minimum(*errs)
        with np.errstate(invalid="ignore"):
            gap = np.abs(errs[0] - errs[1])
        gap = np.where(np.isnan(gap), np.inf, gap)
        if np.all(gap > margin) and np.all(np.abs(best - ident)[np.isfinite(best)] > margin) \
                and np.isfinite(best).sum() > H * W // 2:
            break

    f = lambda x: dl.reprojection_loss(target, [src, src], x.reshape(H, W), poses, K)[0]
    g = lambda x: dl.reprojection_loss(target, [src, src], x.reshape(H, W), poses, K, return_grad=True)[2]
    return check_gradient(f, depth, g, step, tol, "reprojection_loss(depth)")


def _check_smoothness(rng, step, tol):
    depth = rng.uniform(1.0, 10.0, (8, 8))
    img = _image(rng)
    f = lambda x: dl.smoothness_loss(x.reshape(8, 8), img)
    g = lambda x: dl.smoothness_loss(x.reshape(8, 8), img, return_grad=True)[1]
    return check_gradient(f, depth, g, step, tol, "smoothness_loss")


def _check_cgt(rng, step, tol):
    z = rng.uniform(2.0, 40.0, (8, 8))
    mask = rng.random((8, 8)) < 0.6
    field = DistanceField(np.zeros((4, 4)), np.where(mask, z, 0.0), mask.astype(np.uint8))
    d = z * np.exp(_away_from(rng, 0.0, 0.05, z.shape))
    f = lambda x: dl.cgt_loss(x.reshape(8, 8), field)
    g = lambda x: dl.cgt_loss(x.reshape(8, 8), field, return_grad=True)[1]
    return check_gradient(f, d, g, step, tol, "cgt_loss")


def _layout_instance(rng):
    gt = np.zeros((8, 8), dtype=int)
    gt[2:6, 1:5] = 1
    gt[rng.random((8, 8)) < 0.1] ^= 1
    pred = rng.uniform(0.05, 0.95, (8, 8))
    return pred, gt


def _check_wbce(rng, step, tol):
    pred, gt = _layout_instance(rng)
    f = lambda x: ll.wbce_loss(x.reshape(8, 8), gt, 15.0)
    g = lambda x: ll.wbce_loss(x.reshape(8, 8), gt, 15.0, return_grad=True)[1]
    return check_gradient(f, pred, g, step, tol, "wbce_loss")


def _check_soft_iou(rng, step, tol, mode):
    pred, gt = _layout_instance(rng)
    f = lambda x: ll.soft_iou_loss(x.reshape(8, 8), gt, mode)
    g = lambda x: ll.soft_iou_loss(x.reshape(8, 8), gt, mode, return_grad=True)[1]
    return check_gradient(f, pred, g, step, tol, f"soft_iou_loss[{mode}]")


def _check_boundary(rng, step, tol):
    pred, gt = _layout_instance(rng)
    sdf = ll.signed_distance(gt)
    f = lambda x: ll.boundary_loss(x.reshape(8, 8), sdf)
    g = lambda x: ll.boundary_loss(x.reshape(8, 8), sdf, return_grad=True)[1]
    return check_gradient(f, pred, g, step, tol, "boundary_loss")


def _check_hybrid(rng, step, tol):
    pred, gt = _layout_instance(rng)
    layout = lambda x: ll.LayoutGrid(x.reshape(8, 8), gt, "vehicle")
    f = lambda x: ll.hybrid_loss(layout(x))
    g = lambda x: ll.hybrid_loss(layout(x), return_grad=True)[1]
    return check_gradient(f, pred, g, step, tol, "hybrid_loss")


_CCT_SHAPE = (2, 2, 3)


def _cct_checks(rng, step, tol):
    shape = _CCT_SHAPE
    feats = {k: rng.normal(size=shape) for k in ("f_f", "f_b", "f_f_re", "f_d")}
    w = cct.CctWeights.random(shape[-1], seed=int(rng.integers(1 << 31)))
    g_out = rng.normal(size=shape)
    names = ["f_f", "f_b", "f_f_re", "f_d", "fuse_kernel", "bias"]

    def unpack(name, x):
        args = dict(feats)
        kern, bias = w.fuse_kernel, w.bias
        if name == "fuse_kernel":
            kern = x.reshape(kern.shape)
        elif name == "bias":
            bias = x
        else:
            args[name] = x.reshape(shape)
        return args, cct.CctWeights(kern, bias)

    reports = []
    for name in names:
        x0 = getattr(w, name) if name in ("fuse_kernel", "bias") else feats[name]

        def f(x, name=name):
            a, ww = unpack(name, x)
            return float((g_out * cct.cct_forward(a["f_f"], a["f_b"], a["f_f_re"], a["f_d"], ww)).sum())

        def g(x, name=name):
            a, ww = unpack(name, x)
            return cct.cct_forward_vjp(a["f_f"], a["f_b"], a["f_f_re"], a["f_d"], ww, g_out)[name]

        reports.append(check_gradient(f, x0, g, step, tol, f"cct_forward[{name}]"))

    for name in ("f_b", "f_f", "f_d"):
        def f(x, name=name):
            a = dict(feats, **{name: x.reshape(shape)})
            return float((g_out * cct.cct_cm(a["f_b"], a["f_f"], a["f_d"])).sum())

        def g(x, name=name):
            a = dict(feats, **{name: x.reshape(shape)})
            return cct.cct_cm_vjp(a["f_b"], a["f_f"], a["f_d"], g_out)[name]

        reports.append(check_gradient(f, feats[name], g, step, tol, f"cct_cm[{name}]"))
    return reports


def gradient_suite(seed=0, step=STEP, tol=TOL):
    """Run every gradient check on seeded random instances."""
    rng = np.random.default_rng(seed)
    reports = [
        _check_photometric(rng, step, tol),
        _check_min_reprojection(rng, step, tol),
        _check_reprojection_depth(rng, step, tol),
        _check_smoothness(rng, step, tol),
        _check_cgt(rng, step, tol),
        _check_wbce(rng, step, tol),
        _check_soft_iou(rng, step, tol, "standard"),
        _check_soft_iou(rng, step, tol, "additive"),
        _check_boundary(rng, step, tol),
        _check_hybrid(rng, step, tol),
    ]
    reports.extend(_cct_checks(rng, step, tol))
    return reports


def format_table(reports):
    lines = [f"{'check':<28s} {'max rel err':>10s}  result"]
    lines += [r.row() for r in reports]
    return "\n".join(lines) + "\n"
