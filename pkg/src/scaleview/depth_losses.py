"""Photometric, smoothness and ground-plane scale losses for depth and pose.

Every loss can return its analytic gradient (``return_grad=True``); the
gradients are hand-derived and validated by :mod:`scaleview.gradcheck`.
"""

import warnings

import numpy as np

from ._validation import check_depth, check_image, check_same_shape
from .config import DepthPoseLossConfig
from .exceptions import DimensionMismatch, EmptyMaskWarning, EmptyValidRegion, NoValidPixels
from .warping import warp_image

_DEFAULT = DepthPoseLossConfig()


def _box3(x):
    """3x3 mean filter over the first two axes with reflection padding."""
    H, W = x.shape[:2]
    pad = [(1, 1), (1, 1)] + [(0, 0)] * (x.ndim - 2)
    p = np.pad(x, pad, mode="reflect")
    out = np.zeros_like(x)
    for dy in range(3):
        for dx in range(3):
            out += p[dy:dy + H, dx:dx + W]
    return out / 9.0


def _box3_adjoint(g):
    """Adjoint of :func:`_box3`."""
    H, W = g.shape[:2]
    P = np.zeros((H + 2, W + 2) + g.shape[2:])
    for dy in range(3):
        for dx in range(3):
            P[dy:dy + H, dx:dx + W] += g
    P /= 9.0
    # padded index p holds original index p-1; fold the reflected borders back
    P[2] += P[0]
    P[H - 1] += P[H + 1]
    P = P[1:H + 1]
    P[:, 2] += P[:, 0]
    P[:, W - 1] += P[:, W + 1]
    return P[:, 1:W + 1]


# second moments are taken about this offset to limit cancellation in var = E[x^2] - E[x]^2
_SHIFT = 0.5


def _ssim_terms(a, b, c1, c2):
    mu_a, mu_b = _box3(a), _box3(b)
    a_, b_ = a - _SHIFT, b - _SHIFT
    m_a, m_b = mu_a - _SHIFT, mu_b - _SHIFT
    s_a = _box3(a_ * a_) - m_a ** 2
    s_b = _box3(b_ * b_) - m_b ** 2
    s_ab = _box3(a_ * b_) - m_a * m_b
    n1 = 2 * mu_a * mu_b + c1
    n2 = 2 * s_ab + c2
    d1 = mu_a ** 2 + mu_b ** 2 + c1
    d2 = s_a + s_b + c2
    return mu_a, mu_b, n1, n2, d1, d2


def _check_pair(a, b):
    a = check_image(a, "a")
    b = check_image(b, "b")
    if a.shape != b.shape:
        raise DimensionMismatch(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.shape[0] < 2 or a.shape[1] < 2:
        raise DimensionMismatch("SSIM needs images of at least 2 x 2")
    return a, b


def ssim(a, b, cfg=_DEFAULT):
    """Per-pixel SSIM over 3x3 windows, averaged over channels (H x W)."""
    a, b = _check_pair(a, b)
    _, _, n1, n2, d1, d2 = _ssim_terms(a, b, cfg.ssim_c1, cfg.ssim_c2)
    return (n1 * n2 / (d1 * d2)).mean(axis=2)


def _ssim_vjp_b(a, b, upstream, cfg):
    """Gradient of ``sum(upstream * ssim(a, b))`` with respect to ``b``."""
    C = a.shape[2]
    mu_a, mu_b, n1, n2, d1, d2 = _ssim_terms(a, b, cfg.ssim_c1, cfg.ssim_c2)
    S = n1 * n2 / (d1 * d2)
    g = np.repeat(upstream[..., None], C, axis=2) / C
    m_a, m_b = mu_a - _SHIFT, mu_b - _SHIFT
    dS_dmu_b = S * (2 * mu_a / n1 - 2 * m_a / n2 - 2 * mu_b / d1 + 2 * m_b / d2)
    dS_dbb = -S / d2
    dS_dab = 2 * S / n2
    return (_box3_adjoint(g * dS_dmu_b)
            + 2 * (b - _SHIFT) * _box3_adjoint(g * dS_dbb)
            + (a - _SHIFT) * _box3_adjoint(g * dS_dab))


def photometric_error(target, recon, cfg=_DEFAULT):
    """Per-pixel ``alpha * (1 - SSIM) / 2 + (1 - alpha) * L1`` (L1 averaged over channels)."""
    target, recon = _check_pair(target, recon)
    s = ssim(target, recon, cfg)
    l1 = np.abs(target - recon).mean(axis=2)
    return cfg.alpha * (1 - s) / 2 + (1 - cfg.alpha) * l1


def photometric_error_vjp(target, recon, upstream, cfg=_DEFAULT):
    """Gradient of ``sum(upstream * photometric_error(target, recon))`` w.r.t. ``recon``."""
    target, recon = _check_pair(target, recon)
    upstream = np.asarray(upstream, dtype=np.float64)
    C = target.shape[2]
    g_ssim = _ssim_vjp_b(target, recon, upstream, cfg)
    g_l1 = np.sign(recon - target) * upstream[..., None] / C
    return -cfg.alpha / 2 * g_ssim + (1 - cfg.alpha) * g_l1


def min_reprojection(target, recons, sources, cfg=_DEFAULT, return_grad=False):
    """Per-pixel minimum reprojection loss with auto-masking.

    ``recons`` is a list of ``(recon, valid_mask)`` pairs and ``sources`` the
    unwarped source frames used for the identity-reprojection baseline.
    Returns ``(loss, automask)``, plus a list of gradients with respect to
    each reconstruction when ``return_grad`` is set.
    """
    target = check_image(target, "target")
    if not recons:
        raise EmptyValidRegion("need at least one reconstruction")
    errors = []
    for recon, mask in recons:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != target.shape[:2]:
            raise DimensionMismatch("reconstruction mask does not match the target")
        errors.append(np.where(mask, photometric_error(target, recon, cfg), np.inf))
    errors = np.stack(errors)
    best = errors.min(axis=0)
    which = errors.argmin(axis=0)

    identity = np.full(target.shape[:2], np.inf)
    for src in sources:
        identity = np.minimum(identity, photometric_error(target, src, cfg))

    automask = np.isfinite(best) & (best < identity)
    n = int(automask.sum())
    if n == 0:
        raise EmptyValidRegion("no pixel is both valid and kept by the auto-mask")
    loss = float(best[automask].sum() / n)
    if not return_grad:
        return loss, automask
    grads = []
    for k, (recon, _) in enumerate(recons):
        upstream = (automask & (which == k)).astype(np.float64) / n
        grads.append(photometric_error_vjp(target, recon, upstream, cfg))
    return loss, automask, grads


def reprojection_loss(target, sources, depth, poses, K, cfg=_DEFAULT, return_grad=False):
    """Warp every source into the target view and apply :func:`min_reprojection`.

    ``poses[k]`` maps target-camera points into source ``k``. With
    ``return_grad`` the gradient of the loss with respect to ``depth`` is
    returned as a third value.
    """
    depth = check_depth(depth)
    if len(sources) != len(poses):
        raise DimensionMismatch("one pose per source frame is required")
    warped = [warp_image(src, depth, T, K, return_grad=return_grad) for src, T in zip(sources, poses)]
    recons = [(w[0], w[1]) for w in warped]
    if not return_grad:
        return min_reprojection(target, recons, sources, cfg)
    loss, automask, g_recon = min_reprojection(target, recons, sources, cfg, return_grad=True)
    g_depth = np.zeros_like(depth)
    for g, w in zip(g_recon, warped):
        g_depth += (g * w[2]).sum(axis=2)
    return loss, automask, g_depth


def smoothness_loss(depth, image, return_grad=False):
    """Edge-aware smoothness of the mean-normalized inverse depth."""
    depth = check_depth(depth)
    image = check_image(image)
    if image.shape[:2] != depth.shape:
        raise DimensionMismatch("depth and image sizes differ")
    inv = 1.0 / depth
    m = inv.mean()
    mu = inv / m
    gx = np.diff(mu, axis=1)
    gy = np.diff(mu, axis=0)
    wx = np.exp(-np.abs(np.diff(image, axis=1)).mean(axis=2))
    wy = np.exp(-np.abs(np.diff(image, axis=0)).mean(axis=2))
    parts = []
    if gx.size:
        parts.append((np.abs(gx) * wx).mean())
    if gy.size:
        parts.append((np.abs(gy) * wy).mean())
    loss = float(sum(parts))
    if not return_grad:
        return loss

    g_mu = np.zeros_like(mu)
    if gx.size:
        s = np.sign(gx) * wx / gx.size
        g_mu[:, 1:] += s
        g_mu[:, :-1] -= s
    if gy.size:
        s = np.sign(gy) * wy / gy.size
        g_mu[1:, :] += s
        g_mu[:-1, :] -= s
    g_inv = g_mu / m - (g_mu * inv).sum() / (m * m * inv.size)
    return loss, g_inv * (-1.0 / depth ** 2)


def cgt_loss(depth, field, return_grad=False):
    """Mean relative deviation of ``depth`` from the projected ground distances.

    Only pixels with ``field.fv_mask`` set contribute. An empty mask yields 0
    and an :class:`EmptyMaskWarning`.
    """
    depth = check_depth(depth)
    check_same_shape(depth, field.fv_z, names=("depth", "fv_z"))
    mask = np.asarray(field.fv_mask, dtype=bool)
    n = int(mask.sum())
    if n == 0:
        warnings.warn("distance field has no valid pixels", EmptyMaskWarning, stacklevel=2)
        return (0.0, np.zeros_like(depth)) if return_grad else 0.0
    z = field.fv_z[mask]
    d = depth[mask]
    loss = float((np.abs(z - d) / z).sum() / n)
    if not return_grad:
        return loss
    grad = np.zeros_like(depth)
    grad[mask] = np.sign(d - z) / (z * n)
    return loss, grad


def batch_cgt_loss(depths, fields):
    """Average :func:`cgt_loss` over frames, skipping frames with no valid pixels."""
    values = [cgt_loss(d, f) for d, f in zip(depths, fields) if f.fv_mask.any()]
    return float(np.mean(values)) if values else 0.0


def depth_pose_objective(l_ph, l_sm, l_cgt, cfg=_DEFAULT):
    total = l_ph + cfg.smooth_weight * l_sm + cfg.beta * l_cgt
    if not np.isfinite(total):
        raise ValueError("objective terms must be finite")
    return float(total)


_INVPHI = (np.sqrt(5.0) - 1) / 2


def fit_scale(depth, field, tol=1e-12, max_iter=500):
    """Scale ``s`` minimizing ``cgt_loss(s * depth, field)``.

    The objective is convex and piecewise linear in ``s`` with breakpoints at
    the per-pixel ratios ``z / d``. Golden-section search brackets the
    minimizer; the result is then snapped to the best nearby breakpoint, where
    the minimum of a piecewise-linear function is attained.
    """
    depth = check_depth(depth)
    check_same_shape(depth, field.fv_z, names=("depth", "fv_z"))
    mask = np.asarray(field.fv_mask, dtype=bool)
    if not mask.any():
        raise NoValidPixels("distance field has no valid pixels")
    z = field.fv_z[mask]
    d = depth[mask]
    r = d / z

    def objective(s):
        return np.abs(1.0 - s * r).mean()

    ratios = np.sort(z / d)
    lo, hi = ratios[0], ratios[-1]
    if hi - lo <= tol * hi:
        candidates = ratios[[0, -1]]
    else:
        a, b = lo, hi
        c = b - _INVPHI * (b - a)
        e = a + _INVPHI * (b - a)
        fc, fe = objective(c), objective(e)
        for _ in range(max_iter):
            if b - a <= tol * b:
                break
            if fc <= fe:
                b, e, fe = e, c, fc
                c = b - _INVPHI * (b - a)
                fc = objective(c)
            else:
                a, c, fc = c, e, fe
                e = a + _INVPHI * (b - a)
                fe = objective(e)
        i = np.searchsorted(ratios, 0.5 * (a + b))
        candidates = ratios[max(i - 2, 0):i + 2]
    values = [objective(s) for s in candidates]
    return float(candidates[int(np.argmin(values))])
