"""Hybrid BEV layout loss: weighted BCE, soft IoU and SDF boundary terms."""

import warnings
from dataclasses import dataclass

import numpy as np

from ._validation import check_binary, check_grid, check_same_shape
from .config import LayoutLossConfig
from .exceptions import DegenerateUnionWarning, ScaleviewError, UniformMaskWarning

EPS = 1e-7
_DEFAULT = LayoutLossConfig()


@dataclass(frozen=True, eq=False)
class LayoutGrid:
    pred: np.ndarray
    gt: np.ndarray
    category: str = "road"

    def __post_init__(self):
        pred = check_grid(self.pred, "pred", lo=0.0, hi=1.0)
        gt = check_binary(self.gt, "gt")
        check_same_shape(pred, gt, names=("pred", "gt"))
        if self.category not in ("road", "vehicle"):
            raise ScaleviewError(f"unknown category {self.category!r}")
        object.__setattr__(self, "pred", pred)
        object.__setattr__(self, "gt", gt)


@dataclass(frozen=True, eq=False)
class SdfMap:
    """Signed distance to the ground-truth boundary (cells).

    For a uniform ground truth there is no boundary and every value is the
    sentinel ``+inf`` (all background) or ``-inf`` (all foreground); such
    entries are excluded from losses.
    """

    values: np.ndarray
    uniform: bool = False

    @property
    def included(self):
        return np.isfinite(self.values)


def wbce_loss(pred, gt, weight, positive_only=False, return_grad=False):
    """Class-weighted binary cross-entropy, averaged over pixels.

    By default ``weight`` scales both the positive and negative terms; with
    ``positive_only`` only the foreground term is weighted.
    """
    pred = check_grid(pred, "pred", lo=0.0, hi=1.0)
    y = check_binary(gt, "gt").astype(np.float64)
    check_same_shape(pred, y, names=("pred", "gt"))
    x = np.clip(pred, EPS, 1 - EPS)
    w_neg = 1.0 if positive_only else weight
    per_pixel = -(weight * y * np.log(x) + w_neg * (1 - y) * np.log(1 - x))
    loss = float(per_pixel.mean())
    if not return_grad:
        return loss
    grad = -(weight * y / x - w_neg * (1 - y) / (1 - x)) / x.size
    grad = np.where((pred > EPS) & (pred < 1 - EPS), grad, 0.0)
    return loss, grad


def soft_iou_loss(pred, gt, union_mode="standard", return_grad=False):
    """Negative soft IoU averaged over the foreground and background channels.

    ``union_mode="additive"`` uses ``sum(x + y + x*y)`` as the union
    instead of ``sum(x + y - x*y)``. A channel whose union is empty is
    skipped with a :class:`DegenerateUnionWarning`.
    """
    if union_mode not in ("standard", "additive"):
        raise ScaleviewError(f"unknown union_mode {union_mode!r}")
    x = check_grid(pred, "pred", lo=0.0, hi=1.0)
    y = check_binary(gt, "gt").astype(np.float64)
    check_same_shape(x, y, names=("pred", "gt"))
    sign = -1.0 if union_mode == "standard" else 1.0

    ratios = []
    grad = np.zeros_like(x)
    for xc, yc, dxc in ((x, y, 1.0), (1 - x, 1 - y, -1.0)):
        inter = (xc * yc).sum()
        union = (xc + yc + sign * xc * yc).sum()
        if union == 0:
            warnings.warn("soft IoU channel has an empty union", DegenerateUnionWarning, stacklevel=2)
            continue
        ratios.append(inter / union)
        grad += dxc * (yc - inter / union * (1 + sign * yc)) / union
    if not ratios:
        return (0.0, grad) if return_grad else 0.0
    loss = -float(np.mean(ratios))
    if not return_grad:
        return loss
    return loss, -grad / len(ratios)


def inner_boundary(gt):
    """Foreground pixels with at least one 4-connected background neighbor."""
    fg = check_binary(gt, "gt")
    bg = ~fg
    touch = np.zeros_like(fg)
    touch[1:, :] |= bg[:-1, :]
    touch[:-1, :] |= bg[1:, :]
    touch[:, 1:] |= bg[:, :-1]
    touch[:, :-1] |= bg[:, 1:]
    return fg & touch


def _edt_1d(f):
    """Lower envelope of parabolas (Felzenszwalb & Huttenlocher) for one line."""
    n = f.shape[0]
    sites = np.flatnonzero(np.isfinite(f))
    out = np.full(n, np.inf)
    if sites.size == 0:
        return out
    v = [int(sites[0])]
    z = [-np.inf]
    for q in sites[1:]:
        q = int(q)
        while True:
            p = v[-1]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
            if s <= z[-1]:
                v.pop()
                z.pop()
            else:
                break
        v.append(q)
        z.append(s)
    z.append(np.inf)
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        out[q] = (q - v[k]) ** 2 + f[v[k]]
    return out


def squared_distance_to(seeds):
    """Exact squared Euclidean distance of every cell to the nearest seed cell."""
    seeds = np.asarray(seeds, dtype=bool)
    f = np.where(seeds, 0.0, np.inf)
    cols = np.stack([_edt_1d(f[:, j]) for j in range(f.shape[1])], axis=1)
    return np.stack([_edt_1d(cols[i]) for i in range(f.shape[0])], axis=0)


def signed_distance(gt):
    """Signed Euclidean distance to the inner foreground boundary.

    Negative inside the foreground, positive outside, zero on the boundary.
    """
    fg = check_binary(gt, "gt")
    if fg.all() or not fg.any():
        warnings.warn("ground truth is uniform; SDF has no boundary", UniformMaskWarning, stacklevel=2)
        fill = -np.inf if fg.all() else np.inf
        return SdfMap(np.full(fg.shape, fill), uniform=True)
    dist = np.sqrt(squared_distance_to(inner_boundary(fg)))
    return SdfMap(np.where(fg, -dist, dist), uniform=False)


def boundary_loss(pred, sdf, return_grad=False):
    """Mean of ``sdf * pred`` over cells with a finite SDF value."""
    pred = check_grid(pred, "pred", lo=0.0, hi=1.0)
    check_same_shape(pred, sdf.values, names=("pred", "sdf"))
    inc = sdf.included
    n = int(inc.sum())
    if n == 0:
        return (0.0, np.zeros_like(pred)) if return_grad else 0.0
    loss = float((sdf.values[inc] * pred[inc]).sum() / n)
    if not return_grad:
        return loss
    return loss, np.where(inc, sdf.values, 0.0) / n


def hybrid_loss(layout, cfg=_DEFAULT, sdf=None, return_grad=False):
    """``wbce + lam * soft_iou + lam * boundary`` for one category."""
    if sdf is None:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UniformMaskWarning)
            sdf = signed_distance(layout.gt)
    w = cfg.weight(layout.category)
    parts = [
        wbce_loss(layout.pred, layout.gt, w, cfg.positive_only_weight, return_grad=return_grad),
        soft_iou_loss(layout.pred, layout.gt, cfg.union_mode, return_grad=return_grad),
        boundary_loss(layout.pred, sdf, return_grad=return_grad),
    ]
    coef = (1.0, cfg.lam, cfg.lam)
    if not return_grad:
        return float(sum(c * p for c, p in zip(coef, parts)))
    loss = float(sum(c * p[0] for c, p in zip(coef, parts)))
    grad = sum(c * p[1] for c, p in zip(coef, parts))
    return loss, grad


def total_layout_loss(road, vehicle, cfg=_DEFAULT):
    """Sum of the per-category hybrid losses."""
    return hybrid_loss(road, cfg) + hybrid_loss(vehicle, cfg)
