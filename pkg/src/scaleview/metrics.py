"""Depth, odometry and layout evaluation metrics."""

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from ._validation import check_binary, check_grid, check_same_shape
from .config import DepthEvalConfig
from .exceptions import DimensionMismatch, NoValidPixels, TrajectoryTooShort
from .geometry import Se3Pose

SEGMENT_LENGTHS = (100, 200, 300, 400, 500, 600, 700, 800)


@dataclass
class MetricsReport:
    """Ordered named scalars with units."""

    values: dict = field(default_factory=dict)
    units: dict = field(default_factory=dict)

    def add(self, name, value, unit=""):
        self.values[name] = float(value)
        self.units[name] = unit

    def __getitem__(self, name):
        return self.values[name]

    def __contains__(self, name):
        return name in self.values

    def to_csv(self):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["metric", "value", "unit"])
        for name, value in self.values.items():
            writer.writerow([name, f"{value:.6g}", self.units.get(name, "")])
        return buf.getvalue()

    def to_json(self):
        payload = {name: {"value": float(f"{v:.6g}"), "unit": self.units.get(name, "")}
                   for name, v in self.values.items()}
        return json.dumps(payload, indent=2) + "\n"


# -- depth -----------------------------------------------------------------

def _depth_errors(pred, gt):
    abs_rel = np.mean(np.abs(gt - pred) / gt)
    sq_rel = np.mean((gt - pred) ** 2 / gt)
    rmse = np.sqrt(np.mean((gt - pred) ** 2))
    rmse_log = np.sqrt(np.mean((np.log(gt) - np.log(pred)) ** 2))
    return abs_rel, sq_rel, rmse, rmse_log


def depth_metrics(pred, gt, mask=None, cfg=DepthEvalConfig()):
    """Error metrics of one predicted depth map against ground truth.

    The scale factor is ``median(gt) / median(pred)`` over valid pixels and
    is applied to the prediction only when ``cfg.apply_median_scaling``.
    """
    pred = check_grid(pred, "pred")
    gt = check_grid(gt, "gt")
    check_same_shape(pred, gt, names=("pred", "gt"))
    valid = (gt >= cfg.min_depth) & (gt <= cfg.max_depth) & (pred > 0)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        check_same_shape(mask, gt, names=("mask", "gt"))
        valid &= mask
    if not valid.any():
        raise NoValidPixels("no valid ground-truth pixels")
    p = pred[valid]
    g = gt[valid]
    scale = np.median(g) / np.median(p)
    if cfg.apply_median_scaling:
        p = p * scale
    p = np.clip(p, cfg.min_depth, cfg.max_depth)
    g = np.clip(g, cfg.min_depth, cfg.max_depth)
    abs_rel, sq_rel, rmse, rmse_log = _depth_errors(p, g)

    report = MetricsReport()
    report.add("abs_rel", abs_rel)
    report.add("sq_rel", sq_rel, "m")
    report.add("rmse", rmse, "m")
    report.add("rmse_log", rmse_log)
    report.add("scale_factor", scale)
    return report


def aggregate_depth_metrics(preds, gts, masks=None, cfg=DepthEvalConfig()):
    """Mean of per-frame metrics; the scale factor is reported as mean and std."""
    if masks is None:
        masks = [None] * len(preds)
    frames = [depth_metrics(p, g, m, cfg) for p, g, m in zip(preds, gts, masks)]
    if not frames:
        raise NoValidPixels("no frames to evaluate")
    report = MetricsReport()
    for name in ("abs_rel", "sq_rel", "rmse", "rmse_log"):
        report.add(name, np.mean([f[name] for f in frames]), frames[0].units[name])
    scales = np.array([f["scale_factor"] for f in frames])
    report.add("scale_factor_mean", scales.mean())
    report.add("scale_factor_std", scales.std())
    report.add("frames", len(frames))
    return report


# -- odometry --------------------------------------------------------------

def _as_matrices(traj):
    if isinstance(traj, np.ndarray) and traj.ndim == 3:
        mats = np.asarray(traj, dtype=np.float64)
        if mats.shape[1:] == (3, 4):
            bottom = np.broadcast_to([0.0, 0.0, 0.0, 1.0], (len(mats), 1, 4))
            mats = np.concatenate([mats, bottom], axis=1)
        return mats
    return np.stack([p.matrix if isinstance(p, Se3Pose) else np.asarray(p) for p in traj])


def trajectory_distances(mats):
    steps = np.linalg.norm(np.diff(mats[:, :3, 3], axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def _rotation_angle(R):
    return np.arccos(np.clip(0.5 * (np.trace(R) - 1.0), -1.0, 1.0))


def odometry_drift(pred, gt, step=10, lengths=SEGMENT_LENGTHS):
    """Average translational (%) and rotational (deg/100 m) drift.

    For every start frame (every ``step`` frames) and every segment length,
    the segment ends at the first frame whose ground-truth path distance
    exceeds the length; the relative-pose error between predicted and true
    segment motion is normalized by the nominal length.
    """
    P = _as_matrices(pred)
    G = _as_matrices(gt)
    if P.shape != G.shape:
        raise DimensionMismatch("trajectories must have the same number of poses")
    if len(G) < 2:
        raise TrajectoryTooShort("need at least two poses")
    dist = trajectory_distances(G)
    t_errs, r_errs = [], []
    for first in range(0, len(G), step):
        for length in lengths:
            ahead = np.flatnonzero(dist > dist[first] + length)
            if ahead.size == 0:
                continue
            last = ahead[0]
            d_gt = np.linalg.inv(G[first]) @ G[last]
            d_pred = np.linalg.inv(P[first]) @ P[last]
            err = np.linalg.inv(d_pred) @ d_gt
            t_errs.append(np.linalg.norm(err[:3, 3]) / length)
            r_errs.append(_rotation_angle(err[:3, :3]) / length)
    if not t_errs:
        raise TrajectoryTooShort("no segment of at least 100 m exists")
    report = MetricsReport()
    report.add("t_err", 100.0 * np.mean(t_errs), "%")
    report.add("r_err", np.degrees(np.mean(r_errs)) * 100.0, "deg/100m")
    report.add("segments", len(t_errs))
    return report


# -- layout ----------------------------------------------------------------

def _iou(a, b):
    union = (a | b).sum()
    return 1.0 if union == 0 else (a & b).sum() / union


def average_precision(scores, labels):
    """Area under the monotone precision envelope over recall (trapezoidal).

    Thresholds sweep every distinct score; the curve starts at recall 0 with
    the envelope's first precision. Returns 0 when there are no positives.
    """
    scores = np.asarray(scores, dtype=np.float64).ravel()
    labels = np.asarray(labels, dtype=bool).ravel()
    n_pos = labels.sum()
    if n_pos == 0:
        return 0.0
    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    y = labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    # keep the last index of every run of tied scores
    last = np.r_[s[1:] != s[:-1], True]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / n_pos
    envelope = np.maximum.accumulate(precision[::-1])[::-1]
    # on a recall plateau the interpolated precision is the plateau's first (largest) envelope value
    first = np.r_[True, recall[1:] != recall[:-1]]
    recall, envelope = recall[first], envelope[first]
    r = np.r_[0.0, recall]
    p = np.r_[envelope[0], envelope]
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2))


def layout_metrics(pred, gt, threshold=0.5):
    """IoU at ``threshold`` (foreground, background and their mean) and AP, in %."""
    pred = check_grid(pred, "pred", lo=0.0, hi=1.0)
    gt = check_binary(gt, "gt")
    check_same_shape(pred, gt, names=("pred", "gt"))
    hard = pred >= threshold
    fg = _iou(hard, gt)
    bg = _iou(~hard, ~gt)
    report = MetricsReport()
    report.add("fg_iou", 100 * fg, "%")
    report.add("bg_iou", 100 * bg, "%")
    report.add("miou", 100 * (fg + bg) / 2, "%")
    report.add("map", 100 * average_precision(pred, gt), "%")
    return report
