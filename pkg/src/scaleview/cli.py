"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 I/O error. Reports go to
``--out`` (``.json`` or ``.csv`` by extension) or to stdout as CSV.
Set ``SCALEVIEW_NUM_THREADS`` to cap BLAS/OpenMP threads.
"""

import argparse
import json
import os
import sys
import warnings

import numpy as np
from threadpoolctl import threadpool_limits

from . import io as sio
from . import viz
from .cct import CctWeights, cct_cm, cct_cv, cct_fuse
from .config import DepthEvalConfig, ToolkitConfig, load_config
from .depth_losses import cgt_loss, depth_pose_objective, fit_scale, min_reprojection, smoothness_loss
from .exceptions import ScaleviewError
from .geometry import BevSpec, project_distance_field
from .gradcheck import format_table, gradient_suite
from .layout_losses import LayoutGrid, boundary_loss, hybrid_loss, signed_distance, soft_iou_loss, wbce_loss
from .metrics import MetricsReport, aggregate_depth_metrics, layout_metrics, odometry_drift
from .synth import SyntheticScene, render_scene, scale_recovery_experiment
from .warping import warp_image

DEFAULT_SEED = 0


class UsageError(ScaleviewError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _emit(report, out):
    if out is None:
        sys.stdout.write(report.to_csv())
        return
    text = report.to_json() if out.endswith(".json") else report.to_csv()
    with open(out, "w") as fh:
        fh.write(text)


def _require_files(*paths):
    for p in paths:
        if p is not None and not os.path.isfile(p):
            raise FileNotFoundError(f"input file not found: {p}")


def _bev(cfg, args):
    return BevSpec(args.cells or cfg.bev.cells, args.extent or cfg.bev.extent_z, cfg.bev.camera_height)


def _field_from_calib(args, cfg, shape=None):
    calib = sio.read_calibration(args.calib)
    K = calib["K"]
    road = sio.read_layout(args.road_mask) if getattr(args, "road_mask", None) else None
    size = shape or (K.height, K.width)
    return project_distance_field(_bev(cfg, args), K, calib["T_ego_cam"], calib["T_bev_ego"], road, size)


# -- subcommands -----------------------------------------------------------

def cmd_project_field(args, cfg):
    _require_files(args.calib, args.road_mask)
    size = tuple(args.out_size) if args.out_size else None
    field = _field_from_calib(args, cfg, size)
    report = MetricsReport()
    report.add("valid_pixels", field.n_valid)
    report.add("valid_fraction", field.fv_mask.mean())
    if field.n_valid:
        report.add("min_depth", field.fv_z[field.fv_mask > 0].min(), "m")
        report.add("max_depth", field.fv_z[field.fv_mask > 0].max(), "m")
    if args.field_png:
        sio.write_depth(args.field_png, field.fv_z)
    if args.viz:
        sio.write_image(args.viz, viz.heat(field.fv_z, field.fv_mask > 0))
    return report


def cmd_warp(args, cfg):
    _require_files(args.src, args.depth, args.pose, args.calib)
    src = sio.read_image(args.src)
    depth, valid_depth = sio.read_depth(args.depth)
    if not valid_depth.all():
        raise ScaleviewError("warp needs a dense depth map (no zero pixels)")
    pose = _read_single_pose(args.pose)
    K = sio.read_calibration(args.calib)["K"]
    recon, valid = warp_image(src, depth, pose, K)
    report = MetricsReport()
    report.add("valid_fraction", valid.mean())
    sio.write_image(args.output, recon)
    if args.mask_out:
        sio.write_image(args.mask_out, valid.astype(np.float64))
    return report


def _read_single_pose(path):
    poses = sio.read_poses(path)
    if len(poses) != 1:
        raise ScaleviewError(f"{path}: expected exactly one pose line")
    return poses[0]


def cmd_losses(args, cfg):
    _require_files(args.target, args.depth, args.calib, args.layout_pred, args.layout_gt,
                   *(args.recon or []), *(args.source or []))
    report = MetricsReport()
    dp = cfg.depth_pose
    l_ph = l_sm = l_cgt = None
    if args.target:
        target = sio.read_image(args.target)
        if args.recon:
            recons = [(sio.read_image(p), np.ones(target.shape[:2], bool)) for p in args.recon]
            sources = [sio.read_image(p) for p in (args.source or [])]
            l_ph, automask = min_reprojection(target, recons, sources, dp)
            report.add("photometric", l_ph)
            report.add("automask_fraction", automask.mean())
        if args.depth:
            depth, valid = sio.read_depth(args.depth)
            if not valid.all():
                raise ScaleviewError("smoothness needs a dense depth map")
            l_sm = smoothness_loss(depth, target)
            report.add("smoothness", l_sm)
            if args.calib:
                field = _field_from_calib(args, cfg, depth.shape)
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    l_cgt = cgt_loss(depth, field)
                report.add("cgt", l_cgt)
        if None not in (l_ph, l_sm, l_cgt):
            report.add("depth_pose_objective", depth_pose_objective(l_ph, l_sm, l_cgt, dp))
    if args.layout_pred and args.layout_gt:
        layout = LayoutGrid(sio.read_layout(args.layout_pred, binary=False),
                            sio.read_layout(args.layout_gt), args.category)
        lc = cfg.layout
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            sdf = signed_distance(layout.gt)
            report.add("wbce", wbce_loss(layout.pred, layout.gt, lc.weight(args.category), lc.positive_only_weight))
            report.add("soft_iou", soft_iou_loss(layout.pred, layout.gt, lc.union_mode))
            report.add("boundary", boundary_loss(layout.pred, sdf))
            report.add("hybrid", hybrid_loss(layout, lc, sdf))
        if args.sdf_viz:
            sio.write_image(args.sdf_viz, viz.diverging(sdf.values))
    if not report.values:
        raise UsageError("losses: nothing to compute; give --target/--recon or --layout-pred/--layout-gt")
    return report


def cmd_cct(args, cfg):
    _require_files(args.f_f, args.f_b, args.f_f_re, args.f_d, args.weights)
    f_f = sio.read_features(args.f_f)
    f_b = sio.read_features(args.f_b)
    f_f_re = sio.read_features(args.f_f_re)
    f_d = sio.read_features(args.f_d)
    w = sio.read_weights(args.weights) if args.weights else CctWeights.random(f_f.shape[-1], seed=args.seed)
    f_cv = cct_cv(f_f, f_b, f_f_re, w)
    f_cm = cct_cm(f_b, f_f, f_d)
    out = cct_fuse(f_f, f_cv, f_cm)
    report = MetricsReport()
    report.add("height", out.shape[0])
    report.add("width", out.shape[1])
    report.add("channels", out.shape[2])
    report.add("norm_cv", np.linalg.norm(f_cv))
    report.add("norm_cm", np.linalg.norm(f_cm))
    report.add("norm_out", np.linalg.norm(out))
    sio.write_features(args.output, out)
    return report


def cmd_eval_depth(args, cfg):
    if len(args.pred) != len(args.gt):
        raise UsageError("eval-depth: --pred and --gt need the same number of files")
    _require_files(*args.pred, *args.gt)
    ec = cfg.depth_eval
    ec = DepthEvalConfig(args.min_depth or ec.min_depth, args.max_depth or ec.max_depth,
                         not args.no_scaling)
    preds, gts, masks = [], [], []
    for p, g in zip(args.pred, args.gt):
        pd, pv = sio.read_depth(p)
        gd, gv = sio.read_depth(g)
        preds.append(np.where(pv, pd, ec.min_depth))
        gts.append(gd)
        masks.append(gv & pv)
    return aggregate_depth_metrics(preds, gts, masks, ec)


def cmd_eval_odometry(args, cfg):
    _require_files(args.pred, args.gt)
    return odometry_drift(sio.read_poses(args.pred), sio.read_poses(args.gt), step=args.step)


def cmd_eval_layout(args, cfg):
    _require_files(args.pred, args.gt)
    pred = sio.read_layout(args.pred, binary=False)
    gt = sio.read_layout(args.gt)
    report = layout_metrics(pred, gt, args.threshold)
    if args.overlay:
        sio.write_image(args.overlay, viz.overlay(pred, gt, args.threshold))
    return report


def cmd_fit_scale(args, cfg):
    _require_files(args.depth, args.calib, args.road_mask)
    depth, valid = sio.read_depth(args.depth)
    if not valid.all():
        raise ScaleviewError("fit-scale needs a dense depth map")
    field = _field_from_calib(args, cfg, depth.shape)
    s = fit_scale(depth, field)
    report = MetricsReport()
    report.add("scale", s)
    report.add("cgt_before", cgt_loss(depth, field))
    report.add("cgt_after", cgt_loss(s * depth, field))
    report.add("cgt_pixels", field.n_valid)
    if args.scaled_out:
        sio.write_depth(args.scaled_out, s * depth)
    return report


def cmd_synth_demo(args, cfg):
    _require_files(args.scene)
    if args.scene:
        with open(args.scene) as fh:
            scene = SyntheticScene.from_dict(json.load(fh))
    else:
        scene = SyntheticScene(seed=args.seed)
    report = scale_recovery_experiment(scene, args.scale, noise=args.noise, seed=args.seed)
    if args.frames_dir:
        os.makedirs(args.frames_dir, exist_ok=True)
        for i in range(len(scene.poses)):
            img, depth, _ = render_scene(scene, i)
            sio.write_image(os.path.join(args.frames_dir, f"frame_{i:03d}.png"), img)
            sio.write_depth(os.path.join(args.frames_dir, f"depth_{i:03d}.png"), np.minimum(depth, 255.0))
    return report


def cmd_gradcheck(args, cfg):
    reports = gradient_suite(seed=args.seed)
    sys.stderr.write(format_table(reports))
    out = MetricsReport()
    for r in reports:
        out.add(r.name, r.max_rel_error)
    out.add("all_passed", all(r.passed for r in reports))
    if not all(r.passed for r in reports):
        _emit(out, args.out)
        raise ScaleviewError("gradient check failed")
    return out


# -- parser ----------------------------------------------------------------

def build_parser():
    parser = _Parser(prog="scaleview", description="Scale-aware cross-view geometry and loss toolkit.")
    parser.add_argument("--config", help="JSON config overriding the defaults")
    parser.add_argument("--print-config", action="store_true", help="print the effective config and exit")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--out", help="report path (.json or .csv); stdout CSV if omitted")
        p.add_argument("--seed", type=int, default=DEFAULT_SEED)
        p.set_defaults(func=func)
        return p

    def bev_args(p):
        p.add_argument("--calib", required=True)
        p.add_argument("--road-mask", help="BEV road mask PNG (cells x cells)")
        p.add_argument("--cells", type=int)
        p.add_argument("--extent", type=float, help="BEV forward range in meters")

    p = add("project-field", cmd_project_field, "project the BEV distance field into the image")
    bev_args(p)
    p.add_argument("--out-size", type=int, nargs=2, metavar=("H", "W"))
    p.add_argument("--field-png", help="write the projected field as a 16-bit depth PNG")
    p.add_argument("--viz", help="write a heatmap PNG")

    p = add("warp", cmd_warp, "inverse-warp a source image into the target view")
    p.add_argument("--src", required=True)
    p.add_argument("--depth", required=True)
    p.add_argument("--pose", required=True, help="one KITTI-format line: target -> source camera")
    p.add_argument("--calib", required=True)
    p.add_argument("--output", required=True, help="reconstructed image PNG")
    p.add_argument("--mask-out")

    p = add("losses", cmd_losses, "evaluate depth/pose and layout losses")
    p.add_argument("--target")
    p.add_argument("--recon", nargs="+")
    p.add_argument("--source", nargs="+")
    p.add_argument("--depth")
    p.add_argument("--calib")
    p.add_argument("--road-mask")
    p.add_argument("--cells", type=int)
    p.add_argument("--extent", type=float)
    p.add_argument("--layout-pred")
    p.add_argument("--layout-gt")
    p.add_argument("--category", choices=("road", "vehicle"), default="road")
    p.add_argument("--sdf-viz")

    p = add("cct", cmd_cct, "run the cross-view / cross-modal attention module")
    for name in ("--f-f", "--f-b", "--f-f-re", "--f-d"):
        p.add_argument(name, required=True)
    p.add_argument("--weights", help="fusion weights; seeded random if omitted")
    p.add_argument("--output", required=True)

    p = add("eval-depth", cmd_eval_depth, "depth error metrics")
    p.add_argument("--pred", nargs="+", required=True)
    p.add_argument("--gt", nargs="+", required=True)
    p.add_argument("--no-scaling", action="store_true")
    p.add_argument("--min-depth", type=float)
    p.add_argument("--max-depth", type=float)

    p = add("eval-odometry", cmd_eval_odometry, "KITTI translational/rotational drift")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--step", type=int, default=10)

    p = add("eval-layout", cmd_eval_layout, "layout mIoU and mAP")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--overlay")

    p = add("fit-scale", cmd_fit_scale, "fit the metric scale of a depth map")
    bev_args(p)
    p.add_argument("--depth", required=True)
    p.add_argument("--scaled-out")

    p = add("synth-demo", cmd_synth_demo, "scale recovery on a synthetic flat-road scene")
    p.add_argument("--scale", type=float, default=30.0)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--scene", help="scene description JSON")
    p.add_argument("--frames-dir")

    add("gradcheck", cmd_gradcheck, "finite-difference check of every analytic gradient")
    return parser


def run(argv=None):
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        cfg = load_config(args.config) if args.config else ToolkitConfig()
        if args.print_config:
            sys.stdout.write(cfg.to_json())
            return 0
        if not getattr(args, "func", None):
            raise UsageError("a subcommand is required (see --help)")
        threads = os.environ.get("SCALEVIEW_NUM_THREADS")
        with threadpool_limits(int(threads) if threads else None):
            report = args.func(args, cfg)
        _emit(report, args.out)
        return 0
    except (OSError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 2
    except (ScaleviewError, ValueError, TypeError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
