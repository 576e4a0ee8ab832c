import json
import subprocess
import sys

import numpy as np
import pytest

from scaleview import io as sio
from scaleview.cct import CctWeights
from scaleview.cli import run
from scaleview.geometry import Se3Pose
from scaleview.synth import SyntheticScene, render_scene
from scaleview.warping import warp_image


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    scene = SyntheticScene(seed=1)
    img0, depth0, valid0 = render_scene(scene, 0)
    img1, _, _ = render_scene(scene, 1)
    dense = np.where(valid0, np.minimum(depth0, 200.0), 200.0)
    sio.write_calibration(d / "calib.json", scene.K, scene.extrinsics)
    sio.write_image(d / "t.png", img0)
    sio.write_image(d / "s.png", img1)
    sio.write_depth(d / "depth.png", dense)
    recon, _ = warp_image(img1, dense, scene.relative_pose(0, 1), scene.K)
    sio.write_image(d / "recon.png", recon)
    sio.write_depth(d / "depth_small.png", dense / 4)
    sio.write_depth(d / "gt.png", np.where(valid0, np.minimum(depth0, 80), 0))
    sio.write_poses(d / "rel.txt", [scene.relative_pose(0, 1)])
    traj = [Se3Pose(np.eye(3), [0, 0, float(i)]) for i in range(150)]
    sio.write_poses(d / "gt_traj.txt", traj)
    sio.write_poses(d / "pred_traj.txt", [Se3Pose(np.eye(3), 1.02 * p.translation) for p in traj])
    rng = np.random.default_rng(0)
    gt = np.zeros((16, 16))
    gt[4:12, 3:10] = 1
    sio.write_layout(d / "lgt.png", gt)
    sio.write_layout(d / "lpred.png", np.clip(gt * 0.8 + rng.uniform(0, 0.3, gt.shape), 0, 1))
    for name in ("ff", "fb", "ffre", "fd"):
        sio.write_features(d / f"{name}.bin", rng.normal(size=(3, 4, 2)))
    sio.write_weights(d / "w.bin", CctWeights.random(2, seed=5))
    return d


def report(path):
    return {k: v["value"] for k, v in json.loads(path.read_text()).items()}


def test_synth_demo(tmp_path):
    assert run(["synth-demo", "--scale", "30", "--out", str(tmp_path / "r.json")]) == 0
    r = report(tmp_path / "r.json")
    assert r["recovered_scale"] == pytest.approx(30.0)
    assert r["relative_error"] < 1e-6


def test_project_field(data, tmp_path):
    out = tmp_path / "r.csv"
    assert run(["project-field", "--calib", str(data / "calib.json"), "--out", str(out),
                "--viz", str(tmp_path / "v.png"), "--field-png", str(tmp_path / "f.png")]) == 0
    text = out.read_text()
    assert text.startswith("metric,value,unit\nvalid_pixels,")
    assert (tmp_path / "v.png").exists()
    f, valid = sio.read_depth(tmp_path / "f.png")
    assert valid.sum() > 0


def test_fit_scale(data, tmp_path):
    out = tmp_path / "r.json"
    assert run(["fit-scale", "--calib", str(data / "calib.json"), "--depth", str(data / "depth_small.png"),
                "--out", str(out)]) == 0
    # 16-bit PNG quantization limits the agreement
    assert report(out)["scale"] == pytest.approx(4.0, rel=2e-3)


def test_warp(data, tmp_path):
    out = tmp_path / "recon.png"
    assert run(["warp", "--src", str(data / "s.png"), "--depth", str(data / "depth.png"),
                "--pose", str(data / "rel.txt"), "--calib", str(data / "calib.json"),
                "--output", str(out), "--out", str(tmp_path / "r.json")]) == 0
    assert sio.read_image(out).shape == sio.read_image(data / "t.png").shape
    assert 0.3 < report(tmp_path / "r.json")["valid_fraction"] <= 1.0


def test_losses(data, tmp_path):
    out = tmp_path / "r.json"
    assert run(["losses", "--target", str(data / "t.png"), "--recon", str(data / "recon.png"),
                "--source", str(data / "s.png"), "--depth", str(data / "depth.png"),
                "--calib", str(data / "calib.json"), "--layout-pred", str(data / "lpred.png"),
                "--layout-gt", str(data / "lgt.png"), "--out", str(out)]) == 0
    r = report(out)
    for key in ("photometric", "smoothness", "cgt", "depth_pose_objective", "wbce", "soft_iou", "boundary", "hybrid"):
        assert key in r
    assert r["automask_fraction"] > 0.3


def test_losses_needs_inputs(capsys):
    assert run(["losses"]) == 1


def test_cct(data, tmp_path):
    args = ["cct", "--f-f", str(data / "ff.bin"), "--f-b", str(data / "fb.bin"), "--f-f-re", str(data / "ffre.bin"),
            "--f-d", str(data / "fd.bin"), "--weights", str(data / "w.bin"), "--output", str(tmp_path / "o.bin")]
    assert run(args) == 0
    assert sio.read_features(tmp_path / "o.bin").shape == (3, 4, 2)


def test_eval_commands(data, tmp_path):
    assert run(["eval-depth", "--pred", str(data / "depth_small.png"), "--gt", str(data / "gt.png"),
                "--out", str(tmp_path / "d.json")]) == 0
    assert report(tmp_path / "d.json")["scale_factor_mean"] == pytest.approx(4.0, rel=1e-2)
    assert run(["eval-odometry", "--pred", str(data / "pred_traj.txt"), "--gt", str(data / "gt_traj.txt"),
                "--out", str(tmp_path / "o.json")]) == 0
    assert report(tmp_path / "o.json")["t_err"] == pytest.approx(2.0, abs=0.05)
    assert run(["eval-layout", "--pred", str(data / "lpred.png"), "--gt", str(data / "lgt.png"),
                "--overlay", str(tmp_path / "ov.png"), "--out", str(tmp_path / "l.json")]) == 0
    assert report(tmp_path / "l.json")["miou"] == pytest.approx(100.0)


def test_gradcheck_command(capsys):
    assert run(["gradcheck"]) == 0
    captured = capsys.readouterr()
    assert "PASS" in captured.err and "FAIL" not in captured.err
    assert captured.out.startswith("metric,value,unit")


def test_exit_codes(data, tmp_path, capsys):
    assert run(["eval-layout", "--pred", str(tmp_path / "missing.png"), "--gt", str(data / "lgt.png")]) == 2
    assert run(["nonsense"]) == 1
    assert run([]) == 1
    assert run(["synth-demo", "--scale", "-1"]) == 1
    bad = tmp_path / "bad.txt"
    bad.write_text("1 2 3\n")
    assert run(["eval-odometry", "--pred", str(bad), "--gt", str(data / "gt_traj.txt")]) == 1
    assert "error:" in capsys.readouterr().err


def test_validation_precedes_output(data, tmp_path):
    out = tmp_path / "recon.png"
    rc = run(["warp", "--src", str(data / "s.png"), "--depth", str(data / "gt.png"),  # sparse depth: invalid
              "--pose", str(data / "rel.txt"), "--calib", str(data / "calib.json"), "--output", str(out)])
    assert rc == 1
    assert not out.exists()


def test_config_override(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"layout": {"lam": 2.5}}))
    assert run(["--config", str(cfg), "--print-config"]) == 0
    assert json.loads(capsys.readouterr().out)["layout"]["lam"] == 2.5
    cfg.write_text("{not json")
    assert run(["--config", str(cfg), "--print-config"]) == 2


def test_repeated_runs_are_byte_identical(tmp_path):
    cmd = [sys.executable, "-m", "scaleview", "synth-demo", "--scale", "3", "--noise", "0.02"]
    outs = []
    for i in range(2):
        path = tmp_path / f"r{i}.json"
        subprocess.run(cmd + ["--out", str(path)], check=True)
        outs.append(path.read_bytes())
    assert outs[0] == outs[1]


def test_identical_inputs_give_zero_error(data, tmp_path):
    assert run(["eval-depth", "--pred", str(data / "gt.png"), "--gt", str(data / "gt.png"), "--no-scaling",
                "--out", str(tmp_path / "d.json")]) == 0
    r = report(tmp_path / "d.json")
    assert r["abs_rel"] == 0 and r["rmse"] == 0
    assert run(["eval-odometry", "--pred", str(data / "gt_traj.txt"), "--gt", str(data / "gt_traj.txt"),
                "--out", str(tmp_path / "o.json")]) == 0
    r = report(tmp_path / "o.json")
    assert r["t_err"] == 0 and r["r_err"] == 0
