import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from scribbleseg.cli import main
from scribbleseg.loss import IGNORE_INDEX
from scribbleseg.tiler import TileLayout


def save_gray(arr, path):
    Image.fromarray(arr.astype(np.uint8)).save(path)


@pytest.fixture
def config_file(tmp_path):
    cfg = {
        "backbone": {"patch_size": 8, "hidden_dim": 16},
        "fusion": {"proj_dim": 8},
        "decoder": {"hidden_sizes": [16]},
        "train": {"roi_size": 64, "batch_size": 4, "seed": 3},
        "tiler": {"tile_size": 64, "overlap_fraction": 0.5, "tv_weight": 0.05},
    }
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


@pytest.fixture
def dense_dataset(tmp_path):
    data = tmp_path / "data"
    data.mkdir()
    rng = np.random.default_rng(0)
    for i in range(2):
        img = 60 + 10 * rng.standard_normal((64, 64))
        img[:, 32:] = 170 + 30 * rng.standard_normal((64, 32))
        labels = np.zeros((64, 64), dtype=np.uint8)
        labels[:, 32:] = 1
        save_gray(np.clip(img, 0, 255), data / f"sample{i}.png")
        save_gray(labels, data / f"sample{i}_labels.png")
    return data


def test_train_writes_checkpoint_and_trace(tmp_path, config_file, dense_dataset):
    out = tmp_path / "model.ckpt"
    code = main(
        ["train", "--config", config_file, "--data", str(dense_dataset),
         "--out", str(out), "--epochs", "3"]
    )
    assert code == 0
    assert out.exists()
    trace = (tmp_path / "model.loss.csv").read_text().strip().splitlines()
    assert trace[0] == "epoch,loss"
    assert len(trace) == 4


def test_train_epochs_zero_equals_initialization(tmp_path, config_file, dense_dataset):
    out0 = tmp_path / "zero.ckpt"
    code = main(
        ["train", "--config", config_file, "--data", str(dense_dataset),
         "--out", str(out0), "--epochs", "0"]
    )
    assert code == 0
    from scribbleseg.trainer import load_checkpoint
    state, _, _ = load_checkpoint(out0)
    assert state.epoch == 0


def test_train_missing_label_names_the_file(tmp_path, config_file, capsys):
    data = tmp_path / "data"
    data.mkdir()
    save_gray(np.zeros((64, 64)), data / "orphan.png")
    code = main(["train", "--config", config_file, "--data", str(data), "--out", str(tmp_path / "x.ckpt")])
    assert code == 3
    assert "orphan_labels.png" in capsys.readouterr().err


def test_infer_outputs_match_image_size(tmp_path, config_file, dense_dataset):
    ckpt = tmp_path / "model.ckpt"
    main(["train", "--config", config_file, "--data", str(dense_dataset),
          "--out", str(ckpt), "--epochs", "2"])

    rng = np.random.default_rng(1)
    big = np.clip(120 + 40 * rng.standard_normal((200, 176)), 0, 255)
    img_path = tmp_path / "big.png"
    save_gray(big, img_path)
    out_prefix = tmp_path / "out" / "pred"
    code = main(["infer", "--config", config_file, "--checkpoint", str(ckpt),
                 "--image", str(img_path), "--out", str(out_prefix)])
    assert code == 0
    with Image.open(f"{out_prefix}_mask.png") as m:
        assert m.size == (176, 200)
    assert (tmp_path / "out" / "pred_prob.tif").exists()
    assert (tmp_path / "out" / "pred_mask.json").exists()


def test_infer_overlap_flag_controls_tile_count(tmp_path, config_file, dense_dataset, capsys):
    ckpt = tmp_path / "model.ckpt"
    main(["train", "--config", config_file, "--data", str(dense_dataset),
          "--out", str(ckpt), "--epochs", "1"])
    img_path = tmp_path / "img.png"
    save_gray(np.full((256, 256), 128), img_path)

    code = main(["infer", "--config", config_file, "--checkpoint", str(ckpt),
                 "--image", str(img_path), "--out", str(tmp_path / "a"),
                 "--tile-size", "64", "--overlap", "0.25"])
    assert code == 0
    expected = len(TileLayout(image_shape=(256, 256), tile_size=64, overlap_fraction=0.25).origins)
    assert f"({expected} tiles)" in capsys.readouterr().out


def test_infer_bad_checkpoint_fails(tmp_path, config_file):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    img_path = tmp_path / "img.png"
    save_gray(np.zeros((64, 64)), img_path)
    code = main(["infer", "--checkpoint", str(bad), "--image", str(img_path),
                 "--out", str(tmp_path / "x")])
    assert code == 3


def test_eval_perfect_prediction(tmp_path):
    gt = np.zeros((32, 32), dtype=np.uint8)
    gt[8:20, 8:20] = 1
    pred_path, gt_path = tmp_path / "pred.png", tmp_path / "gt.png"
    save_gray(gt, pred_path)
    save_gray(gt, gt_path)
    out = tmp_path / "report"
    code = main(["eval", "--pred", str(pred_path), "--gt", str(gt_path),
                 "--spacing-um", "4", "--out", str(out)])
    assert code == 0
    payload = json.loads((tmp_path / "report.json").read_text())
    assert payload["overall"]["dsc"] == 1.0
    assert payload["overall"]["hd95_um"] == 0.0
    lines = (tmp_path / "report.csv").read_text().splitlines()
    assert lines[0] == "class,dsc,iou,recall,precision,hd95_um,assd_um,defined"


def test_eval_shape_mismatch_fails(tmp_path):
    save_gray(np.zeros((16, 16)), tmp_path / "pred.png")
    save_gray(np.zeros((20, 20)), tmp_path / "gt.png")
    code = main(["eval", "--pred", str(tmp_path / "pred.png"),
                 "--gt", str(tmp_path / "gt.png"), "--out", str(tmp_path / "r")])
    assert code == 3


def test_eval_matches_oracle_on_random_masks(tmp_path):
    from oracles import brute_force_overlap

    rng = np.random.default_rng(5)
    pred = rng.integers(0, 3, size=(24, 24)).astype(np.uint8)
    gt = rng.integers(0, 3, size=(24, 24)).astype(np.uint8)
    save_gray(pred, tmp_path / "pred.png")
    save_gray(gt, tmp_path / "gt.png")
    code = main(["eval", "--pred", str(tmp_path / "pred.png"),
                 "--gt", str(tmp_path / "gt.png"), "--out", str(tmp_path / "r")])
    assert code == 0
    payload = json.loads((tmp_path / "r.json").read_text())
    for row in payload["classes"]:
        dsc, iou, recall, precision = brute_force_overlap(pred, gt, row["class_id"])
        assert row["dsc"] == pytest.approx(dsc)
        assert row["iou"] == pytest.approx(iou)


def test_viz_writes_one_png_per_tap_layer(tmp_path, config_file):
    img_path = tmp_path / "img.png"
    rng = np.random.default_rng(2)
    save_gray(np.clip(128 + 60 * rng.standard_normal((96, 96)), 0, 255), img_path)
    out_dir = tmp_path / "viz"
    code = main(["viz", "--config", config_file, "--image", str(img_path), "--out", str(out_dir)])
    assert code == 0
    names = sorted(p.name for p in out_dir.glob("*.png"))
    assert names == ["pca_layer03.png", "pca_layer06.png", "pca_layer09.png", "pca_layer12.png"]


def test_viz_unknown_layer_fails(tmp_path, config_file):
    img_path = tmp_path / "img.png"
    save_gray(np.zeros((64, 64)), img_path)
    code = main(["viz", "--config", config_file, "--image", str(img_path),
                 "--out", str(tmp_path / "viz"), "--layer", "5"])
    assert code == 3


def test_usage_error_exits_2():
    result = subprocess.run(
        [sys.executable, "-m", "scribbleseg.cli", "train"],
        capture_output=True,
    )
    assert result.returncode == 2


def test_serve_answers_health_check(tmp_path):
    import socket
    import time

    import httpx

    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        port = s.getsockname()[1]
    proc = subprocess.Popen(
        [sys.executable, "-m", "scribbleseg.cli", "serve",
         "--store", str(tmp_path / "store"), "--port", str(port)],
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    try:
        deadline = time.time() + 30
        status = None
        while time.time() < deadline:
            try:
                status = httpx.get(f"http://127.0.0.1:{port}/health", timeout=1.0).status_code
                break
            except httpx.TransportError:
                time.sleep(0.1)
        assert status == 200
    finally:
        proc.terminate()
        proc.wait(timeout=10)


def test_determinism_given_seed(tmp_path, config_file, dense_dataset):
    outs = []
    for name in ("a.ckpt", "b.ckpt"):
        out = tmp_path / name
        main(["train", "--config", config_file, "--data", str(dense_dataset),
              "--out", str(out), "--epochs", "3", "--seed", "42"])
        outs.append(out.read_bytes())
    assert outs[0] == outs[1]
