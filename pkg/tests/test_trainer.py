import hashlib

import numpy as np
import pytest

from scribbleseg.backbone import BackboneSpec
from scribbleseg.decoder import DecoderConfig
from scribbleseg.errors import CheckpointError, SupervisionError
from scribbleseg.fusion import FusionConfig
from scribbleseg.images import ImagePlane
from scribbleseg.loss import IGNORE_INDEX, LossConfig
from scribbleseg.model import init_model
from scribbleseg.trainer import (
    ScribbleMask,
    TrainConfig,
    extract_rois,
    load_checkpoint,
    rasterize_scribbles,
    save_checkpoint,
    train,
    train_on_scribbles,
)

from conftest import make_plane


def scribble(data, spacing=1.0):
    return ScribbleMask(data=np.asarray(data, dtype=np.uint8), spacing_um=spacing)


class TestRasterize:
    def test_single_labeled_pixel_wins_cell(self):
        data = np.full((8, 8), IGNORE_INDEX, dtype=np.uint8)
        data[3, 5] = 2
        grid = rasterize_scribbles(scribble(data), cell_pixels=8)
        assert grid.shape == (1, 1)
        assert grid[0, 0] == 2

    def test_exact_tie_becomes_ignore(self):
        data = np.full((4, 4), IGNORE_INDEX, dtype=np.uint8)
        data[0, :3] = 0
        data[1, :3] = 1
        grid = rasterize_scribbles(scribble(data), cell_pixels=4)
        assert grid[0, 0] == IGNORE_INDEX

    def test_majority_wins(self):
        data = np.full((4, 4), IGNORE_INDEX, dtype=np.uint8)
        data[0, :3] = 0
        data[1, :2] = 1
        grid = rasterize_scribbles(scribble(data), cell_pixels=4)
        assert grid[0, 0] == 0

    def test_empty_mask_all_ignore(self):
        data = np.full((16, 16), IGNORE_INDEX, dtype=np.uint8)
        grid = rasterize_scribbles(scribble(data), cell_pixels=8)
        assert grid.shape == (2, 2)
        assert np.all(grid == IGNORE_INDEX)

    def test_padding_alignment_matches_encoder(self):
        # 20x20 at cell 16 pads to 32x32 with offset (6, 6); a pixel at (0, 0)
        # lands in the top-left cell
        data = np.full((20, 20), IGNORE_INDEX, dtype=np.uint8)
        data[0, 0] = 1
        data[19, 19] = 0
        grid = rasterize_scribbles(scribble(data), cell_pixels=16)
        assert grid.shape == (2, 2)
        assert grid[0, 0] == 1
        assert grid[1, 1] == 0


class TestExtractRois:
    def image(self, h, w, seed=0):
        return make_plane(np.random.default_rng(seed).random((h, w)), normalized=True)

    def test_single_blob_single_roi(self):
        img = self.image(2048, 2048)
        data = np.full((2048, 2048), IGNORE_INDEX, dtype=np.uint8)
        data[1000:1010, 1000:1100] = 1
        rois = extract_rois(img, scribble(data), roi_size=512)
        assert len(rois) == 1
        y0, x0 = rois[0].origin
        assert np.count_nonzero(rois[0].scribbles.data != IGNORE_INDEX) == 1000

    def test_two_distant_blobs_two_rois_cover_all(self):
        img = self.image(2048, 2048)
        data = np.full((2048, 2048), IGNORE_INDEX, dtype=np.uint8)
        data[100:110, 100:160] = 0
        data[1600:1610, 1600:1660] = 1
        rois = extract_rois(img, scribble(data), roi_size=512)
        assert len(rois) == 2
        covered = np.zeros_like(data, dtype=bool)
        for roi in rois:
            y0, x0 = roi.origin
            covered[y0 : y0 + 512, x0 : x0 + 512] = True
        assert covered[data != IGNORE_INDEX].all()

    def test_corner_scribble_clamps_flush(self):
        img = self.image(1024, 1024)
        data = np.full((1024, 1024), IGNORE_INDEX, dtype=np.uint8)
        data[0:4, 0:40] = 1
        rois = extract_rois(img, scribble(data), roi_size=512)
        assert rois[0].origin == (0, 0)

    def test_small_image_single_padded_roi(self):
        img = self.image(200, 300)
        data = np.full((200, 300), IGNORE_INDEX, dtype=np.uint8)
        data[50:52, 60:80] = 0
        rois = extract_rois(img, scribble(data), roi_size=512)
        assert len(rois) == 1
        assert rois[0].image.data.shape[:2] == (512, 512)
        assert rois[0].scribbles.data.shape == (512, 512)
        # padding is unlabeled
        assert np.all(rois[0].scribbles.data[200:, :] == IGNORE_INDEX)
        assert np.all(rois[0].scribbles.data[:, 300:] == IGNORE_INDEX)

    def test_coverage_property_random_masks(self):
        rng = np.random.default_rng(7)
        img = self.image(1024, 1024)
        for _ in range(5):
            data = np.full((1024, 1024), IGNORE_INDEX, dtype=np.uint8)
            for _ in range(int(rng.integers(1, 6))):
                y, x = rng.integers(0, 1000, size=2)
                data[y : y + 8, x : x + 60] = int(rng.integers(0, 2))
            rois = extract_rois(img, scribble(data), roi_size=256)
            covered = np.zeros_like(data, dtype=bool)
            for roi in rois:
                y0, x0 = roi.origin
                covered[y0 : y0 + 256, x0 : x0 + 256] = True
            assert covered[data != IGNORE_INDEX].all()


def small_setup(num_classes=2, seed=3):
    spec = BackboneSpec(patch_size=8, hidden_dim=16)
    model = init_model(
        spec,
        FusionConfig(proj_dim=8, init_seed=seed),
        DecoderConfig(num_classes=num_classes, hidden_sizes=(16,)),
        seed=seed,
    )
    train_cfg = TrainConfig(roi_size=64, batch_size=4, seed=seed)
    loss_cfg = LossConfig()
    return model, train_cfg, loss_cfg


def two_texture_image(size=192, seed=0):
    rng = np.random.default_rng(seed)
    img = 0.25 + 0.03 * rng.standard_normal((size, size))
    right = 0.75 + 0.2 * rng.standard_normal((size, size))
    gt = np.zeros((size, size), dtype=np.uint8)
    gt[:, size // 2 :] = 1
    img = np.where(gt == 1, right, img).astype(np.float32)
    scr = np.full((size, size), IGNORE_INDEX, dtype=np.uint8)
    scr[40:44, 20:70] = 0
    scr[140:144, size // 2 + 20 : size // 2 + 70] = 1
    return ImagePlane(data=img), ScribbleMask(data=scr), gt


def params_hash(params):
    h = hashlib.sha256()
    for name in sorted(params):
        h.update(name.encode())
        h.update(np.ascontiguousarray(params[name]).tobytes())
    return h.hexdigest()


class TestTrain:
    def test_zero_epochs_is_a_no_op(self):
        model, train_cfg, loss_cfg = small_setup()
        image, scr, _ = two_texture_image()
        before = params_hash(model.params)
        trace = train_on_scribbles(model, image, scr, train_cfg, loss_cfg, epochs=0)
        assert trace == []
        assert params_hash(model.params) == before

    def test_loss_decreases_and_model_learns(self):
        model, train_cfg, loss_cfg = small_setup()
        image, scr, gt = two_texture_image()
        trace = train_on_scribbles(model, image, scr, train_cfg, loss_cfg, epochs=15)
        assert len(trace) == 15
        assert trace[-1] < trace[0]

    def test_benchmark_trace_smooth_non_increasing(self):
        # 5-epoch moving average of the loss trace never increases on the
        # two-texture benchmark at its standard training configuration
        from scribbleseg.benchmarks import two_texture_benchmark

        bench = two_texture_benchmark(size=1024, seed=0)
        model = init_model(
            BackboneSpec(), FusionConfig(proj_dim=64), DecoderConfig(num_classes=2), seed=0
        )
        trace = train_on_scribbles(
            model, bench.image, bench.scribbles, TrainConfig(), LossConfig(), epochs=15
        )
        smoothed = np.convolve(trace, np.ones(5) / 5, mode="valid")
        assert np.all(np.diff(smoothed) <= 1e-9)

    def test_all_ignore_supervision_raises(self):
        model, train_cfg, loss_cfg = small_setup()
        image, _, _ = two_texture_image()
        empty = ScribbleMask(data=np.full(image.shape, IGNORE_INDEX, dtype=np.uint8))
        with pytest.raises(SupervisionError):
            train_on_scribbles(model, image, empty, train_cfg, loss_cfg, epochs=3)

    def test_determinism_identical_seeds(self):
        image, scr, _ = two_texture_image()
        hashes = []
        for _ in range(2):
            model, train_cfg, loss_cfg = small_setup(seed=11)
            train_on_scribbles(model, image, scr, train_cfg, loss_cfg, epochs=4)
            hashes.append(params_hash(model.params))
        assert hashes[0] == hashes[1]

    def test_backbone_hash_unchanged_by_training(self):
        model, train_cfg, loss_cfg = small_setup()
        image, scr, _ = two_texture_image()
        before = model.backbone_hash()
        train_on_scribbles(model, image, scr, train_cfg, loss_cfg, epochs=2)
        assert model.backbone_hash() == before

    def test_epoch_counter_advances(self):
        model, train_cfg, loss_cfg = small_setup()
        image, scr, _ = two_texture_image()
        train_on_scribbles(model, image, scr, train_cfg, loss_cfg, epochs=3)
        assert model.epoch == 3
        train_on_scribbles(model, image, scr, train_cfg, loss_cfg, epochs=2)
        assert model.epoch == 5


class TestCheckpoint:
    def test_save_load_save_is_byte_identical(self, tmp_path):
        model, train_cfg, loss_cfg = small_setup()
        image, scr, _ = two_texture_image()
        train_on_scribbles(model, image, scr, train_cfg, loss_cfg, epochs=2)
        p1 = tmp_path / "a.ckpt"
        p2 = tmp_path / "b.ckpt"
        save_checkpoint(model, p1, train_cfg, loss_cfg)
        loaded, t2, l2 = load_checkpoint(p1)
        save_checkpoint(loaded, p2, t2, l2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_round_trip_preserves_configs_and_epoch(self, tmp_path):
        model, train_cfg, loss_cfg = small_setup(num_classes=3)
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path, train_cfg, loss_cfg)
        loaded, t, l = load_checkpoint(path)
        assert loaded.spec == model.spec
        assert loaded.fusion_cfg == model.fusion_cfg
        assert loaded.decoder_cfg == model.decoder_cfg
        assert loaded.epoch == model.epoch
        assert t == train_cfg and l == loss_cfg
        for k in model.params:
            assert np.allclose(loaded.params[k], model.params[k], atol=1e-7)

    def test_altered_spec_hash_refused(self, tmp_path):
        model, train_cfg, loss_cfg = small_setup()
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path, train_cfg, loss_cfg)
        raw = bytearray(path.read_bytes())
        # flip one hex digit of the stored backbone hash
        idx = raw.find(b'"backbone_hash":"')
        ofs = idx + len(b'"backbone_hash":"')
        raw[ofs] = ord("0") if raw[ofs] != ord("0") else ord("1")
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_expected_hash_mismatch_refused(self, tmp_path):
        model, train_cfg, loss_cfg = small_setup()
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path, train_cfg, loss_cfg)
        with pytest.raises(CheckpointError):
            load_checkpoint(path, expected_backbone_hash="deadbeef")

    def test_truncated_file_rejected(self, tmp_path):
        model, train_cfg, loss_cfg = small_setup()
        path = tmp_path / "m.ckpt"
        save_checkpoint(model, path, train_cfg, loss_cfg)
        raw = path.read_bytes()
        path.write_bytes(raw[: len(raw) - 100])
        with pytest.raises(CheckpointError):
            load_checkpoint(path)

    def test_garbage_file_rejected(self, tmp_path):
        path = tmp_path / "m.ckpt"
        path.write_bytes(b"not a checkpoint at all")
        with pytest.raises(CheckpointError):
            load_checkpoint(path)
