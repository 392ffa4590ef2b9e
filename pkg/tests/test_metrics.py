import json

import numpy as np
import pytest

from scribbleseg.errors import ContractError
from scribbleseg.loss import IGNORE_INDEX
from scribbleseg.metrics import evaluate, overlap_metrics, surface_distances, write_report

from oracles import brute_force_overlap, brute_force_surface


class TestOverlap:
    def test_perfect_match(self):
        gt = np.zeros((8, 8), dtype=np.uint8)
        gt[2:5, 2:5] = 1
        assert overlap_metrics(gt, gt, 1) == (1.0, 1.0, 1.0, 1.0)

    def test_disjoint_masks(self):
        pred = np.zeros((8, 8), dtype=np.uint8)
        gt = np.zeros((8, 8), dtype=np.uint8)
        pred[0:2, 0:2] = 1
        gt[5:7, 5:7] = 1
        assert overlap_metrics(pred, gt, 1) == (0.0, 0.0, 0.0, 0.0)

    def test_hand_counted_case(self):
        # gt 4 px, pred covers 2 of them and nothing else
        gt = np.zeros((4, 4), dtype=np.uint8)
        gt[1, 0:4] = 1
        pred = np.zeros((4, 4), dtype=np.uint8)
        pred[1, 0:2] = 1
        dsc, iou, recall, precision = overlap_metrics(pred, gt, 1)
        assert dsc == pytest.approx(2 / 3)
        assert iou == pytest.approx(1 / 2)
        assert recall == pytest.approx(1 / 2)
        assert precision == pytest.approx(1.0)

    def test_ignore_pixels_excluded(self):
        gt = np.zeros((4, 4), dtype=np.uint8)
        gt[0, :] = IGNORE_INDEX
        pred = np.zeros((4, 4), dtype=np.uint8)
        pred[0, :] = 1  # disagreements only on ignored rows
        assert overlap_metrics(pred, gt, 1) == (1.0, 1.0, 1.0, 1.0)

    def test_both_empty_convention(self):
        z = np.zeros((4, 4), dtype=np.uint8)
        assert overlap_metrics(z, z, 3) == (1.0, 1.0, 1.0, 1.0)

    def test_shape_mismatch(self):
        with pytest.raises(ContractError):
            overlap_metrics(np.zeros((2, 2)), np.zeros((3, 3)), 0)


class TestSurface:
    def test_identical_masks_zero_distance(self):
        gt = np.zeros((10, 10), dtype=np.uint8)
        gt[3:7, 3:7] = 1
        hd95, assd = surface_distances(gt, gt, 1, spacing_um=4.0)
        assert hd95 == 0.0 and assd == 0.0

    def test_two_single_pixels_five_apart(self):
        pred = np.zeros((12, 12), dtype=np.uint8)
        gt = np.zeros((12, 12), dtype=np.uint8)
        pred[4, 2] = 1
        gt[4, 7] = 1
        hd95, assd = surface_distances(pred, gt, 1, spacing_um=4.0)
        # both directed distances are 5 px; percentile and mean of {5, 5} = 5
        assert hd95 == pytest.approx(20.0)
        assd_expected = 20.0
        assert assd == pytest.approx(assd_expected)

    def test_empty_class_undefined(self):
        pred = np.zeros((8, 8), dtype=np.uint8)
        gt = np.zeros((8, 8), dtype=np.uint8)
        gt[2:4, 2:4] = 1
        assert surface_distances(pred, gt, 1, 1.0) == (None, None)
        assert surface_distances(gt, pred, 1, 1.0) == (None, None)

    def test_symmetry(self, rng):
        for _ in range(10):
            a = (rng.random((20, 20)) < 0.3).astype(np.uint8)
            b = (rng.random((20, 20)) < 0.3).astype(np.uint8)
            if not a.any() or not b.any():
                continue
            assert surface_distances(a, b, 1, 1.0) == surface_distances(b, a, 1, 1.0)

    def test_spacing_scale_law(self, rng):
        a = (rng.random((16, 16)) < 0.4).astype(np.uint8)
        b = (rng.random((16, 16)) < 0.4).astype(np.uint8)
        h1, s1 = surface_distances(a, b, 1, 1.0)
        h2, s2 = surface_distances(a, b, 1, 2.0)
        assert h2 == 2 * h1
        assert s2 == 2 * s1

    def test_isolated_pixel_is_its_own_boundary(self):
        m = np.zeros((5, 5), dtype=np.uint8)
        m[2, 2] = 1
        shifted = np.zeros((5, 5), dtype=np.uint8)
        shifted[2, 3] = 1
        hd95, assd = surface_distances(m, shifted, 1, 1.0)
        assert hd95 == pytest.approx(1.0)
        assert assd == pytest.approx(1.0)

    def test_matches_brute_force_oracle(self, rng):
        for _ in range(25):
            shape = (int(rng.integers(4, 32)), int(rng.integers(4, 32)))
            pred = rng.integers(0, 3, size=shape).astype(np.uint8)
            gt = rng.integers(0, 3, size=shape).astype(np.uint8)
            for c in range(3):
                ours = surface_distances(pred, gt, c, spacing_um=3.0)
                ref = brute_force_surface(pred, gt, c, spacing_um=3.0)
                if ref[0] is None:
                    assert ours == (None, None)
                else:
                    assert ours[0] == pytest.approx(ref[0], rel=1e-9)
                    assert ours[1] == pytest.approx(ref[1], rel=1e-9)


class TestEvaluate:
    def test_perfect_single_class(self):
        gt = np.zeros((10, 10), dtype=np.uint8)
        gt[2:8, 2:8] = 1
        report = evaluate(gt, gt, [(0, "bg"), (1, "fg")], spacing_um=1.0)
        for row in report.classes:
            assert row.dsc == row.iou == row.recall == row.precision == 1.0
            assert row.hd95_um == 0.0 and row.assd_um == 0.0
        assert report.overall["dsc"] == 1.0
        assert report.overall["hd95_um"] == 0.0

    def test_absent_class_flagged_undefined_and_excluded(self):
        gt = np.zeros((6, 6), dtype=np.uint8)
        pred = np.zeros((6, 6), dtype=np.uint8)
        gt[1:3, 1:3] = 1
        pred[1:3, 1:3] = 1
        report = evaluate(pred, gt, [(0, "bg"), (1, "fg"), (2, "ghost")], 1.0)
        ghost = report.classes[2]
        assert not ghost.defined
        assert ghost.dsc == 1.0  # convention value, excluded from overall
        assert report.overall["dsc"] == 1.0

    def test_report_matches_brute_force_on_all_six_metrics(self, rng):
        pred = rng.integers(0, 3, size=(32, 32)).astype(np.uint8)
        gt = rng.integers(0, 3, size=(32, 32)).astype(np.uint8)
        report = evaluate(pred, gt, [0, 1, 2], spacing_um=2.5)
        for row in report.classes:
            dsc, iou, recall, precision = brute_force_overlap(pred, gt, row.class_id)
            assert row.dsc == dsc and row.iou == iou
            assert row.recall == recall and row.precision == precision
            hd95, assd = brute_force_surface(pred, gt, row.class_id, 2.5)
            if hd95 is None:
                assert row.hd95_um is None
            else:
                assert row.hd95_um == pytest.approx(hd95, rel=1e-9)
                assert row.assd_um == pytest.approx(assd, rel=1e-9)

    def test_dsc_iou_identity_on_random_pairs(self, rng):
        for _ in range(50):
            pred = rng.integers(0, 4, size=(16, 16)).astype(np.uint8)
            gt = rng.integers(0, 4, size=(16, 16)).astype(np.uint8)
            report = evaluate(pred, gt, [0, 1, 2, 3], 1.0)
            for row in report.classes:
                assert row.iou == pytest.approx(row.dsc / (2 - row.dsc), abs=1e-9)

    def test_csv_and_json_round_trip(self, tmp_path, rng):
        pred = rng.integers(0, 2, size=(12, 12)).astype(np.uint8)
        gt = rng.integers(0, 2, size=(12, 12)).astype(np.uint8)
        report = evaluate(pred, gt, [(0, "bg"), (1, "fg")], 1.0)
        csv_path = tmp_path / "r.csv"
        json_path = tmp_path / "r.json"
        write_report(report, csv_path, json_path)
        lines = csv_path.read_text().strip().splitlines()
        assert lines[0] == "class,dsc,iou,recall,precision,hd95_um,assd_um,defined"
        assert len(lines) == 4  # header + 2 classes + overall
        assert lines[-1].startswith("overall,")
        payload = json.loads(json_path.read_text())
        assert payload["overall"]["dsc"] == pytest.approx(report.overall["dsc"])
        assert len(payload["classes"]) == 2
