"""
评价指标测试
"""
import json
import math

import numpy as np
import pytest

from docbin.core.interfaces import LabelImage
from docbin.exceptions import CorpusError, InputError, MetricUndefinedError
from docbin.services.image_core import save_label_image
from docbin.services.metrics import (
    DRD_WEIGHTS,
    confusion,
    drd,
    drd_per_pixel,
    evaluate_corpus,
    f1,
    nubn,
    psnr,
    report_frame,
    score_image,
    write_report,
)


def _brute_scores(pred, gt):
    p, g = pred.astype(bool), gt.astype(bool)
    tp = int((p & g).sum())
    fp = int((p & ~g).sum())
    fn = int((~p & g).sum())
    if tp + fp == 0 and tp + fn == 0:
        f_measure = 100.0
    elif tp == 0:
        f_measure = 0.0
    else:
        precision, recall = tp / (tp + fp), tp / (tp + fn)
        f_measure = 100.0 * 2 * precision * recall / (precision + recall)
    wrong = int((p != g).sum())
    psnr_value = 100.0 if wrong == 0 else 10 * math.log10(1.0 / (wrong / p.size))
    return f_measure, psnr_value


def _brute_nubn(gt):
    height, width = gt.shape
    count = 0
    for y0 in range(0, height, 8):
        for x0 in range(0, width, 8):
            block = gt[y0:y0 + 8, x0:x0 + 8]
            if 0 < block.sum() < block.size:
                count += 1
    return count


def _brute_drd(pred, gt):
    height, width = gt.shape
    total = 0.0
    for y, x in zip(*np.nonzero(pred != gt)):
        for dy in range(-2, 3):
            for dx in range(-2, 3):
                yy, xx = y + dy, x + dx
                if 0 <= yy < height and 0 <= xx < width:
                    total += DRD_WEIGHTS[dy + 2, dx + 2] * abs(int(gt[yy, xx]) - int(pred[y, x]))
    return total / _brute_nubn(gt)


def test_weights():
    assert DRD_WEIGHTS.sum() == pytest.approx(1.0)
    assert DRD_WEIGHTS[2, 2] == 0.0
    assert DRD_WEIGHTS[2, 3] == pytest.approx(DRD_WEIGHTS[1, 2])
    assert DRD_WEIGHTS[2, 3] == pytest.approx(2 * DRD_WEIGHTS[2, 4])


def test_random_pairs_match_brute_force(rng):
    for _ in range(50):
        gt = (rng.random((32, 32)) < rng.uniform(0.1, 0.5)).astype(np.uint8)
        pred = gt.copy()
        flips = rng.random((32, 32)) < rng.uniform(0.0, 0.2)
        pred[flips] ^= 1
        pred_label, gt_label = LabelImage(pred), LabelImage(gt)
        expected_f1, expected_psnr = _brute_scores(pred, gt)
        assert f1(pred_label, gt_label) == expected_f1
        assert psnr(pred_label, gt_label) == expected_psnr
        assert nubn(gt_label) == _brute_nubn(gt)
        assert drd(pred_label, gt_label) == pytest.approx(_brute_drd(pred, gt), abs=1e-9)


def test_partial_blocks_counted():
    gt = np.zeros((10, 10), dtype=np.uint8)
    gt[9, 9] = 1
    gt[0, 9] = 1
    assert nubn(LabelImage(gt)) == 2


def test_identical_images():
    gt = LabelImage(np.eye(16, dtype=np.uint8))
    assert f1(gt, gt) == 100.0
    assert psnr(gt, gt) == 100.0
    assert drd(gt, gt) == 0.0


def test_single_error_psnr():
    gt = np.zeros((10, 10), dtype=np.uint8)
    pred = gt.copy()
    pred[3, 4] = 1
    assert psnr(LabelImage(pred), LabelImage(gt)) == 20.0


def test_flip_inside_foreground_has_unit_distortion():
    gt = np.ones((24, 24), dtype=np.uint8)
    gt[:, :4] = 0
    pred = gt.copy()
    pred[12, 14] = 0
    per_pixel = drd_per_pixel(LabelImage(pred), LabelImage(gt))
    assert per_pixel[12, 14] == pytest.approx(1.0)
    blocks = nubn(LabelImage(gt))
    assert drd(LabelImage(pred), LabelImage(gt)) == pytest.approx(1.0 / blocks)


def test_f1_edge_cases():
    empty = LabelImage(np.zeros((4, 4), dtype=np.uint8))
    full = LabelImage(np.ones((4, 4), dtype=np.uint8))
    assert f1(empty, empty) == 100.0
    assert f1(empty, full) == 0.0
    assert f1(full, empty) == 0.0
    assert confusion(full, empty) == (0, 16, 0)


def test_drd_undefined_on_uniform_gt():
    gt = LabelImage(np.zeros((16, 16), dtype=np.uint8))
    pred = LabelImage(np.eye(16, dtype=np.uint8))
    with pytest.raises(MetricUndefinedError):
        drd(pred, gt)
    assert math.isnan(score_image("blank", pred, gt).drd)


def test_shape_mismatch():
    with pytest.raises(InputError):
        f1(LabelImage(np.zeros((3, 3))), LabelImage(np.zeros((3, 4))))


class TestEvaluateCorpus:
    def _write(self, directory, name, data):
        directory.mkdir(parents=True, exist_ok=True)
        save_label_image(LabelImage(data), directory / name, text_black=True)

    def test_matching_and_unmatched(self, tmp_path, rng):
        pred_dir, gt_dir = tmp_path / "pred", tmp_path / "gt"
        for stem in ("a", "b"):
            data = (rng.random((20, 20)) < 0.3).astype(np.uint8)
            self._write(gt_dir, f"{stem}_GT.png", data)
            self._write(pred_dir, f"{stem}.png", data)
        self._write(pred_dir, "c.png", np.zeros((5, 5), dtype=np.uint8))
        blank = np.zeros((16, 16), dtype=np.uint8)
        self._write(gt_dir, "d.png", blank)
        self._write(pred_dir, "d.png", blank)

        report = evaluate_corpus(pred_dir, gt_dir)
        assert [s.name for s in report.images] == ["a", "b", "d"]
        assert report.unmatched == ["c.png"]
        assert report.mean_f1 == 100.0
        assert report.mean_psnr == 100.0
        assert math.isnan(report.images[2].drd)
        assert report.mean_drd == 0.0

        frame = report_frame(report)
        assert list(frame.columns) == ['name', 'f1', 'psnr', 'drd', 'tp', 'fp', 'fn']
        out = tmp_path / "eval.jsonl"
        write_report(report, out)
        lines = [json.loads(line) for line in out.read_text(encoding='utf-8').splitlines()]
        assert [line['name'] for line in lines] == ["a", "b", "d"]
        assert lines[2]['drd'] is None

    def test_no_pairs(self, tmp_path):
        self._write(tmp_path / "pred", "x.png", np.zeros((4, 4), dtype=np.uint8))
        self._write(tmp_path / "gt", "y.png", np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(CorpusError):
            evaluate_corpus(tmp_path / "pred", tmp_path / "gt")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(CorpusError):
            evaluate_corpus(tmp_path / "nope", tmp_path)
