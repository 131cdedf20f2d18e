"""
Tests for evalsuite.py -- IoU / accuracy metrics and the metrics CSV.
"""
import numpy as np
import pytest

from evalsuite import (
    FrameMetrics,
    MetricsReport,
    binarize_render,
    evaluate_run,
    frame_acc,
    frame_fg_acc,
    frame_iou,
    read_metrics_csv,
    write_metrics_csv,
)
from rasterizer import RenderOutput
from scene_model import SceneFormatError, ValidationError


def _square(size=10, lo=2, hi=6):
    m = np.zeros((size, size), dtype=bool)
    m[lo:hi, lo:hi] = True
    return m


class TestFrameMetrics:
    """Per-frame IoU and accuracy."""

    def test_identical_masks(self):
        m = _square()
        assert frame_iou(m, m) == 1.0
        assert frame_acc(m, m) == 1.0

    def test_disjoint_masks(self):
        a = np.zeros((4, 4), bool)
        b = np.zeros((4, 4), bool)
        a[0, 0] = True
        b[3, 3] = True
        assert frame_iou(a, b) == 0.0
        assert frame_acc(a, b) == pytest.approx(14 / 16)

    def test_shifted_square(self):
        gt = _square(lo=2, hi=6)
        pred = np.zeros_like(gt)
        pred[2:6, 3:7] = True
        # 12 shared pixels out of 20 covered
        assert frame_iou(pred, gt) == pytest.approx(12 / 20)
        assert frame_acc(pred, gt) == pytest.approx(92 / 100)
        assert frame_fg_acc(pred, gt) == pytest.approx(12 / 16)

    def test_both_empty(self):
        empty = np.zeros((3, 3), bool)
        assert frame_iou(empty, empty) == 1.0
        assert frame_fg_acc(empty, empty) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ValidationError):
            frame_iou(np.zeros((2, 2)), np.zeros((2, 3)))

    def test_binarize_threshold_is_strict(self):
        out = RenderOutput(rgb=np.zeros((1, 3, 3)), alpha=np.array([[0.2, 0.5, 0.51]]))
        np.testing.assert_array_equal(binarize_render(out), [[False, False, True]])


class TestEvaluateRun:
    """Run-level aggregation."""

    def test_means_over_frames(self):
        gt = {0: _square(), 1: _square()}
        pred = {0: _square(), 1: np.zeros((10, 10), bool)}
        report = evaluate_run(pred, gt)
        assert [f.timestamp for f in report.per_frame] == [0, 1]
        assert report.miou == pytest.approx(0.5)
        assert report.macc == pytest.approx((1.0 + 84 / 100) / 2)

    def test_foreground_accuracy_flag(self):
        gt = {0: _square()}
        pred = {0: np.ones((10, 10), bool)}
        assert evaluate_run(pred, gt).macc == pytest.approx(16 / 100)
        assert evaluate_run(pred, gt, foreground_acc=True).macc == 1.0

    def test_mismatched_timestamps(self):
        with pytest.raises(ValidationError, match=r"missing predictions for timestamps \[1\]"):
            evaluate_run({0: _square()}, {0: _square(), 1: _square()})
        with pytest.raises(ValidationError, match=r"no ground truth for timestamps \[2\]"):
            evaluate_run({0: _square(), 2: _square()}, {0: _square()})

    def test_no_frames(self):
        with pytest.raises(ValidationError):
            evaluate_run({}, {})


class TestMetricsCsv:
    """CSV writing and reading."""

    def test_round_trip(self, tmp_path):
        report = MetricsReport.from_frames([FrameMetrics(0, 0.9, 0.95), FrameMetrics(3, 1 / 3, 0.5)])
        path = tmp_path / "metrics.csv"
        write_metrics_csv(report, path)
        lines = path.read_text().splitlines()
        assert lines[0] == "timestamp,iou,acc"
        assert lines[-1].startswith("mean,")
        back = read_metrics_csv(path)
        assert back == report

    def test_bad_header(self, tmp_path):
        path = tmp_path / "metrics.csv"
        path.write_text("t,a,b\nmean,1,1\n")
        with pytest.raises(SceneFormatError):
            read_metrics_csv(path)

    def test_missing_mean_row(self, tmp_path):
        path = tmp_path / "metrics.csv"
        path.write_text("timestamp,iou,acc\n0,1.0,1.0\n")
        with pytest.raises(SceneFormatError, match="mean"):
            read_metrics_csv(path)
