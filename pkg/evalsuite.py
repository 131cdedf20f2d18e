"""
Segmentation metrics against ground-truth masks.

Per frame: IoU of the binary object masks and pixel accuracy (all pixels by
default, foreground-only on request). A run reports the per-frame values
plus their means.

CSV layout::

    timestamp,iou,acc
    0,0.97,0.99
    ...
    mean,0.95,0.98
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from rasterizer import RenderOutput
from scene_model import SceneFormatError, ValidationError

logger = logging.getLogger(__name__)

MASK_THRESHOLD = 0.5


@dataclass(frozen=True)
class FrameMetrics:
    timestamp: int
    iou: float
    acc: float


@dataclass(frozen=True)
class MetricsReport:
    per_frame: list[FrameMetrics]
    miou: float
    macc: float

    @classmethod
    def from_frames(cls, per_frame: list[FrameMetrics]) -> "MetricsReport":
        if not per_frame:
            raise ValidationError("no frames to evaluate")
        return cls(
            per_frame=per_frame,
            miou=float(np.mean([f.iou for f in per_frame])),
            macc=float(np.mean([f.acc for f in per_frame])),
        )


def _pair(pred, gt) -> tuple[np.ndarray, np.ndarray]:
    pred, gt = np.asarray(pred, dtype=bool), np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ValidationError(f"mask shapes differ: {pred.shape} vs {gt.shape}")
    return pred, gt


def frame_iou(pred, gt) -> float:
    """|pred and gt| / |pred or gt|; 1.0 when both are empty."""
    pred, gt = _pair(pred, gt)
    union = int((pred | gt).sum())
    if union == 0:
        return 1.0
    return int((pred & gt).sum()) / union


def frame_acc(pred, gt) -> float:
    pred, gt = _pair(pred, gt)
    return float((pred == gt).mean()) if pred.size else 1.0


def frame_fg_acc(pred, gt) -> float:
    """Accuracy over ground-truth foreground pixels only; 1.0 without any."""
    pred, gt = _pair(pred, gt)
    fg = int(gt.sum())
    if fg == 0:
        return 1.0
    return int((pred & gt).sum()) / fg


def binarize_render(out: RenderOutput, threshold: float = MASK_THRESHOLD) -> np.ndarray:
    return out.alpha > threshold


def evaluate_run(pred: Mapping[int, np.ndarray], gt: Mapping[int, np.ndarray], *,
                 foreground_acc: bool = False) -> MetricsReport:
    """Score predicted masks against ground truth, frame by frame."""
    missing = sorted(set(gt) - set(pred))
    extra = sorted(set(pred) - set(gt))
    if missing or extra:
        parts = []
        if missing:
            parts.append(f"missing predictions for timestamps {missing}")
        if extra:
            parts.append(f"no ground truth for timestamps {extra}")
        raise ValidationError("; ".join(parts))
    acc_fn = frame_fg_acc if foreground_acc else frame_acc
    frames = [
        FrameMetrics(int(t), frame_iou(pred[t], gt[t]), acc_fn(pred[t], gt[t]))
        for t in sorted(gt)
    ]
    report = MetricsReport.from_frames(frames)
    logger.info("Evaluated %d frames: mIoU %.4f, mAcc %.4f", len(frames), report.miou, report.macc)
    return report


def write_metrics_csv(report: MetricsReport, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["timestamp", "iou", "acc"])
        for fm in report.per_frame:
            writer.writerow([fm.timestamp, repr(fm.iou), repr(fm.acc)])
        writer.writerow(["mean", repr(report.miou), repr(report.macc)])


def read_metrics_csv(path: str | Path) -> MetricsReport:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["timestamp", "iou", "acc"]:
        raise SceneFormatError(f"{path}: expected header timestamp,iou,acc")
    if len(rows) < 2 or rows[-1][0] != "mean":
        raise SceneFormatError(f"{path}: missing mean row")
    try:
        frames = [FrameMetrics(int(t), float(iou), float(acc)) for t, iou, acc in rows[1:-1]]
        miou, macc = float(rows[-1][1]), float(rows[-1][2])
    except ValueError as e:
        raise SceneFormatError(f"{path}: {e}") from None
    return MetricsReport(per_frame=frames, miou=miou, macc=macc)
