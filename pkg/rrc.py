"""
Frame-wise rendering range control.

For every timestamp with training views, each Gaussian of the frame's
segment mask gets a threshold r in [0, 1]: only the central part of its
kernel where g > 1 - r is used, which holds exactly a fraction r of its mass.

  rrc_init : r = p, the share of the Gaussian's occlusion-free weight that
             lands on target pixels
  rrc_step : recompute p over the truncated kernel, then r <- r * p
  rrc_run  : init, then steps until max |dr| < 1e-4 or max_iters

Views that share a timestamp have their weights summed before normalizing.
Updates are applied after a full sweep over all frames.

Thresholds file layout (little-endian)::

    "G4DR" | u32 count | count x (u32 i, u32 t, f32 r)
"""
from __future__ import annotations

import logging
import struct
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from igit import DEFAULT_MAX_ITERS, View, ordered_views
from rasterizer import RenderOutput, TraceConfig, render_view, trace_view
from scene_model import (
    CameraView,
    DynamicScene,
    SceneFormatError,
    ValidationError,
    instance_count,
)
from temporal import TemporalSegments

logger = logging.getLogger(__name__)

RRC_TOLERANCE = 1e-4
# p within float noise of 1 counts as 1, otherwise interior Gaussians decay geometrically
PROBABILITY_SNAP = 0.999

RANGES_MAGIC = b"G4DR"
RANGES_HEADER = struct.Struct("<4sI")
RANGES_RECORD = np.dtype([("i", "<u4"), ("t", "<u4"), ("r", "<f4")])


@dataclass(eq=False)
class FrameTable:
    """Sparse (gaussian, timestamp) -> value map, stored per timestamp.

    ``frames[t] = (indices, values)`` with indices sorted ascending.
    """
    frames: dict[int, tuple[np.ndarray, np.ndarray]] = field(default_factory=dict)

    def __len__(self) -> int:
        return sum(len(idx) for idx, _ in self.frames.values())

    @property
    def timestamps(self) -> list[int]:
        return sorted(self.frames)

    def values_at(self, t: int) -> np.ndarray:
        return self.frames[t][1]

    def dense_at(self, t: int, gaussian_count: int) -> np.ndarray | None:
        """Length-N array for frame *t*; keys outside the table read 0.

        None when the frame has no entries at all.
        """
        if t not in self.frames:
            return None
        idx, vals = self.frames[t]
        out = np.zeros(gaussian_count, dtype=np.float64)
        out[idx] = vals
        return out

    def items(self) -> Iterator[tuple[int, int, float]]:
        """(i, t, value) ordered by timestamp, then Gaussian."""
        for t in self.timestamps:
            idx, vals = self.frames[t]
            for i, v in zip(idx, vals):
                yield int(i), t, float(v)

    def all_values(self) -> np.ndarray:
        if not self.frames:
            return np.zeros(0)
        return np.concatenate([self.frames[t][1] for t in self.timestamps])


@dataclass(eq=False)
class RangeThresholds(FrameTable):
    iterations: int = 0

    def max_abs_diff(self, other: "RangeThresholds") -> float:
        if self.timestamps != other.timestamps:
            raise ValidationError("threshold tables cover different frames")
        diffs = [np.abs(self.values_at(t) - other.values_at(t)).max(initial=0.0)
                 for t in self.timestamps]
        return float(max(diffs, default=0.0))

    def binarized_fraction(self, lo: float = 0.05, hi: float = 0.95) -> float:
        """Share of entries with r < lo or r > hi (1.0 for an empty table)."""
        vals = self.all_values()
        if len(vals) == 0:
            return 1.0
        return float(np.mean((vals < lo) | (vals > hi)))


@dataclass(eq=False)
class FrameProbabilities(FrameTable):
    pass


# ---------------------------------------------------------------------------
# Tracing
# ---------------------------------------------------------------------------

def _views_by_timestamp(views: Sequence[View]) -> dict[int, list[View]]:
    grouped: dict[int, list[View]] = defaultdict(list)
    for view in ordered_views(views):
        grouped[view[0].timestamp].append(view)
    return dict(grouped)


def _frame_probabilities(scene: DynamicScene, views: Sequence[View], member: np.ndarray,
                         k0: int, r: np.ndarray | None, base: TraceConfig, k: int,
                         threads: int | None) -> tuple[np.ndarray, np.ndarray]:
    """Occlusion-free p for the in-mask Gaussians of one frame."""
    cfg = base.with_(subset_mask=member, use_occlusion=False, range_thresholds=r)
    total = np.zeros((scene.gaussian_count, k + 1))
    for cam, mask in views:
        total += trace_view(scene, cam, mask, cfg, num_instances=k, threads=threads).values
    idx = np.flatnonzero(member)
    rows = total[idx]
    sums = rows.sum(axis=1)
    p = np.where(sums > 0, rows[:, k0] / np.where(sums > 0, sums, 1.0), 0.0)
    return idx, np.clip(p, 0.0, 1.0)


def _segment_member(segments: TemporalSegments, t: int) -> np.ndarray | None:
    mask = segments.mask_of(t)
    return None if mask is None else mask.member


def rrc_init(scene: DynamicScene, views: Sequence[View], segments: TemporalSegments, k0: int,
             cfg: TraceConfig | None = None, *, num_instances: int | None = None,
             threads: int | None = None) -> RangeThresholds:
    """Start every in-mask Gaussian at r = p from untruncated, occlusion-free tracing."""
    base = cfg or TraceConfig()
    k = num_instances if num_instances is not None else instance_count(m for _, m in views)
    table = RangeThresholds()
    for t, frame_views in sorted(_views_by_timestamp(views).items()):
        member = _segment_member(segments, t)
        if member is None or not member.any():
            logger.warning("RRC: frame %d has an empty segment mask", t)
            continue
        table.frames[t] = _frame_probabilities(scene, frame_views, member, k0, None, base, k, threads)
    return table


def rrc_step(scene: DynamicScene, views: Sequence[View], segments: TemporalSegments,
             r: RangeThresholds, k0: int, cfg: TraceConfig | None = None, *,
             num_instances: int | None = None,
             threads: int | None = None) -> tuple[RangeThresholds, FrameProbabilities]:
    """One sweep: p over the truncated support of every frame, then r <- r * p."""
    base = cfg or TraceConfig()
    k = num_instances if num_instances is not None else instance_count(m for _, m in views)
    grouped = _views_by_timestamp(views)
    new_r = RangeThresholds(iterations=r.iterations + 1)
    probs = FrameProbabilities()
    for t in r.timestamps:
        idx, vals = r.frames[t]
        member = _segment_member(segments, t)
        if member is None or not np.array_equal(np.flatnonzero(member), idx):
            raise ValidationError(f"thresholds at t={t} are not keyed on the segment mask")
        dense = r.dense_at(t, scene.gaussian_count)
        _, p = _frame_probabilities(scene, grouped[t], member, k0, dense, base, k, threads)
        p = np.where(p >= PROBABILITY_SNAP, 1.0, p)
        probs.frames[t] = (idx, p)
        new_r.frames[t] = (idx, vals * p)
    return new_r, probs


def rrc_run(scene: DynamicScene, views: Sequence[View], segments: TemporalSegments, k0: int,
            max_iters: int = DEFAULT_MAX_ITERS, cfg: TraceConfig | None = None, *,
            num_instances: int | None = None, history: list | None = None,
            threads: int | None = None) -> RangeThresholds:
    """rrc_init followed by up to *max_iters* steps; *history* gets max |dr| per step."""
    if max_iters < 1:
        raise ValidationError(f"max_iters must be >= 1, got {max_iters}")
    k = num_instances if num_instances is not None else instance_count(m for _, m in views)
    r = rrc_init(scene, views, segments, k0, cfg, num_instances=k, threads=threads)
    for step in range(1, max_iters + 1):
        new_r, _ = rrc_step(scene, views, segments, r, k0, cfg, num_instances=k, threads=threads)
        delta = new_r.max_abs_diff(r)
        logger.info("RRC step %d: max |dr| = %.3g", step, delta)
        if history is not None:
            history.append({"iteration": step, "max_delta": delta})
        r = new_r
        if delta < RRC_TOLERANCE:
            break
    return r


def render_segmented(scene: DynamicScene, cam: CameraView, segments: TemporalSegments,
                     r: RangeThresholds | None, k0: int, cfg: TraceConfig | None = None, *,
                     threads: int | None = None) -> RenderOutput:
    """Render the target at cam's timestamp with its segment mask and thresholds.

    Frames without thresholds (or ``r=None``) render the full kernels.
    """
    mask = segments.mask_of(cam.timestamp)
    if mask is None:
        raise ValidationError(f"segment containing t={cam.timestamp} has no mask for instance {k0}")
    dense = None if r is None else r.dense_at(cam.timestamp, scene.gaussian_count)
    render_cfg = (cfg or TraceConfig()).with_(
        subset_mask=mask.member, range_thresholds=dense, use_occlusion=True,
    )
    return render_view(scene, cam, render_cfg, threads=threads)


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def save_ranges(r: RangeThresholds, path: str | Path) -> None:
    records = np.array(list(r.items()), dtype=RANGES_RECORD) if len(r) else np.zeros(0, RANGES_RECORD)
    with open(path, "wb") as f:
        f.write(RANGES_HEADER.pack(RANGES_MAGIC, len(records)))
        f.write(records.tobytes())


def load_ranges(path: str | Path) -> RangeThresholds:
    data = Path(path).read_bytes()
    if len(data) < RANGES_HEADER.size:
        raise SceneFormatError(f"{path}: truncated header")
    magic, count = RANGES_HEADER.unpack_from(data)
    if magic != RANGES_MAGIC:
        raise SceneFormatError(f"{path}: bad magic {magic!r}")
    if len(data) != RANGES_HEADER.size + count * RANGES_RECORD.itemsize:
        raise SceneFormatError(f"{path}: expected {count} records")
    records = np.frombuffer(data, dtype=RANGES_RECORD, count=count, offset=RANGES_HEADER.size)
    if count and (not np.isfinite(records["r"]).all()
                  or records["r"].min() < 0 or records["r"].max() > 1):
        raise ValidationError(f"{path}: thresholds must lie in [0, 1]")
    table = RangeThresholds()
    for t in np.unique(records["t"]):
        rows = records[records["t"] == t]
        order = np.argsort(rows["i"], kind="stable")
        table.frames[int(t)] = (rows["i"][order].astype(np.int64),
                                rows["r"][order].astype(np.float64))
    return table
