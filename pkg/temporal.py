"""
Temporal segmentation: per-timestamp segments merged by mask IoU.

Every distinct view timestamp starts its own segment. Each outer iteration
runs one IGIT sweep per segment on that segment's views, then one greedy
merge pass: adjacent segments whose masks overlap with IoU above tau are
joined, and the union of their masks seeds the next sweep. The loop ends
when a full iteration neither changes a mask nor merges segments.
"""
from __future__ import annotations

import bisect
import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from igit import DEFAULT_MAX_ITERS, SegmentMask, View, igit_run, igit_sweep
from rasterizer import TraceConfig
from scene_model import DynamicScene, ValidationError, instance_count

logger = logging.getLogger(__name__)

DEFAULT_TAU = 0.5


@dataclass(eq=False)
class TemporalSegments:
    """Contiguous partition of [0, T) with one Gaussian mask per segment.

    ``masks[s]`` is None until the segment has been swept at least once.
    """
    starts: list[int]
    masks: list[SegmentMask | None]
    timestamp_count: int
    iterations: int = 0

    def __post_init__(self):
        self.starts = [int(s) for s in self.starts]
        if not self.starts or self.starts[0] != 0:
            raise ValidationError("first segment must start at timestamp 0")
        if any(b <= a for a, b in zip(self.starts, self.starts[1:])):
            raise ValidationError(f"segment starts must increase strictly: {self.starts}")
        if self.starts[-1] >= self.timestamp_count:
            raise ValidationError(
                f"segment start {self.starts[-1]} outside [0, {self.timestamp_count})"
            )
        if len(self.masks) != len(self.starts):
            raise ValidationError(f"{len(self.starts)} segments but {len(self.masks)} masks")

    @property
    def count(self) -> int:
        return len(self.starts)

    def ranges(self) -> list[tuple[int, int]]:
        """Half-open [start, end) per segment."""
        ends = self.starts[1:] + [self.timestamp_count]
        return list(zip(self.starts, ends))

    def segment_of(self, t: int) -> int:
        if not 0 <= t < self.timestamp_count:
            raise ValidationError(f"timestamp {t} outside [0, {self.timestamp_count})")
        return bisect.bisect_right(self.starts, t) - 1

    def mask_of(self, t: int) -> SegmentMask | None:
        return self.masks[self.segment_of(t)]

    def gaussian_mask_matrix(self, gaussian_count: int) -> np.ndarray:
        """(N, S) boolean membership matrix, one column per segment."""
        out = np.zeros((gaussian_count, self.count), dtype=bool)
        for s, mask in enumerate(self.masks):
            if mask is not None:
                out[:, s] = mask.member
        return out

    def to_json(self, k0: int | None = None) -> dict:
        return {
            "target": k0,
            "timestamp_count": self.timestamp_count,
            "iterations": self.iterations,
            "segments": [
                {
                    "start": start,
                    "end": end,
                    "gaussians": [] if mask is None else [int(i) for i in mask.indices()],
                }
                for (start, end), mask in zip(self.ranges(), self.masks)
            ],
        }

    @classmethod
    def from_json(cls, data: dict, gaussian_count: int) -> "TemporalSegments":
        starts, masks = [], []
        for seg in data["segments"]:
            member = np.zeros(gaussian_count, dtype=bool)
            idx = np.asarray(seg["gaussians"], dtype=np.int64)
            if len(idx) and (idx.min() < 0 or idx.max() >= gaussian_count):
                raise ValidationError(
                    f"segment at t={seg['start']} names a Gaussian outside [0, {gaussian_count})"
                )
            member[idx] = True
            starts.append(seg["start"])
            masks.append(SegmentMask(member))
        return cls(starts, masks, int(data["timestamp_count"]), int(data.get("iterations", 0)))


def segment_iou(a: SegmentMask, b: SegmentMask) -> float:
    """|a and b| / |a or b| over Gaussian indices; 1.0 when both are empty."""
    if a.member.shape != b.member.shape:
        raise ValidationError("segment masks differ in length")
    union = int((a.member | b.member).sum())
    if union == 0:
        return 1.0
    return int((a.member & b.member).sum()) / union


def merge_pass(segs: TemporalSegments, tau: float = DEFAULT_TAU) -> TemporalSegments:
    """Greedy left-to-right merge of neighbours whose IoU exceeds *tau*.

    A merged segment carries the union mask and may merge again with its
    next neighbour in the same pass.
    """
    if not 0 < tau < 1:
        raise ValidationError(f"tau must lie in (0, 1), got {tau}")
    starts = [segs.starts[0]]
    masks = [segs.masks[0]]
    for start, mask in zip(segs.starts[1:], segs.masks[1:]):
        last = masks[-1]
        if last is not None and mask is not None and segment_iou(last, mask) > tau:
            masks[-1] = last.union(mask)
        else:
            starts.append(start)
            masks.append(mask)
    return replace(segs, starts=starts, masks=masks)


def initial_segments(views: Sequence[View], timestamp_count: int) -> TemporalSegments:
    """One segment per distinct view timestamp; the first also covers frames before it."""
    stamps = sorted({cam.timestamp for cam, _ in views})
    if not stamps:
        raise ValidationError("no training views")
    starts = [0] + stamps[1:]
    return TemporalSegments(starts, [None] * len(starts), timestamp_count)


def views_in(views: Sequence[View], start: int, end: int) -> list[View]:
    return [v for v in views if start <= v[0].timestamp < end]


def temporal_igit_run(scene: DynamicScene, all_views: Sequence[View], k0: int,
                      max_iters: int = DEFAULT_MAX_ITERS, tau: float = DEFAULT_TAU,
                      cfg: TraceConfig | None = None, *, num_instances: int | None = None,
                      history: list | None = None, threads: int | None = None) -> TemporalSegments:
    """IGIT interleaved with segment merging until both settle."""
    if max_iters < 1:
        raise ValidationError(f"max_iters must be >= 1, got {max_iters}")
    if not 0 < tau < 1:
        raise ValidationError(f"tau must lie in (0, 1), got {tau}")
    k = num_instances if num_instances is not None else instance_count(m for _, m in all_views)
    segs = initial_segments(all_views, scene.timestamp_count)

    for it in range(1, max_iters + 1):
        masks, changed = [], 0
        for (start, end), prior in zip(segs.ranges(), segs.masks):
            seg_views = views_in(all_views, start, end)
            subset = None if prior is None else prior.member
            mask, _ = igit_sweep(scene, seg_views, k0, subset, cfg, num_instances=k, threads=threads)
            if prior is None or mask != prior:
                changed += 1
            masks.append(mask)
        swept = replace(segs, masks=masks)
        merged = merge_pass(swept, tau)
        merges = swept.count - merged.count
        logger.info("Temporal iteration %d: %d segments, %d masks changed, %d merges",
                    it, merged.count, changed, merges)
        if history is not None:
            history.append({"iteration": it, "segments": merged.count,
                            "changed": changed, "merges": merges})
        segs = merged
        if changed == 0 and merges == 0:
            segs.iterations = it
            return segs
    segs.iterations = max_iters
    if merges:
        segs = _retrace_merged(scene, all_views, k0, swept.starts, segs, cfg, k, threads)
    return segs


def _retrace_merged(scene: DynamicScene, all_views: Sequence[View], k0: int,
                    swept_starts: Sequence[int], segs: TemporalSegments, cfg: TraceConfig | None,
                    k: int, threads: int | None) -> TemporalSegments:
    """One more sweep for every segment that absorbed a neighbour in the last merge pass.

    Only reached when the iteration cap cuts the loop short; the union masks
    left by merge_pass have not been traced over the joined range yet.
    """
    masks = list(segs.masks)
    for s, (start, end) in enumerate(segs.ranges()):
        if sum(start <= t < end for t in swept_starts) > 1:
            masks[s], _ = igit_sweep(scene, views_in(all_views, start, end), k0, masks[s].member,
                                     cfg, num_instances=k, threads=threads)
    logger.info("Iteration cap reached: re-traced %d merged segment(s)",
                sum(a is not b for a, b in zip(masks, segs.masks)))
    return replace(segs, masks=masks)


def single_segment_run(scene: DynamicScene, all_views: Sequence[View], k0: int,
                       max_iters: int = DEFAULT_MAX_ITERS, cfg: TraceConfig | None = None, *,
                       num_instances: int | None = None, history: list | None = None,
                       threads: int | None = None) -> TemporalSegments:
    """Plain IGIT over every view with one segment covering [0, T)."""
    mask, used = igit_run(scene, all_views, k0, max_iters, cfg, num_instances=num_instances,
                          history=history, threads=threads)
    return TemporalSegments([0], [mask], scene.timestamp_count, iterations=used)
