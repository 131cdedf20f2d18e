"""
Iterative Gaussian instance tracing.

One sweep traces every view of a temporal segment, sums the weights,
normalizes each Gaussian's row to probabilities and keeps the Gaussians
whose most likely label is the target. Later sweeps trace only the kept
Gaussians, so anything that was hidden behind excluded geometry gets
re-attributed to what it actually covers. Iteration stops once the kept set
repeats.

Views are always summed in (timestamp, view_id) order so that weights do
not depend on how the caller ordered them.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from rasterizer import TraceConfig, WeightMatrix, trace_view
from scene_model import CameraView, DynamicScene, InstanceMask, ValidationError, instance_count

logger = logging.getLogger(__name__)

View = tuple[CameraView, InstanceMask]

DEFAULT_MAX_ITERS = 20


@dataclass(eq=False)
class ProbabilityMatrix:
    """N x (K+1) rows on the probability simplex, or all zero."""
    values: np.ndarray


@dataclass(eq=False)
class SegmentMask:
    """Per-Gaussian membership of the target within one temporal segment."""
    member: np.ndarray

    def __post_init__(self):
        self.member = np.asarray(self.member, dtype=bool)

    def __eq__(self, other):
        if not isinstance(other, SegmentMask):
            return NotImplemented
        return np.array_equal(self.member, other.member)

    __hash__ = None

    @property
    def count(self) -> int:
        return int(self.member.sum())

    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.member)

    def union(self, other: "SegmentMask") -> "SegmentMask":
        return SegmentMask(self.member | other.member)


def ordered_views(views: Sequence[View]) -> list[View]:
    return sorted(views, key=lambda v: (v[0].timestamp, v[0].view_id))


def downsample_views(views: Sequence[View], stride: int) -> list[View]:
    """Every *stride*-th view in view_id order."""
    if stride < 1:
        raise ValidationError(f"view stride must be >= 1, got {stride}")
    by_id = sorted(views, key=lambda v: v[0].view_id)
    return by_id[::stride]


def accumulate_segment(scene: DynamicScene, views: Sequence[View], cfg: TraceConfig | None = None,
                       *, num_instances: int | None = None,
                       threads: int | None = None) -> WeightMatrix:
    """Sum of trace_view over the segment's views."""
    if not views:
        raise ValidationError("cannot accumulate weights over an empty view list")
    k = num_instances if num_instances is not None else instance_count(m for _, m in views)
    total = WeightMatrix.zeros(scene.gaussian_count, k)
    for cam, mask in ordered_views(views):
        total.values += trace_view(scene, cam, mask, cfg, num_instances=k, threads=threads).values
    return total


def normalize(weights: WeightMatrix) -> ProbabilityMatrix:
    """Divide each row by its L1 norm; zero rows stay zero."""
    w = weights.values
    if (w < 0).any():
        raise ValidationError("weights must be non-negative")
    sums = w.sum(axis=1, keepdims=True)
    safe = np.where(sums > 0, sums, 1.0)
    return ProbabilityMatrix(np.where(sums > 0, w / safe, 0.0))


def extract(probs: ProbabilityMatrix, k0: int) -> SegmentMask:
    """Gaussians whose argmax label is k0 (lowest index wins ties)."""
    p = probs.values
    k = p.shape[1] - 1
    if not 1 <= k0 <= k:
        raise ValidationError(f"target instance {k0} outside [1, {k}]")
    visible = p.sum(axis=1) > 0
    return SegmentMask((np.argmax(p, axis=1) == k0) & visible)


def igit_sweep(scene: DynamicScene, views: Sequence[View], k0: int,
               subset: np.ndarray | None = None, cfg: TraceConfig | None = None, *,
               num_instances: int | None = None,
               threads: int | None = None) -> tuple[SegmentMask, ProbabilityMatrix]:
    """One iteration: trace all views (restricted to *subset*), normalize, extract."""
    cfg = (cfg or TraceConfig()).with_(subset_mask=subset)
    probs = normalize(accumulate_segment(scene, views, cfg,
                                         num_instances=num_instances, threads=threads))
    return extract(probs, k0), probs


def igit_run(scene: DynamicScene, segment_views: Sequence[View], k0: int,
             max_iters: int = DEFAULT_MAX_ITERS, cfg: TraceConfig | None = None, *,
             num_instances: int | None = None, initial_mask: SegmentMask | None = None,
             history: list | None = None, threads: int | None = None) -> tuple[SegmentMask, int]:
    """Repeat sweeps until the extracted mask repeats or *max_iters* is hit.

    The first sweep traces the whole scene (or *initial_mask* when given);
    each later sweep traces only the previous result. Returns the final mask
    and the number of sweeps run.

    *history*, when given, receives one dict per sweep with the mask size
    and how many Gaussians changed membership.
    """
    if max_iters < 1:
        raise ValidationError(f"max_iters must be >= 1, got {max_iters}")
    k = num_instances if num_instances is not None else instance_count(m for _, m in segment_views)
    subset = None if initial_mask is None else initial_mask.member
    previous: SegmentMask | None = None
    for it in range(1, max_iters + 1):
        mask, _ = igit_sweep(scene, segment_views, k0, subset, cfg,
                             num_instances=k, threads=threads)
        changed = mask.count if previous is None else int((mask.member != previous.member).sum())
        logger.info("IGIT sweep %d: %d Gaussians kept, %d changed", it, mask.count, changed)
        if history is not None:
            history.append({"iteration": it, "kept": mask.count, "changed": changed})
        if previous is not None and mask == previous:
            return mask, it
        if mask.count == 0:
            logger.warning("IGIT sweep %d kept no Gaussian for instance %d", it, k0)
        previous, subset = mask, mask.member
    return previous, max_iters
