"""
Tile-parallel front-to-back compositing engine.

Three passes share one per-tile kernel:
  - trace_view()    : per-Gaussian, per-label compositing weights (WeightMatrix)
  - render_view()   : RGB + accumulated alpha (RenderOutput)
  - dominant_view() : per-pixel index of the strongest contributor (ground truth)

Filters come from TraceConfig: a subset mask (excluded Gaussians contribute
neither weight nor occlusion), per-Gaussian range thresholds (kernel kept only
where g > 1 - r) and the occlusion toggle.

The image is split into TILE_SIZE x TILE_SIZE tiles. Tiles are processed in
any order by a thread pool but reduced strictly in tile-index order, so
results are bit-identical for every thread count.

The oracle_* functions compute the same quantities pixel by pixel: each
pixel walks the individually projected, depth-sorted Gaussians through
kernel_value. They bypass the tiled kernel and exist to check it.

Environment:
  SEGMENT4D_THREADS   default worker threads for tile parallelism (default: CPU count)
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from projection import Projected2D, ProjectedSet, depth_sort, kernel_value, project, project_frame
from scene_model import CameraView, DynamicScene, InstanceMask, ValidationError

logger = logging.getLogger(__name__)

ALPHA_CUTOFF = 1.0 / 255.0
ALPHA_MAX = 0.99
TRANSMITTANCE_FLOOR = 1e-4
# dominant_view: pixels covered beyond 1 - this never fall to the background
BACKGROUND_MIN_TRANSMITTANCE = 0.4
TILE_SIZE = 16
CHUNK_ROWS = 128
# 0 or unset: one thread per core
DEFAULT_THREADS = int(os.environ.get("SEGMENT4D_THREADS", "0")) or (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TraceConfig:
    """Per-pass filters and compositing constants."""
    subset_mask: np.ndarray | None = None
    use_occlusion: bool = True
    range_thresholds: np.ndarray | None = None
    alpha_cutoff: float = ALPHA_CUTOFF
    transmittance_floor: float = TRANSMITTANCE_FLOOR
    alpha_max: float = ALPHA_MAX

    def with_(self, **changes) -> "TraceConfig":
        return replace(self, **changes)

    def validate(self, gaussian_count: int) -> None:
        if not 0 < self.alpha_cutoff < 1:
            raise ValidationError(f"alpha_cutoff must lie in (0, 1), got {self.alpha_cutoff}")
        if not 0 < self.transmittance_floor < 1:
            raise ValidationError(
                f"transmittance_floor must lie in (0, 1), got {self.transmittance_floor}"
            )
        if not 0 < self.alpha_max <= 1:
            raise ValidationError(f"alpha_max must lie in (0, 1], got {self.alpha_max}")
        if self.subset_mask is not None and np.shape(self.subset_mask) != (gaussian_count,):
            raise ValidationError(
                f"subset_mask must have length {gaussian_count}, got {np.shape(self.subset_mask)}"
            )
        if self.range_thresholds is not None:
            r = np.asarray(self.range_thresholds, dtype=np.float64)
            if r.shape != (gaussian_count,):
                raise ValidationError(
                    f"range_thresholds must have length {gaussian_count}, got {r.shape}"
                )
            if not np.isfinite(r).all() or r.min(initial=0.0) < 0 or r.max(initial=0.0) > 1:
                raise ValidationError("range_thresholds must lie in [0, 1]")


@dataclass(eq=False)
class WeightMatrix:
    """N x (K+1) accumulated compositing weights; column 0 is background."""
    values: np.ndarray

    @property
    def gaussian_count(self) -> int:
        return int(self.values.shape[0])

    @property
    def num_labels(self) -> int:
        return int(self.values.shape[1])

    @classmethod
    def zeros(cls, gaussian_count: int, num_instances: int) -> "WeightMatrix":
        return cls(np.zeros((gaussian_count, num_instances + 1), dtype=np.float64))


@dataclass(frozen=True, eq=False)
class RenderOutput:
    rgb: np.ndarray    # (H, W, 3)
    alpha: np.ndarray  # (H, W)


# ---------------------------------------------------------------------------
# Shared per-pixel math
# ---------------------------------------------------------------------------

def _alphas(proj: ProjectedSet, r: np.ndarray | None, px: np.ndarray, py: np.ndarray,
            cfg: TraceConfig) -> np.ndarray:
    """(M, P) filtered alpha of every projected Gaussian at every pixel."""
    dx = px[None, :] - proj.mean2d[:, 0:1]
    dy = py[None, :] - proj.mean2d[:, 1:2]
    keep = dx * dx + dy * dy <= np.square(proj.radius)[:, None]
    a, b, c = proj.conic[:, 0:1], proj.conic[:, 1:2], proj.conic[:, 2:3]
    g = np.zeros(keep.shape)
    np.exp(-0.5 * (a * dx * dx + c * dy * dy) - b * dx * dy, out=g, where=keep)
    if r is not None:
        keep &= g > (1.0 - r)[:, None]
    alpha = np.minimum(proj.opacity[:, None] * g, cfg.alpha_max)
    keep &= alpha >= cfg.alpha_cutoff
    return np.where(keep, alpha, 0.0)


def _composite(alpha: np.ndarray, cfg: TraceConfig, chain_start: np.ndarray,
               t_final: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Front-to-back compositing of (M, P) alphas behind the running product *chain_start*.

    Returns per-entry contributions, the transmittance after the last active
    entry so far, and the running product to continue from. A pixel stops
    accepting contributions once T drops below the floor.
    """
    chain = np.cumprod(np.vstack([chain_start[None], 1.0 - alpha]), axis=0)
    t_before, t_incl = chain[:-1], chain[1:]
    active = t_before >= cfg.transmittance_floor
    contrib = np.where(active, alpha * t_before, 0.0)
    t_final = np.minimum(t_final, np.where(active, t_incl, np.inf).min(axis=0, initial=np.inf))
    return contrib, t_final, chain[-1]


def _shade(proj: ProjectedSet, r: np.ndarray | None, px: np.ndarray, py: np.ndarray,
           cfg: TraceConfig) -> tuple[np.ndarray, np.ndarray]:
    """(M, P) contributions and final transmittance for one tile.

    Gaussians are taken CHUNK_ROWS at a time; once every pixel is below the
    transmittance floor the remaining rows are left at zero unevaluated.
    Without occlusion every alpha is its own contribution and T stays 1.
    """
    if not cfg.use_occlusion:
        return _alphas(proj, r, px, py, cfg), np.ones(px.shape[0])
    contrib = np.zeros((len(proj), px.shape[0]))
    t_final = chain = np.ones(px.shape[0])
    for lo in range(0, len(proj), CHUNK_ROWS):
        rows = slice(lo, lo + CHUNK_ROWS)
        alpha = _alphas(proj.take(rows), None if r is None else r[rows], px, py, cfg)
        contrib[rows], t_final, chain = _composite(alpha, cfg, chain, t_final)
        if not (chain >= cfg.transmittance_floor).any():
            break
    return contrib, t_final


def _label_sums(contrib: np.ndarray, labels: np.ndarray, num_labels: int) -> np.ndarray:
    """(M, P) contributions summed per label into (M, num_labels)."""
    rows = contrib.shape[0]
    keys = (np.arange(rows)[:, None] * num_labels + labels[None, :]).ravel()
    sums = np.bincount(keys, weights=contrib.ravel(), minlength=rows * num_labels)
    return sums.reshape(rows, num_labels)


# ---------------------------------------------------------------------------
# Preparation
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _ViewPlan:
    proj: ProjectedSet
    r: np.ndarray | None
    width: int
    height: int


def _plan(scene: DynamicScene, cam: CameraView, cfg: TraceConfig) -> _ViewPlan:
    cfg.validate(scene.gaussian_count)
    cam.validate(scene.timestamp_count)
    proj = project_frame(scene, cam.timestamp, cam)
    r = None
    if cfg.subset_mask is not None:
        proj = proj.take(np.asarray(cfg.subset_mask, dtype=bool)[proj.source_index])
    if cfg.range_thresholds is not None:
        r_all = np.asarray(cfg.range_thresholds, dtype=np.float64)[proj.source_index]
        # r = 0 keeps nothing: g > 1 never holds
        proj = proj.take(r_all > 0)
        r = r_all[r_all > 0]
    return _ViewPlan(proj, r, cam.width, cam.height)


def _check_mask(scene: DynamicScene, cam: CameraView, mask: InstanceMask,
                num_instances: int | None) -> int:
    if mask.timestamp != cam.timestamp:
        raise ValidationError(
            f"view {cam.view_id}: mask timestamp {mask.timestamp} != camera {cam.timestamp}"
        )
    if (mask.height, mask.width) != (cam.height, cam.width):
        raise ValidationError(
            f"view {cam.view_id}: mask {mask.width}x{mask.height} != camera {cam.width}x{cam.height}"
        )
    k = mask.max_label if num_instances is None else num_instances
    if mask.max_label > k:
        raise ValidationError(f"view {cam.view_id}: label {mask.max_label} exceeds K={k}")
    return k


def _tiles(width: int, height: int) -> list[tuple[int, int, int, int]]:
    return [
        (x0, y0, min(x0 + TILE_SIZE, width), min(y0 + TILE_SIZE, height))
        for y0 in range(0, height, TILE_SIZE)
        for x0 in range(0, width, TILE_SIZE)
    ]


def _run_tiles(plan: _ViewPlan, fn: Callable, threads: int | None) -> list:
    """Apply fn(tile, sel, px, py) to every tile; results in tile-index order."""
    proj = plan.proj
    lo = proj.mean2d - proj.radius[:, None]
    hi = proj.mean2d + proj.radius[:, None]

    def work(tile):
        x0, y0, x1, y1 = tile
        sel = np.flatnonzero(
            (hi[:, 0] >= x0) & (lo[:, 0] <= x1 - 1) & (hi[:, 1] >= y0) & (lo[:, 1] <= y1 - 1)
        )
        ys, xs = np.mgrid[y0:y1, x0:x1]
        return fn(tile, sel, xs.ravel().astype(np.float64), ys.ravel().astype(np.float64))

    tiles = _tiles(plan.width, plan.height)
    threads = DEFAULT_THREADS if threads is None else threads
    if threads <= 1 or len(tiles) == 1:
        return [work(tile) for tile in tiles]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(work, tiles))


def _sub(plan: _ViewPlan, sel: np.ndarray) -> tuple[ProjectedSet, np.ndarray | None]:
    return plan.proj.take(sel), None if plan.r is None else plan.r[sel]


# ---------------------------------------------------------------------------
# Tiled passes
# ---------------------------------------------------------------------------

def trace_view(scene: DynamicScene, cam: CameraView, mask: InstanceMask,
               cfg: TraceConfig | None = None, *, num_instances: int | None = None,
               threads: int | None = None) -> WeightMatrix:
    """Accumulate each Gaussian's compositing weight per mask label for one view."""
    cfg = cfg or TraceConfig()
    k = _check_mask(scene, cam, mask, num_instances)
    plan = _plan(scene, cam, cfg)
    labels = mask.labels
    num_labels = k + 1

    def tile_weights(tile, sel, px, py):
        if len(sel) == 0:
            return sel, None
        proj, r = _sub(plan, sel)
        contrib, _ = _shade(proj, r, px, py, cfg)
        x0, y0, x1, y1 = tile
        return proj.source_index, _label_sums(contrib, labels[y0:y1, x0:x1].ravel(), num_labels)

    weights = WeightMatrix.zeros(scene.gaussian_count, k)
    for src, partial in _run_tiles(plan, tile_weights, threads):
        if partial is not None:
            weights.values[src] += partial
    logger.debug("Traced view %d (t=%d): %d Gaussians projected",
                 cam.view_id, cam.timestamp, len(plan.proj))
    return weights


def render_view(scene: DynamicScene, cam: CameraView, cfg: TraceConfig | None = None, *,
                threads: int | None = None) -> RenderOutput:
    """Composite color and alpha of the Gaussians passing the filters."""
    cfg = cfg or TraceConfig()
    plan = _plan(scene, cam, cfg)
    rgb = np.zeros((cam.height, cam.width, 3), dtype=np.float64)
    alpha = np.zeros((cam.height, cam.width), dtype=np.float64)

    def tile_render(tile, sel, px, py):
        if len(sel) == 0:
            return None
        proj, r = _sub(plan, sel)
        contrib, t_final = _shade(proj, r, px, py, cfg)
        color = (contrib[:, :, None] * proj.color[:, None, :]).sum(axis=0)
        if cfg.use_occlusion:
            acc = 1.0 - t_final
        else:
            acc = np.minimum(contrib.sum(axis=0), 1.0)
        return color, acc

    for tile, result in zip(_tiles(cam.width, cam.height), _run_tiles(plan, tile_render, threads)):
        if result is None:
            continue
        x0, y0, x1, y1 = tile
        color, acc = result
        rgb[y0:y1, x0:x1] = np.clip(color, 0.0, 1.0).reshape(y1 - y0, x1 - x0, 3)
        alpha[y0:y1, x0:x1] = acc.reshape(y1 - y0, x1 - x0)
    return RenderOutput(rgb=rgb, alpha=alpha)


def _dominant_or_background(best_val, t_final, best_src):
    background = (best_val <= t_final) & (t_final >= BACKGROUND_MIN_TRANSMITTANCE)
    return np.where(background, -1, best_src)


def dominant_view(scene: DynamicScene, cam: CameraView, cfg: TraceConfig | None = None, *,
                  threads: int | None = None) -> np.ndarray:
    """(H, W) source index of the largest contributor, or -1 where background wins.

    The background sits behind everything and contributes the remaining
    transmittance; it wins ties. Once the Gaussians cover more than
    1 - BACKGROUND_MIN_TRANSMITTANCE of a pixel, the pixel goes to the
    strongest Gaussian even when no single one outweighs the background,
    so densely overlapped interiors have no holes.
    """
    cfg = (cfg or TraceConfig()).with_(use_occlusion=True)
    plan = _plan(scene, cam, cfg)
    out = np.full((cam.height, cam.width), -1, dtype=np.int64)

    def tile_dominant(tile, sel, px, py):
        if len(sel) == 0:
            return None
        proj, r = _sub(plan, sel)
        contrib, t_final = _shade(proj, r, px, py, cfg)
        best = contrib.argmax(axis=0)
        best_val = contrib[best, np.arange(contrib.shape[1])]
        return _dominant_or_background(best_val, t_final, proj.source_index[best])

    for tile, result in zip(_tiles(cam.width, cam.height), _run_tiles(plan, tile_dominant, threads)):
        if result is not None:
            x0, y0, x1, y1 = tile
            out[y0:y1, x0:x1] = result.reshape(y1 - y0, x1 - x0)
    return out


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class _OracleEntry:
    proj: Projected2D
    opacity: float
    color: np.ndarray
    r: float | None


def _oracle_entries(scene: DynamicScene, cam: CameraView, cfg: TraceConfig) -> list[_OracleEntry]:
    """Gaussians passing the subset, projected one at a time, front to back."""
    cfg.validate(scene.gaussian_count)
    cam.validate(scene.timestamp_count)
    params = {}
    projected = []
    for i in range(scene.gaussian_count):
        if cfg.subset_mask is not None and not cfg.subset_mask[i]:
            continue
        g = scene.gaussian(i, cam.timestamp)
        p = project(g, cam, source_index=i)
        if p is not None:
            params[i] = g
            projected.append(p)
    r_all = cfg.range_thresholds
    return [
        _OracleEntry(
            proj=p,
            opacity=float(params[p.source_index].opacity),
            color=np.asarray(params[p.source_index].color, dtype=np.float64),
            r=None if r_all is None else float(r_all[p.source_index]),
        )
        for p in depth_sort(projected)
    ]


def _oracle_pixel(entries: list[_OracleEntry], cfg: TraceConfig, x: int, y: int
                  ) -> tuple[list[tuple[_OracleEntry, float]], float]:
    """(entry, weight) pairs at pixel (x, y) front to back, and the final transmittance."""
    trans = 1.0
    hits = []
    for e in entries:
        dx = x - float(e.proj.mean2d[0])
        dy = y - float(e.proj.mean2d[1])
        if dx * dx + dy * dy > e.proj.footprint_radius ** 2:
            continue
        g = kernel_value(e.proj, (x, y))
        if e.r is not None and not g > 1.0 - e.r:
            continue
        alpha = min(e.opacity * g, cfg.alpha_max)
        if alpha < cfg.alpha_cutoff:
            continue
        if not cfg.use_occlusion:
            hits.append((e, alpha))
            continue
        if trans < cfg.transmittance_floor:
            break
        hits.append((e, alpha * trans))
        trans *= 1.0 - alpha
    return hits, trans


def _pixels(cam: CameraView):
    for y in range(cam.height):
        for x in range(cam.width):
            yield x, y


def oracle_trace_view(scene: DynamicScene, cam: CameraView, mask: InstanceMask,
                      cfg: TraceConfig | None = None, *, num_instances: int | None = None
                      ) -> WeightMatrix:
    """Reference trace: every pixel walks the depth-sorted Gaussians, no tiles."""
    cfg = cfg or TraceConfig()
    k = _check_mask(scene, cam, mask, num_instances)
    entries = _oracle_entries(scene, cam, cfg)
    weights = WeightMatrix.zeros(scene.gaussian_count, k)
    for x, y in _pixels(cam):
        label = mask.labels[y, x]
        for e, w in _oracle_pixel(entries, cfg, x, y)[0]:
            weights.values[e.proj.source_index, label] += w
    return weights


def oracle_render_view(scene: DynamicScene, cam: CameraView,
                       cfg: TraceConfig | None = None) -> RenderOutput:
    cfg = cfg or TraceConfig()
    entries = _oracle_entries(scene, cam, cfg)
    rgb = np.zeros((cam.height, cam.width, 3))
    alpha = np.zeros((cam.height, cam.width))
    for x, y in _pixels(cam):
        hits, trans = _oracle_pixel(entries, cfg, x, y)
        for e, w in hits:
            rgb[y, x] += w * e.color
        total = sum(w for _, w in hits)
        alpha[y, x] = 1.0 - trans if cfg.use_occlusion else min(total, 1.0)
    return RenderOutput(rgb=np.clip(rgb, 0.0, 1.0), alpha=alpha)


def oracle_dominant_view(scene: DynamicScene, cam: CameraView,
                         cfg: TraceConfig | None = None) -> np.ndarray:
    cfg = (cfg or TraceConfig()).with_(use_occlusion=True)
    entries = _oracle_entries(scene, cam, cfg)
    out = np.full((cam.height, cam.width), -1, dtype=np.int64)
    for x, y in _pixels(cam):
        hits, trans = _oracle_pixel(entries, cfg, x, y)
        best_src, best_val = -1, 0.0
        for e, w in hits:
            if w > best_val:
                best_src, best_val = e.proj.source_index, w
        if best_src >= 0 and not (best_val <= trans and trans >= BACKGROUND_MIN_TRANSMITTANCE):
            out[y, x] = best_src
    return out
