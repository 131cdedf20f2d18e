"""
Synthetic dynamic scenes with ground-truth Gaussian-to-instance assignments.

Scenarios:
  static_two_objects  two blobs (instances 1 and 2) drifting slightly; assignments never change
  occluder            a semi-transparent target with faint background floaters tucked
                      behind the boundary to an opaque occluder (instance 2)
  identity_flip       a Gaussian group attached to instance 2 for t < T//2 and to the
                      target for t >= T//2
  boundary_stress     a target whose silhouette is straddled by oversized, faint Gaussians

All layouts are specified in pixel coordinates of a reference camera at
distance CAMERA_DISTANCE looking down +z, then lifted to world space at each
Gaussian's depth. Views of one frame differ by a small vertical baseline.

Ground-truth masks label each pixel with the instance of the Gaussian that
contributes most there, unless the remaining transmittance (an opaque
background at infinity) is larger and the pixel is not densely covered (see
rasterizer.dominant_view). Object interiors are therefore hole-free. The
target instance is always 1.

SynthSpec defaults are the benchmark scale (3600 Gaussians per object,
384 px views); small specs are for quick checks.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from rasterizer import dominant_view
from scene_model import (
    CameraView,
    DynamicScene,
    InstanceMask,
    ValidationError,
    save_cameras,
    save_scene,
    write_mask,
)

logger = logging.getLogger(__name__)

SCENARIOS = ("static_two_objects", "occluder", "identity_flip", "boundary_stress")
TARGET_INSTANCE = 1
CAMERA_DISTANCE = 5.0
VIEW_BASELINE = 0.05
POSITION_JITTER = 0.05  # fraction of grid spacing
# 60 x 60 Gaussians per object at 384 px keeps the outermost ring near 6% of an object
BENCHMARK_N_PER_OBJECT = 3600
BENCHMARK_IMAGE_SIZE = 384


@dataclass(frozen=True)
class SynthSpec:
    scenario: str = "static_two_objects"
    n_per_object: int = BENCHMARK_N_PER_OBJECT
    frames: int = 4
    views_per_frame: int = 2
    image_size: int = BENCHMARK_IMAGE_SIZE
    seed: int = 0
    mask_noise: float = 0.0

    def validate(self) -> None:
        if self.scenario not in SCENARIOS:
            raise ValidationError(f"unknown scenario {self.scenario!r}; expected one of {SCENARIOS}")
        if self.n_per_object < 4:
            raise ValidationError("n_per_object must be >= 4")
        if self.frames < 1 or self.views_per_frame < 1:
            raise ValidationError("frames and views_per_frame must be positive")
        if self.scenario == "identity_flip" and self.frames < 2:
            raise ValidationError("identity_flip needs at least 2 frames")
        if self.image_size < 16:
            raise ValidationError("image_size must be >= 16")
        if not 0.0 <= self.mask_noise <= 1.0:
            raise ValidationError("mask_noise must lie in [0, 1]")


@dataclass(eq=False)
class SynthDataset:
    spec: SynthSpec
    scene: DynamicScene
    cameras: list[CameraView]
    masks: list[InstanceMask]
    gt_assignment: np.ndarray      # (T, N) instance id per Gaussian and frame
    gt_masks: list[InstanceMask]   # noise-free labels, one per camera
    target: int = TARGET_INSTANCE

    @property
    def views(self) -> list[tuple[CameraView, InstanceMask]]:
        return list(zip(self.cameras, self.masks))

    def eval_cameras(self) -> list[CameraView]:
        """Lowest view_id camera of every timestamp."""
        first: dict[int, CameraView] = {}
        for cam in sorted(self.cameras, key=lambda c: c.view_id):
            first.setdefault(cam.timestamp, cam)
        return [first[t] for t in sorted(first)]

    def gt_binary(self) -> dict[int, np.ndarray]:
        """Target masks of the evaluation camera per timestamp."""
        by_id = {cam.view_id: mask for cam, mask in zip(self.cameras, self.gt_masks)}
        return {cam.timestamp: by_id[cam.view_id].labels == self.target
                for cam in self.eval_cameras()}


# ---------------------------------------------------------------------------
# Layout helpers
# ---------------------------------------------------------------------------

@dataclass
class _Group:
    pixels: np.ndarray    # (T, n, 2) reference-camera pixel positions
    z: float              # world depth offset from the origin plane
    sigma_px: float
    opacity: float
    color: tuple[float, float, float]
    labels: np.ndarray    # (T, n)
    spacing: float


def _grid(cols: int, rows: int, spacing: float, center: tuple[float, float]) -> np.ndarray:
    xs = (np.arange(cols) - (cols - 1) / 2.0) * spacing + center[0]
    ys = (np.arange(rows) - (rows - 1) / 2.0) * spacing + center[1]
    gx, gy = np.meshgrid(xs, ys)
    return np.stack([gx, gy], axis=-1).reshape(-1, 2)


def _square(n: int, spacing: float, center: tuple[float, float]) -> np.ndarray:
    side = math.ceil(math.sqrt(n))
    return _grid(side, side, spacing, center)[:n]


def _over_time(points: np.ndarray, frames: int, drift=None) -> np.ndarray:
    out = np.repeat(points[None], frames, axis=0).astype(np.float64)
    if drift is not None:
        out += np.asarray([drift(t) for t in range(frames)], dtype=np.float64)[:, None, :]
    return out


def _group(points_t: np.ndarray, label, *, z=0.0, sigma_px, opacity, color, spacing) -> _Group:
    frames, n = points_t.shape[:2]
    labels = np.broadcast_to(np.asarray(label, dtype=np.int64).reshape(-1, 1), (frames, n)).copy()
    return _Group(points_t, z, sigma_px, opacity, color, labels, spacing)


def _bob(spacing: float, frames: int):
    return lambda t: (0.0, 0.5 * spacing * math.sin(2.0 * math.pi * t / max(frames, 2)))


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------

def _static_two_objects(spec: SynthSpec) -> list[_Group]:
    w, frames = spec.image_size, spec.frames
    side = math.ceil(math.sqrt(spec.n_per_object))
    s = 0.4 * w / side
    common = dict(sigma_px=0.45 * s, opacity=0.9, spacing=s)
    a = _over_time(_square(spec.n_per_object, s, (0.27 * w, 0.5 * w)), frames, _bob(s, frames))
    b = _over_time(_square(spec.n_per_object, s, (0.73 * w, 0.5 * w)), frames, _bob(-s, frames))
    return [
        _group(a, 1, color=(0.9, 0.3, 0.2), **common),
        _group(b, 2, color=(0.2, 0.4, 0.9), **common),
    ]


def _identity_flip(spec: SynthSpec) -> list[_Group]:
    w, frames, n = spec.image_size, spec.frames, spec.n_per_object
    side = math.ceil(math.sqrt(n))
    s = 0.25 * w / side
    common = dict(sigma_px=0.45 * s, opacity=0.9, spacing=s)
    top = 0.22 * w
    a = _over_time(_square(n, s, (0.3 * w, top)), frames)
    b = _over_time(_square(n, s, (0.7 * w, top)), frames)
    tail = _grid(side, 2 * side, s, (0.0, top + 1.5 * side * s))[:2 * n]
    flip = frames // 2
    g = _over_time(tail, frames, lambda t: (0.7 * w if t < flip else 0.3 * w, 0.0))
    g_labels = np.where(np.arange(frames) < flip, 2, TARGET_INSTANCE)
    return [
        _group(a, 1, color=(0.9, 0.3, 0.2), **common),
        _group(b, 2, color=(0.2, 0.4, 0.9), **common),
        _group(g, g_labels, color=(0.3, 0.8, 0.3), **common),
    ]


def _occluder(spec: SynthSpec) -> list[_Group]:
    w, frames, n = spec.image_size, spec.frames, spec.n_per_object
    side = math.ceil(math.sqrt(n))
    rows = math.ceil(n / side)
    s = 0.35 * w / side
    a_pts = _square(n, s, (0.38 * w, 0.5 * w))
    a_right = a_pts[:, 0].max()
    a_top = a_pts[:, 1].min()
    a_bottom = a_top + (rows - 1) * s

    sigma_f = 1.5 * s
    lo, hi = a_top + 2 * sigma_f, a_bottom - 2 * sigma_f
    n_f = max(2, side // 3)
    ys = np.linspace(lo, hi, n_f) if hi > lo else np.full(n_f, 0.5 * (a_top + a_bottom))
    f_pts = np.stack([np.full(n_f, a_right + 0.25 * s), ys], axis=-1)

    s_o = 0.6 * s
    margin = 2 * sigma_f + s
    x0, x1 = a_right + s, w - 1 + s
    y0, y1 = max(a_top - margin, 0.0), min(a_bottom + margin, w - 1.0)
    cols = int((x1 - x0) // s_o) + 1
    o_rows = int((y1 - y0) // s_o) + 1
    o_pts = _grid(cols, o_rows, s_o, (x0 + 0.5 * (cols - 1) * s_o, y0 + 0.5 * (o_rows - 1) * s_o))

    occluder = dict(sigma_px=0.5 * s_o, opacity=0.95, color=(0.2, 0.4, 0.9), spacing=s_o)
    return [
        _group(_over_time(a_pts, frames), 1, sigma_px=0.45 * s, opacity=0.7,
               color=(0.9, 0.3, 0.2), spacing=s),
        _group(_over_time(o_pts, frames), 2, z=-0.5, **occluder),
        _group(_over_time(o_pts, frames), 2, z=-0.6, **occluder),
        _group(_over_time(f_pts, frames), 0, z=0.5, sigma_px=sigma_f, opacity=0.25,
               color=(0.6, 0.6, 0.6), spacing=s),
    ]


def _boundary_stress(spec: SynthSpec) -> list[_Group]:
    w, frames, n = spec.image_size, spec.frames, spec.n_per_object
    side = math.ceil(math.sqrt(n))
    s = 0.4 * w / side

    def drift(t):
        return 0.25 * s * t, 0.0

    core = _square(n, s, (0.5 * w, 0.5 * w))
    left, right = core[:, 0].min() + s, core[:, 0].max() - s
    top, bottom = core[:, 1].min() + s, core[:, 1].max() - s
    # rim count stays fixed once the object is wider than 10 Gaussians
    step = 2 * s * max(1.0, side / 10)
    along_x = np.arange(left, right + 1e-9, step)
    along_y = np.arange(top + step, bottom - step + 1e-9, step)
    rim = np.concatenate([
        np.stack([along_x, np.full_like(along_x, top)], axis=-1),
        np.stack([along_x, np.full_like(along_x, bottom)], axis=-1),
        np.stack([np.full_like(along_y, left), along_y], axis=-1),
        np.stack([np.full_like(along_y, right), along_y], axis=-1),
    ])
    return [
        _group(_over_time(core, frames, drift), 1, sigma_px=0.45 * s, opacity=0.9,
               color=(0.9, 0.3, 0.2), spacing=s),
        _group(_over_time(rim, frames, drift), 1, z=-0.05, sigma_px=2.0 * s, opacity=0.4,
               color=(0.95, 0.6, 0.4), spacing=s),
    ]


_BUILDERS = {
    "static_two_objects": _static_two_objects,
    "occluder": _occluder,
    "identity_flip": _identity_flip,
    "boundary_stress": _boundary_stress,
}


# ---------------------------------------------------------------------------
# Assembly
# ---------------------------------------------------------------------------

def make_cameras(spec: SynthSpec) -> list[CameraView]:
    size = spec.image_size
    center = (size - 1) / 2.0
    cams = []
    for t in range(spec.frames):
        for v in range(spec.views_per_frame):
            dy = (v - (spec.views_per_frame - 1) / 2.0) * VIEW_BASELINE
            w2c = np.eye(4)
            w2c[:3, 3] = (0.0, -dy, CAMERA_DISTANCE)
            cams.append(CameraView(
                fx=float(size), fy=float(size), cx=center, cy=center,
                width=size, height=size, world_to_camera=w2c,
                timestamp=t, view_id=len(cams),
            ))
    return cams


def _assemble(groups: Sequence[_Group], spec: SynthSpec,
              rng: np.random.Generator) -> tuple[DynamicScene, np.ndarray]:
    focal = float(spec.image_size)
    center = (spec.image_size - 1) / 2.0
    means, scales, opacities, colors, labels = [], [], [], [], []
    for grp in groups:
        frames, n = grp.pixels.shape[:2]
        jitter = rng.normal(0.0, POSITION_JITTER * grp.spacing, size=(n, 2))
        px = grp.pixels + jitter[None]
        depth = grp.z + CAMERA_DISTANCE
        world = np.empty((frames, n, 3))
        world[..., 0] = (px[..., 0] - center) * depth / focal
        world[..., 1] = (px[..., 1] - center) * depth / focal
        world[..., 2] = grp.z
        means.append(world)
        scales.append(np.full((frames, n, 3), grp.sigma_px * depth / focal))
        opacities.append(np.full((frames, n), grp.opacity))
        tint = np.clip(np.asarray(grp.color) + rng.uniform(-0.05, 0.05, size=(n, 3)), 0.0, 1.0)
        colors.append(np.repeat(tint[None], frames, axis=0))
        labels.append(grp.labels)

    means_all = np.concatenate(means, axis=1)
    total = means_all.shape[1]
    quats = rng.normal(size=(total, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    scene = DynamicScene.from_arrays(
        means=means_all,
        quats=np.repeat(quats[None], spec.frames, axis=0),
        scales=np.concatenate(scales, axis=1),
        opacities=np.concatenate(opacities, axis=1),
        colors=np.concatenate(colors, axis=1),
    )
    return scene, np.concatenate(labels, axis=1).astype(np.int32)


def perfect_masks_from_gt(scene: DynamicScene, cameras: Sequence[CameraView],
                          gt_assignment: np.ndarray, *,
                          threads: int | None = None) -> list[InstanceMask]:
    """Label every pixel with the instance of its dominant Gaussian (0 where background wins)."""
    gt_assignment = np.asarray(gt_assignment)
    if gt_assignment.shape != (scene.timestamp_count, scene.gaussian_count):
        raise ValidationError(
            f"gt_assignment must be {(scene.timestamp_count, scene.gaussian_count)}, "
            f"got {gt_assignment.shape}"
        )
    masks = []
    for cam in cameras:
        if scene.gaussian_count == 0:
            labels = np.zeros((cam.height, cam.width), dtype=np.int64)
        else:
            dom = dominant_view(scene, cam, threads=threads)
            labels = np.where(dom >= 0, gt_assignment[cam.timestamp][np.maximum(dom, 0)], 0)
        masks.append(InstanceMask(labels, cam.timestamp))
    return masks


def add_mask_noise(labels: np.ndarray, probability: float, rng: np.random.Generator) -> np.ndarray:
    """Flip boundary pixels to a differing 4-neighbour's label with the given probability."""
    padded = np.pad(labels, 1, mode="edge")
    h, w = labels.shape
    nbrs = np.stack([
        padded[0:h, 1:w + 1], padded[2:h + 2, 1:w + 1],
        padded[1:h + 1, 0:w], padded[1:h + 1, 2:w + 2],
    ])
    differ = nbrs != labels[None]
    keys = np.where(differ, rng.random(nbrs.shape), -1.0)
    choice = np.take_along_axis(nbrs, keys.argmax(axis=0)[None], axis=0)[0]
    flip = differ.any(axis=0) & (rng.random(labels.shape) < probability)
    return np.where(flip, choice, labels)


def generate(spec: SynthSpec, *, threads: int | None = None) -> SynthDataset:
    """Build the scenario's scene, cameras, masks and ground truth; deterministic in the seed."""
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    scene, gt_assignment = _assemble(_BUILDERS[spec.scenario](spec), spec, rng)
    cameras = make_cameras(spec)
    gt_masks = perfect_masks_from_gt(scene, cameras, gt_assignment, threads=threads)
    masks = gt_masks
    if spec.mask_noise > 0:
        masks = [InstanceMask(add_mask_noise(m.labels, spec.mask_noise, rng), m.timestamp)
                 for m in gt_masks]
    logger.info("Generated %s: N=%d, T=%d, %d views", spec.scenario,
                scene.gaussian_count, scene.timestamp_count, len(cameras))
    return SynthDataset(spec, scene, cameras, masks, gt_assignment, gt_masks)


def write_dataset(ds: SynthDataset, root: str | Path) -> Path:
    """Write the dataset in the on-disk formats the segment command reads."""
    root = Path(root)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    (root / "gt").mkdir(exist_ok=True)
    save_scene(ds.scene, root / "scene.g4ds")
    save_cameras(ds.cameras, root / "cameras.json")
    for cam, mask in ds.views:
        write_mask(mask, root / "masks" / f"{cam.view_id:04d}.pgm")
    for t, binary in ds.gt_binary().items():
        write_mask(binary.astype(np.uint16), root / "gt" / f"{t}.pgm")
    np.save(root / "gt_assignment.npy", ds.gt_assignment)
    meta = asdict(ds.spec) | {
        "gaussian_count": ds.scene.gaussian_count,
        "target": ds.target,
    }
    (root / "synth.json").write_text(json.dumps(meta, indent=2, sort_keys=True), encoding="utf-8")
    return root
