"""
Scene model -- domain types and file codecs for dynamic Gaussian scenes.

Provides:
  - DynamicScene / GaussianFrameParams : N Gaussians x T timestamps of explicit splat parameters
  - CameraView                         : pinhole camera bound to one timestamp
  - InstanceMask                       : per-view 2D instance labels (0 = background)
  - load_scene() / save_scene()        : "G4DS" binary scene format
  - load_cameras() / save_cameras()    : JSON camera array
  - load_mask() / write_mask()         : 16-bit binary PGM (P5, maxval 65535)
  - save_pointcloud() / load_pointcloud(): ASCII PLY of a Gaussian selection
  - write_ppm()                        : 8-bit RGB artifact images

Scene file layout (little-endian)::

    "G4DS" | u32 version=1 | u32 N | u32 T | T frame blocks
    frame block = N x (3 mean, 4 quat wxyz, 3 scale, 1 opacity, 3 rgb) float32

All types are immutable after construction (arrays are flagged read-only), so
they can be shared across threads without copying.
"""
from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image
from plyfile import PlyData, PlyElement

logger = logging.getLogger(__name__)

SCENE_MAGIC = b"G4DS"
SCENE_VERSION = 1
SCENE_HEADER = struct.Struct("<4sIII")
FLOATS_PER_GAUSSIAN = 14  # 3 mean + 4 quat + 3 scale + 1 opacity + 3 rgb

PGM_MAGIC = b"P5"
PGM_MAXVAL = 65535
# Pillow opens maxval-65535 graymaps in one of these modes, depending on version
PGM_16BIT_MODES = ("I", "I;16", "I;16B")

QUAT_TOLERANCE = 1e-5
ORTHONORMAL_TOLERANCE = 1e-5


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class Segment4DError(Exception):
    """Base class for every error raised by the segmentation pipeline."""


class SceneFormatError(Segment4DError, ValueError):
    """A file does not follow its binary/text format (magic, version, size)."""


class ValidationError(Segment4DError, ValueError):
    """Input data violates a documented invariant."""


class StageError(Segment4DError):
    """Wraps a pipeline failure with the stage it happened in."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage}: {cause}")
        self.stage = stage
        self.cause = cause


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# Gaussians
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianFrameParams:
    """One Gaussian at one timestamp."""
    mean: np.ndarray       # (3,) world units
    rotation: np.ndarray   # (4,) unit quaternion, w first
    scale: np.ndarray      # (3,) world units, > 0
    opacity: float         # o_i(t) in [0, 1]
    color: np.ndarray      # (3,) RGB in [0, 1]


@dataclass(frozen=True, eq=False)
class DynamicScene:
    """Explicit per-frame Gaussian parameters, stored frame-major.

    Arrays are ``float32`` with a leading timestamp axis:
    means/scales/colors ``(T, N, 3)``, quats ``(T, N, 4)``, opacities ``(T, N)``.
    """
    means: np.ndarray
    quats: np.ndarray
    scales: np.ndarray
    opacities: np.ndarray
    colors: np.ndarray

    def __post_init__(self):
        for name in ("means", "quats", "scales", "opacities", "colors"):
            arr = np.array(getattr(self, name), dtype=np.float32, copy=True)
            object.__setattr__(self, name, _readonly(arr))
        self._check_shapes()

    @classmethod
    def from_arrays(cls, means, quats, scales, opacities, colors=None) -> "DynamicScene":
        """Build and fully validate a scene. ``colors`` defaults to mid grey."""
        means = np.asarray(means, dtype=np.float32)
        if colors is None:
            colors = np.full(means.shape, 0.5, dtype=np.float32)
        scene = cls(means, quats, scales, opacities, colors)
        scene.validate()
        return scene

    @property
    def gaussian_count(self) -> int:
        return int(self.means.shape[1])

    @property
    def timestamp_count(self) -> int:
        return int(self.means.shape[0])

    def gaussian(self, i: int, t: int) -> GaussianFrameParams:
        return GaussianFrameParams(
            mean=self.means[t, i],
            rotation=self.quats[t, i],
            scale=self.scales[t, i],
            opacity=float(self.opacities[t, i]),
            color=self.colors[t, i],
        )

    def frame(self, t: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """(means, quats, scales, opacities, colors) of frame *t*."""
        if not 0 <= t < self.timestamp_count:
            raise ValidationError(f"timestamp {t} outside [0, {self.timestamp_count})")
        return self.means[t], self.quats[t], self.scales[t], self.opacities[t], self.colors[t]

    def subset(self, indices: Sequence[int] | np.ndarray) -> "DynamicScene":
        """Scene restricted to the given Gaussian indices (all timestamps)."""
        idx = np.asarray(indices, dtype=np.int64)
        return DynamicScene(
            self.means[:, idx], self.quats[:, idx], self.scales[:, idx],
            self.opacities[:, idx], self.colors[:, idx],
        )

    def _check_shapes(self):
        if self.means.ndim != 3 or self.means.shape[2] != 3:
            raise ValidationError(f"means must be (T, N, 3), got {self.means.shape}")
        t, n = self.means.shape[:2]
        expected = {
            "quats": (t, n, 4),
            "scales": (t, n, 3),
            "opacities": (t, n),
            "colors": (t, n, 3),
        }
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValidationError(f"{name} must be {shape}, got {got}")
        if t < 1:
            raise ValidationError("scene needs at least one timestamp")

    def validate(self) -> None:
        """Check every per-slot invariant; the error names the first bad (i, t)."""
        self._check_shapes()
        checks = [
            ("non-finite value", ~(
                np.isfinite(self.means).all(axis=2)
                & np.isfinite(self.quats).all(axis=2)
                & np.isfinite(self.scales).all(axis=2)
                & np.isfinite(self.opacities)
                & np.isfinite(self.colors).all(axis=2)
            )),
            ("quaternion is not unit length",
             np.abs(np.linalg.norm(self.quats.astype(np.float64), axis=2) - 1.0) > QUAT_TOLERANCE),
            ("scale must be strictly positive", (self.scales <= 0).any(axis=2)),
            ("opacity outside [0, 1]", (self.opacities < 0) | (self.opacities > 1)),
            ("color outside [0, 1]", ((self.colors < 0) | (self.colors > 1)).any(axis=2)),
        ]
        for reason, bad in checks:
            hits = np.argwhere(bad)
            if len(hits):
                t, i = (int(v) for v in hits[0])
                raise ValidationError(f"{reason} at (i={i}, t={t})")


def save_scene(scene: DynamicScene, path: str | Path) -> None:
    """Write *scene* in the G4DS format (inverse of :func:`load_scene`)."""
    n, t = scene.gaussian_count, scene.timestamp_count
    packed = np.concatenate(
        [scene.means, scene.quats, scene.scales,
         scene.opacities[..., None], scene.colors],
        axis=2,
    ).astype("<f4")
    with open(path, "wb") as f:
        f.write(SCENE_HEADER.pack(SCENE_MAGIC, SCENE_VERSION, n, t))
        f.write(packed.tobytes(order="C"))


def load_scene(path: str | Path) -> DynamicScene:
    """Read and validate a G4DS scene file."""
    data = Path(path).read_bytes()
    if len(data) < SCENE_HEADER.size:
        raise SceneFormatError(f"{path}: truncated header")
    magic, version, n, t = SCENE_HEADER.unpack_from(data)
    if magic != SCENE_MAGIC:
        raise SceneFormatError(f"{path}: bad magic {magic!r}")
    if version != SCENE_VERSION:
        raise SceneFormatError(f"{path}: unsupported version {version}")
    if n < 1 or t < 1:
        raise SceneFormatError(f"{path}: N and T must be positive (N={n}, T={t})")
    expected = SCENE_HEADER.size + 4 * FLOATS_PER_GAUSSIAN * n * t
    if len(data) != expected:
        raise SceneFormatError(f"{path}: expected {expected} bytes, found {len(data)}")

    body = np.frombuffer(data, dtype="<f4", offset=SCENE_HEADER.size)
    body = body.reshape(t, n, FLOATS_PER_GAUSSIAN).astype(np.float32)
    scene = DynamicScene(
        means=body[..., 0:3],
        quats=body[..., 3:7],
        scales=body[..., 7:10],
        opacities=body[..., 10],
        colors=body[..., 11:14],
    )
    scene.validate()
    logger.debug("Loaded scene %s (N=%d, T=%d)", path, n, t)
    return scene


# ---------------------------------------------------------------------------
# Cameras
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class CameraView:
    """Pinhole camera observing frame ``timestamp``.

    ``view_id`` is the camera's position in cameras.json; it is the canonical
    ordering key whenever views are summed.
    """
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    world_to_camera: np.ndarray
    timestamp: int
    view_id: int = 0

    def __post_init__(self):
        w2c = np.array(self.world_to_camera, dtype=np.float64).reshape(4, 4)
        object.__setattr__(self, "world_to_camera", _readonly(w2c))

    @property
    def rotation(self) -> np.ndarray:
        return self.world_to_camera[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.world_to_camera[:3, 3]

    def validate(self, timestamp_count: int | None = None) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValidationError(f"camera {self.view_id}: width/height must be positive")
        if not np.isfinite(self.world_to_camera).all():
            raise ValidationError(f"camera {self.view_id}: non-finite extrinsics")
        rot = self.rotation
        if np.abs(rot @ rot.T - np.eye(3)).max() > ORTHONORMAL_TOLERANCE:
            raise ValidationError(f"camera {self.view_id}: rotation block is not orthonormal")
        if self.timestamp < 0 or (timestamp_count is not None and self.timestamp >= timestamp_count):
            raise ValidationError(
                f"camera {self.view_id}: timestamp {self.timestamp} outside [0, {timestamp_count})"
            )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
            "world_to_camera": [float(v) for v in self.world_to_camera.reshape(-1)],
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, data: dict, view_id: int = 0) -> "CameraView":
        try:
            w2c = data["world_to_camera"]
            if len(w2c) != 16:
                raise ValidationError(f"camera {view_id}: world_to_camera needs 16 values")
            return cls(
                fx=float(data["fx"]), fy=float(data["fy"]),
                cx=float(data["cx"]), cy=float(data["cy"]),
                width=int(data["width"]), height=int(data["height"]),
                world_to_camera=np.asarray(w2c, dtype=np.float64),
                timestamp=int(data["timestamp"]),
                view_id=view_id,
            )
        except KeyError as e:
            raise SceneFormatError(f"camera {view_id}: missing field {e}") from None


def load_cameras(path: str | Path, timestamp_count: int | None = None) -> list[CameraView]:
    """Read the JSON camera array; ``view_id`` is the array index."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise SceneFormatError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(raw, list):
        raise SceneFormatError(f"{path}: expected a JSON array of cameras")
    cams = [CameraView.from_dict(entry, view_id=k) for k, entry in enumerate(raw)]
    for cam in cams:
        cam.validate(timestamp_count)
    return cams


def save_cameras(cameras: Iterable[CameraView], path: str | Path) -> None:
    Path(path).write_text(
        json.dumps([cam.to_dict() for cam in cameras], indent=2),
        encoding="utf-8",
    )


# ---------------------------------------------------------------------------
# Instance masks
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class InstanceMask:
    """2D instance labels of one view; 0 is background."""
    labels: np.ndarray
    timestamp: int

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if labels.ndim != 2:
            raise ValidationError(f"mask labels must be 2D, got shape {labels.shape}")
        if labels.size and (labels.min() < 0 or labels.max() > PGM_MAXVAL):
            raise ValidationError("mask labels must lie in [0, 65535]")
        object.__setattr__(self, "labels", _readonly(labels))

    @property
    def height(self) -> int:
        return int(self.labels.shape[0])

    @property
    def width(self) -> int:
        return int(self.labels.shape[1])

    @property
    def max_label(self) -> int:
        return int(self.labels.max()) if self.labels.size else 0


def instance_count(masks: Iterable[InstanceMask]) -> int:
    """K: the largest instance ID over a whole mask set."""
    return max((m.max_label for m in masks), default=0)


def validate_pairing(cameras: Sequence[CameraView], masks: Sequence[InstanceMask],
                     timestamp_count: int) -> None:
    """Cameras and masks must pair one-to-one with matching size and timestamp."""
    if len(cameras) != len(masks):
        raise ValidationError(f"{len(cameras)} cameras but {len(masks)} masks")
    for cam, mask in zip(cameras, masks):
        cam.validate(timestamp_count)
        if (mask.height, mask.width) != (cam.height, cam.width):
            raise ValidationError(
                f"view {cam.view_id}: mask is {mask.width}x{mask.height}, "
                f"camera is {cam.width}x{cam.height}"
            )
        if mask.timestamp != cam.timestamp:
            raise ValidationError(
                f"view {cam.view_id}: mask timestamp {mask.timestamp} != camera {cam.timestamp}"
            )


def load_mask(path: str | Path, timestamp: int = 0) -> InstanceMask:
    """Read a 16-bit P5 PGM as instance labels (big-endian samples)."""
    with open(path, "rb") as f:
        magic = f.read(2)
        if magic != PGM_MAGIC:
            raise SceneFormatError(f"{path}: expected P5 PGM, found {magic!r}")
        f.seek(0)
        try:
            with Image.open(f, formats=["PPM"]) as img:
                img.load()
                mode = img.mode
                samples = np.asarray(img)
        except (OSError, ValueError, SyntaxError) as exc:
            raise SceneFormatError(f"{path}: truncated or unreadable raster ({exc})") from None
    if mode not in PGM_16BIT_MODES:
        raise SceneFormatError(f"{path}: maxval must be {PGM_MAXVAL}, found {mode} samples")
    return InstanceMask(samples.astype(np.int64), timestamp)


def write_mask(mask: InstanceMask | np.ndarray, path: str | Path) -> None:
    """Write labels as a 16-bit P5 PGM (inverse of :func:`load_mask`)."""
    labels = mask.labels if isinstance(mask, InstanceMask) else np.asarray(mask)
    if labels.ndim != 2:
        raise ValidationError("mask must be 2D")
    if labels.size and (labels.min() < 0 or labels.max() > PGM_MAXVAL):
        raise ValidationError("mask labels must lie in [0, 65535]")
    # mode "I" is written as P5 with maxval 65535
    Image.fromarray(labels.astype(np.int32)).save(path, format="PPM")


def write_ppm(rgb: np.ndarray, path: str | Path) -> None:
    """Write an (H, W, 3) float image in [0, 1] as an 8-bit binary PPM."""
    pixels = np.round(np.clip(np.asarray(rgb), 0.0, 1.0) * 255.0).astype(np.uint8)
    Image.fromarray(pixels).save(path, format="PPM")


# ---------------------------------------------------------------------------
# Point clouds
# ---------------------------------------------------------------------------

PLY_VERTEX_DTYPE = [
    ("x", "f4"), ("y", "f4"), ("z", "f4"),
    ("red", "u1"), ("green", "u1"), ("blue", "u1"),
]


def save_pointcloud(scene: DynamicScene, mask: np.ndarray, t: int, path: str | Path) -> None:
    """Write the selected Gaussians' means and colors at frame *t* as ASCII PLY."""
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != (scene.gaussian_count,):
        raise ValidationError(f"mask must have length {scene.gaussian_count}, got {mask.shape}")
    if not 0 <= t < scene.timestamp_count:
        raise ValidationError(f"timestamp {t} outside [0, {scene.timestamp_count})")
    idx = np.flatnonzero(mask)
    vertices = np.empty(len(idx), dtype=PLY_VERTEX_DTYPE)
    means = scene.means[t, idx]
    colors = np.round(np.clip(scene.colors[t, idx], 0.0, 1.0) * 255.0).astype(np.uint8)
    for axis, name in enumerate("xyz"):
        vertices[name] = means[:, axis]
    for axis, name in enumerate(("red", "green", "blue")):
        vertices[name] = colors[:, axis]
    PlyData([PlyElement.describe(vertices, "vertex")], text=True).write(str(path))


def load_pointcloud(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a PLY written by :func:`save_pointcloud`; returns (xyz, rgb uint8)."""
    vertex = PlyData.read(str(path))["vertex"]
    xyz = np.stack([np.asarray(vertex[c], dtype=np.float32) for c in "xyz"], axis=-1)
    rgb = np.stack([np.asarray(vertex[c], dtype=np.uint8) for c in ("red", "green", "blue")], axis=-1)
    return xyz.reshape(-1, 3), rgb.reshape(-1, 3)
