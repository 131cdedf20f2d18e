"""
EWA projection of 3D Gaussians to screen-space 2D Gaussians.

``project()`` handles a single Gaussian; ``project_frame()`` projects a whole
frame at once and returns a depth-sorted struct of arrays that the rasterizer
consumes directly.

Conventions:
  - pixel centers sit at integer coordinates (0 .. W-1, 0 .. H-1)
  - cov2d gets a 0.3 px^2 low-pass dilation
  - footprint radius = 3 * sqrt(largest eigenvalue of cov2d)
  - Gaussians with camera-space z <= 0.01 or a footprint entirely off-screen are culled
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from scene_model import CameraView, DynamicScene, GaussianFrameParams

NEAR_PLANE = 0.01
LOW_PASS = 0.3
FOOTPRINT_SIGMAS = 3.0


@dataclass(frozen=True, eq=False)
class Projected2D:
    mean2d: np.ndarray        # (2,) pixels
    cov2d: np.ndarray         # (2, 2) pixels^2
    conic: np.ndarray         # (2, 2) inverse of cov2d
    depth: float
    footprint_radius: float
    source_index: int


@dataclass(frozen=True, eq=False)
class ProjectedSet:
    """Projected Gaussians of one frame, culled and sorted front to back.

    Symmetric 2x2 matrices are packed as (a, b, c) for [[a, b], [b, c]].
    """
    source_index: np.ndarray  # (M,) int64
    mean2d: np.ndarray        # (M, 2)
    cov2d: np.ndarray         # (M, 3)
    conic: np.ndarray         # (M, 3)
    depth: np.ndarray         # (M,)
    radius: np.ndarray        # (M,)
    opacity: np.ndarray       # (M,) float64
    color: np.ndarray         # (M, 3) float64

    def __len__(self) -> int:
        return int(self.source_index.shape[0])

    def take(self, selector) -> "ProjectedSet":
        """Rows picked by a boolean mask or index array, order preserved."""
        return ProjectedSet(*(getattr(self, name)[selector] for name in _FIELDS))

    def item(self, k: int) -> Projected2D:
        a, b, c = self.cov2d[k]
        ia, ib, ic = self.conic[k]
        return Projected2D(
            mean2d=self.mean2d[k].copy(),
            cov2d=np.array([[a, b], [b, c]]),
            conic=np.array([[ia, ib], [ib, ic]]),
            depth=float(self.depth[k]),
            footprint_radius=float(self.radius[k]),
            source_index=int(self.source_index[k]),
        )


_FIELDS = ("source_index", "mean2d", "cov2d", "conic", "depth", "radius", "opacity", "color")


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for (..., 4) quaternions in (w, x, y, z) order."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    rot = np.empty(q.shape[:-1] + (3, 3), dtype=np.float64)
    rot[..., 0, 0] = 1 - 2 * (y * y + z * z)
    rot[..., 0, 1] = 2 * (x * y - w * z)
    rot[..., 0, 2] = 2 * (x * z + w * y)
    rot[..., 1, 0] = 2 * (x * y + w * z)
    rot[..., 1, 1] = 1 - 2 * (x * x + z * z)
    rot[..., 1, 2] = 2 * (y * z - w * x)
    rot[..., 2, 0] = 2 * (x * z - w * y)
    rot[..., 2, 1] = 2 * (y * z + w * x)
    rot[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return rot


def covariance_3d(quats: np.ndarray, scales: np.ndarray) -> np.ndarray:
    """R diag(s)^2 R^T for (..., 4) quaternions and (..., 3) scales."""
    rot = quat_to_rotmat(quats)
    s2 = np.square(np.asarray(scales, dtype=np.float64))
    return (rot * s2[..., None, :]) @ np.swapaxes(rot, -1, -2)


def _project_arrays(means, quats, scales, cam: CameraView):
    """Vectorized projection; returns (keep, mean2d, cov2d packed, depth, radius)."""
    means = np.asarray(means, dtype=np.float64).reshape(-1, 3)
    rot_w = cam.rotation
    p_cam = means @ rot_w.T + cam.translation
    x, y, z = p_cam[:, 0], p_cam[:, 1], p_cam[:, 2]
    in_front = z > NEAR_PLANE
    zs = np.where(in_front, z, 1.0)

    jac = np.zeros((len(means), 2, 3), dtype=np.float64)
    jac[:, 0, 0] = cam.fx / zs
    jac[:, 0, 2] = -cam.fx * x / (zs * zs)
    jac[:, 1, 1] = cam.fy / zs
    jac[:, 1, 2] = -cam.fy * y / (zs * zs)
    jw = jac @ rot_w
    cov = jw @ covariance_3d(quats, scales).reshape(-1, 3, 3) @ np.swapaxes(jw, -1, -2)

    a = cov[:, 0, 0] + LOW_PASS
    b = 0.5 * (cov[:, 0, 1] + cov[:, 1, 0])
    c = cov[:, 1, 1] + LOW_PASS
    mean2d = np.stack([cam.fx * x / zs + cam.cx, cam.fy * y / zs + cam.cy], axis=-1)

    mid = 0.5 * (a + c)
    lam_max = mid + np.sqrt(np.maximum(mid * mid - (a * c - b * b), 0.0))
    radius = FOOTPRINT_SIGMAS * np.sqrt(lam_max)

    on_screen = (
        (mean2d[:, 0] + radius >= 0) & (mean2d[:, 0] - radius <= cam.width - 1)
        & (mean2d[:, 1] + radius >= 0) & (mean2d[:, 1] - radius <= cam.height - 1)
    )
    keep = in_front & on_screen
    return keep, mean2d, np.stack([a, b, c], axis=-1), z, radius


def _conic(cov: np.ndarray) -> np.ndarray:
    a, b, c = cov[..., 0], cov[..., 1], cov[..., 2]
    det = a * c - b * b
    return np.stack([c / det, -b / det, a / det], axis=-1)


def project(g: GaussianFrameParams, cam: CameraView, source_index: int = 0) -> Projected2D | None:
    """Project one Gaussian; ``None`` when it is culled."""
    keep, mean2d, cov, depth, radius = _project_arrays(
        g.mean[None], np.asarray(g.rotation)[None], np.asarray(g.scale)[None], cam,
    )
    if not keep[0]:
        return None
    a, b, c = cov[0]
    ia, ib, ic = _conic(cov[0])
    return Projected2D(
        mean2d=mean2d[0],
        cov2d=np.array([[a, b], [b, c]]),
        conic=np.array([[ia, ib], [ib, ic]]),
        depth=float(depth[0]),
        footprint_radius=float(radius[0]),
        source_index=source_index,
    )


def project_frame(scene: DynamicScene, t: int, cam: CameraView) -> ProjectedSet:
    """Project every Gaussian of frame *t*, cull, and depth-sort."""
    means, quats, scales, opacities, colors = scene.frame(t)
    keep, mean2d, cov, depth, radius = _project_arrays(means, quats, scales, cam)
    idx = np.flatnonzero(keep)
    order = idx[np.lexsort((idx, depth[idx]))]
    return ProjectedSet(
        source_index=order.astype(np.int64),
        mean2d=mean2d[order],
        cov2d=cov[order],
        conic=_conic(cov[order]),
        depth=depth[order],
        radius=radius[order],
        opacity=opacities[order].astype(np.float64),
        color=colors[order].astype(np.float64),
    )


def kernel_value(p: Projected2D, pixel) -> float:
    """exp(-1/2 d^T conic d) with d = pixel - mean2d."""
    d = np.asarray(pixel, dtype=np.float64) - p.mean2d
    return float(np.exp(-0.5 * d @ p.conic @ d))


def depth_sort(projected: Sequence[Projected2D]) -> list[Projected2D]:
    """Front to back; equal depths ordered by source index."""
    return sorted(projected, key=lambda p: (p.depth, p.source_index))


def level_set_mass(cov2d: np.ndarray, c: float, samples: int, rng: np.random.Generator) -> float:
    """Monte-Carlo share of the normalized density where the kernel exceeds *c*.

    For a unit-peak Gaussian kernel this is 1 - c whatever the covariance.
    """
    cov2d = np.asarray(cov2d, dtype=np.float64)
    pts = rng.multivariate_normal(np.zeros(2), cov2d, size=samples)
    inv = np.linalg.inv(cov2d)
    mahal = np.einsum("ni,ij,nj->n", pts, inv, pts)
    return float(np.mean(np.exp(-0.5 * mahal) > c))
