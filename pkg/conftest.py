"""
Shared fixtures and builders for segment4d tests.

Scenes here are tiny and hand-placed so expected weights can be worked out
on paper. The standard test camera looks down +z from the origin with the
principal point on a pixel center, so a Gaussian at (0, 0, z) projects
exactly onto pixel (cx, cy).
"""
import sys
from pathlib import Path

import numpy as np
import pytest

# Ensure the repo root is on sys.path
REPO_ROOT = Path(__file__).parent
if str(REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(REPO_ROOT))

from scene_model import CameraView, DynamicScene, InstanceMask  # noqa: E402
from synth import SynthSpec  # noqa: E402

IDENTITY_QUAT = (1.0, 0.0, 0.0, 0.0)


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def make_camera(width=9, height=9, timestamp=0, view_id=0, focal=None, cx=None, cy=None,
                translation=(0.0, 0.0, 0.0)) -> CameraView:
    """Identity-rotation pinhole camera; principal point defaults to the image center."""
    w2c = np.eye(4)
    w2c[:3, 3] = translation
    return CameraView(
        fx=float(focal if focal is not None else width),
        fy=float(focal if focal is not None else width),
        cx=float((width - 1) / 2 if cx is None else cx),
        cy=float((height - 1) / 2 if cy is None else cy),
        width=width, height=height, world_to_camera=w2c,
        timestamp=timestamp, view_id=view_id,
    )


def make_scene(means, scales=0.05, opacities=0.5, colors=None, quats=None,
               frames=1) -> DynamicScene:
    """Static scene repeated over *frames*; scalars broadcast to every Gaussian."""
    means = np.asarray(means, dtype=np.float64).reshape(-1, 3)
    n = len(means)
    scales = np.broadcast_to(np.asarray(scales, dtype=np.float64).reshape(-1, 1), (n, 3))
    opacities = np.broadcast_to(np.asarray(opacities, dtype=np.float64), (n,))
    colors = np.full((n, 3), 0.5) if colors is None else np.broadcast_to(colors, (n, 3))
    quats = np.tile(IDENTITY_QUAT, (n, 1)) if quats is None else np.asarray(quats)

    def rep(a):
        return np.repeat(np.asarray(a, dtype=np.float64)[None], frames, axis=0)

    return DynamicScene.from_arrays(rep(means), rep(quats), rep(scales), rep(opacities), rep(colors))


def random_scene(rng: np.random.Generator, n: int, frames: int = 1) -> DynamicScene:
    """Random Gaussians in front of make_camera(64, 64), mostly on screen."""
    means = np.column_stack([
        rng.uniform(-0.6, 0.6, n), rng.uniform(-0.6, 0.6, n), rng.uniform(2.0, 6.0, n),
    ])
    scales = rng.uniform(0.01, 0.12, (n, 3))
    quats = rng.normal(size=(n, 4))
    quats /= np.linalg.norm(quats, axis=1, keepdims=True)
    opacities = rng.uniform(0.05, 1.0, n)
    colors = rng.uniform(0.0, 1.0, (n, 3))

    def rep(a):
        return np.repeat(a[None], frames, axis=0)

    return DynamicScene.from_arrays(rep(means), rep(quats), rep(scales), rep(opacities), rep(colors))


def center_mask(width=9, height=9, label=1, timestamp=0) -> InstanceMask:
    """Background everywhere except the center pixel."""
    labels = np.zeros((height, width), dtype=np.int64)
    labels[(height - 1) // 2, (width - 1) // 2] = label
    return InstanceMask(labels, timestamp)


def uniform_mask(width=9, height=9, label=1, timestamp=0) -> InstanceMask:
    return InstanceMask(np.full((height, width), label, dtype=np.int64), timestamp)


# 10 x 10 Gaussians per object at 64 px: the scale most synth-based tests run at
QUICK_SCALE = dict(n_per_object=100, image_size=64)


def small_spec(scenario: str = "static_two_objects", **changes) -> SynthSpec:
    """SynthSpec at QUICK_SCALE; keyword changes override."""
    return SynthSpec(scenario=scenario, **{**QUICK_SCALE, **changes})


# ---------------------------------------------------------------------------
# Fixtures
# ---------------------------------------------------------------------------

@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def camera():
    return make_camera()


@pytest.fixture
def coincident_pair():
    """Two identical Gaussians on the optical axis at depth 5, opacity 0.5."""
    return make_scene([[0.0, 0.0, 5.0], [0.0, 0.0, 5.0]], scales=0.05, opacities=0.5)


@pytest.fixture(scope="session")
def synth_cache():
    """Memoized synth.generate so several tests can share one dataset."""
    from synth import generate

    cache = {}

    def get(spec):
        if spec not in cache:
            cache[spec] = generate(spec)
        return cache[spec]

    return get
