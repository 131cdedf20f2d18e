"""
Tests for rrc.py -- range thresholds on a half-plane mask and synthetic scenes.

The half-plane rig: a 64 x 64 camera, one large Gaussian (6.4 px sigma) at
depth 5, and a mask labelling every column >= 32 as the target.
"""
import numpy as np
import pytest

from conftest import make_camera, make_scene
from igit import SegmentMask
from rasterizer import TraceConfig, render_view
from rrc import (
    RangeThresholds,
    load_ranges,
    render_segmented,
    rrc_init,
    rrc_run,
    rrc_step,
    save_ranges,
)
from scene_model import InstanceMask, SceneFormatError, ValidationError
from temporal import TemporalSegments

SIZE = 64


def _half_plane_views(frames=1):
    labels = np.zeros((SIZE, SIZE), dtype=np.int64)
    labels[:, SIZE // 2:] = 1
    return [(make_camera(SIZE, SIZE, timestamp=t, view_id=t), InstanceMask(labels, t))
            for t in range(frames)]


def _gaussian_at_column(x_px, frames=1):
    # world x for a mean landing on pixel column x_px at depth 5
    x = (x_px - (SIZE - 1) / 2) * 5.0 / SIZE
    return make_scene([[x, 0.0, 5.0]], scales=0.5, opacities=0.8, frames=frames)


def _one_segment(n, frames=1, member=None):
    member = np.ones(n, dtype=bool) if member is None else member
    return TemporalSegments([0], [SegmentMask(member)], frames)


# ---------------------------------------------------------------------------
# Initialization and steps
# ---------------------------------------------------------------------------

class TestRrcInit:
    """r starts at the occlusion-free target share."""

    def test_centered_on_boundary(self):
        scene = _gaussian_at_column((SIZE - 1) / 2)
        r = rrc_init(scene, _half_plane_views(), _one_segment(1), 1)
        assert r.values_at(0)[0] == pytest.approx(0.5, abs=0.05)

    def test_inside_target(self):
        scene = _gaussian_at_column(52.0)
        scene = make_scene(scene.means[0], scales=0.1, opacities=0.8)
        r = rrc_init(scene, _half_plane_views(), _one_segment(1), 1)
        assert r.values_at(0)[0] == pytest.approx(1.0)

    def test_keys_follow_segment_mask(self):
        scene = make_scene([[0.5, 0, 5], [-0.5, 0, 5], [0.3, 0.2, 5]], scales=0.1)
        member = np.array([True, False, True])
        r = rrc_init(scene, _half_plane_views(), _one_segment(3, member=member), 1)
        idx, _ = r.frames[0]
        np.testing.assert_array_equal(idx, [0, 2])
        assert len(r) == 2

    def test_empty_segment_mask_is_skipped(self):
        scene = _gaussian_at_column(40.0)
        r = rrc_init(scene, _half_plane_views(), _one_segment(1, member=np.zeros(1, bool)), 1)
        assert r.timestamps == []

    def test_views_of_one_frame_are_summed(self):
        scene = _gaussian_at_column(36.0)
        views = _half_plane_views()
        _, mask = views[0]
        twin = (make_camera(SIZE, SIZE, view_id=1), mask)
        single = rrc_init(scene, views, _one_segment(1), 1).values_at(0)
        double = rrc_init(scene, views + [twin], _one_segment(1), 1).values_at(0)
        np.testing.assert_allclose(single, double)


class TestRrcStep:
    """r <- r * p over the truncated kernel."""

    def test_thresholds_never_increase(self):
        scene = _gaussian_at_column(33.0)
        views = _half_plane_views()
        segs = _one_segment(1)
        r = rrc_init(scene, views, segs, 1)
        for _ in range(5):
            new_r, probs = rrc_step(scene, views, segs, r, 1)
            assert new_r.values_at(0)[0] <= r.values_at(0)[0]
            assert 0.0 <= probs.values_at(0)[0] <= 1.0
            assert new_r.iterations == r.iterations + 1
            r = new_r

    def test_rejects_thresholds_not_keyed_on_mask(self):
        scene = make_scene([[0.5, 0, 5], [0.6, 0, 5]], scales=0.1)
        views = _half_plane_views()
        r = rrc_init(scene, views, _one_segment(2), 1)
        other = _one_segment(2, member=np.array([True, False]))
        with pytest.raises(ValidationError, match="keyed"):
            rrc_step(scene, views, other, r, 1)


class TestRrcRun:
    """Convergence on the half-plane rig."""

    def test_straddling_gaussian_retreats_into_target(self):
        scene = _gaussian_at_column(33.0)
        views = _half_plane_views()
        segs = _one_segment(1)
        r0 = rrc_init(scene, views, segs, 1).values_at(0)[0]
        history = []
        r = rrc_run(scene, views, segs, 1, max_iters=20, history=history)
        final = r.values_at(0)[0]
        assert final < 0.6
        assert final < r0

        out = render_segmented(scene, views[0][0], segs, r, 1)
        cols = np.nonzero(out.alpha > 0)[1]
        assert len(cols) > 0
        assert cols.min() >= SIZE // 2 - 1

    def test_history_stops_at_tolerance(self):
        scene = _gaussian_at_column(52.0)
        scene = make_scene(scene.means[0], scales=0.1, opacities=0.8)
        history = []
        r = rrc_run(scene, _half_plane_views(), _one_segment(1), 1, history=history)
        assert len(history) == 1
        assert history[0]["max_delta"] == 0.0
        assert r.values_at(0)[0] == 1.0

    def test_invalid_iteration_cap(self):
        scene = _gaussian_at_column(33.0)
        with pytest.raises(ValidationError):
            rrc_run(scene, _half_plane_views(), _one_segment(1), 1, max_iters=0)

    @pytest.mark.parametrize("seed", range(3))
    def test_probabilities_ignore_depth_order(self, seed):
        # equal depths: reordering indices reorders compositing, geometry is untouched
        rng = np.random.default_rng(seed)
        n = 30
        means = np.column_stack([rng.uniform(-0.5, 0.5, n), rng.uniform(-0.5, 0.5, n), np.full(n, 5.0)])
        scene = make_scene(means, scales=rng.uniform(0.05, 0.15, n), opacities=rng.uniform(0.3, 0.9, n))
        perm = rng.permutation(n)
        shuffled = scene.subset(perm)
        views = _half_plane_views()

        r_a = rrc_init(scene, views, _one_segment(n), 1)
        r_b = rrc_init(shuffled, views, _one_segment(n), 1)
        np.testing.assert_allclose(r_b.values_at(0), r_a.values_at(0)[perm], atol=1e-12)

        step_a, p_a = rrc_step(scene, views, _one_segment(n), r_a, 1)
        step_b, p_b = rrc_step(shuffled, views, _one_segment(n), r_b, 1)
        np.testing.assert_allclose(p_b.values_at(0), p_a.values_at(0)[perm], atol=1e-12)
        np.testing.assert_allclose(step_b.values_at(0), step_a.values_at(0)[perm], atol=1e-12)


# ---------------------------------------------------------------------------
# Rendering and persistence
# ---------------------------------------------------------------------------

class TestRenderSegmented:
    """Rendering with the segment mask and thresholds."""

    def test_without_thresholds_matches_subset_render(self):
        scene = make_scene([[0.2, 0, 5], [-0.2, 0, 5]], scales=0.1)
        segs = _one_segment(2, member=np.array([True, False]))
        cam = make_camera(SIZE, SIZE)
        out = render_segmented(scene, cam, segs, None, 1)
        ref = render_view(scene, cam, TraceConfig(subset_mask=np.array([True, False])))
        np.testing.assert_array_equal(out.alpha, ref.alpha)

    def test_unswept_segment_raises(self):
        scene = _gaussian_at_column(33.0)
        segs = TemporalSegments([0], [None], 1)
        with pytest.raises(ValidationError):
            render_segmented(scene, make_camera(SIZE, SIZE), segs, None, 1)

    def test_frame_without_thresholds_renders_full_kernels(self):
        scene = _gaussian_at_column(33.0, frames=2)
        segs = _one_segment(1, frames=2)
        r = RangeThresholds(frames={0: (np.array([0]), np.array([0.1]))})
        cam1 = make_camera(SIZE, SIZE, timestamp=1)
        full = render_segmented(scene, cam1, segs, None, 1)
        frame1 = render_segmented(scene, cam1, segs, r, 1)
        np.testing.assert_array_equal(full.alpha, frame1.alpha)
        frame0 = render_segmented(scene, make_camera(SIZE, SIZE), segs, r, 1)
        assert (frame0.alpha > 0).sum() < (full.alpha > 0).sum()


class TestRangesFile:
    """G4DR reading and writing."""

    def test_round_trip(self, tmp_path):
        r = RangeThresholds(frames={
            0: (np.array([1, 4]), np.array([0.25, 1.0])),
            3: (np.array([2]), np.array([0.5])),
        })
        path = tmp_path / "ranges.g4dr"
        save_ranges(r, path)
        back = load_ranges(path)
        assert back.timestamps == [0, 3]
        assert list(back.items()) == list(r.items())
        assert path.stat().st_size == 8 + 3 * 12

    def test_empty_table(self, tmp_path):
        path = tmp_path / "ranges.g4dr"
        save_ranges(RangeThresholds(), path)
        assert len(load_ranges(path)) == 0

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "ranges.g4dr"
        path.write_bytes(b"NOPE\x00\x00\x00\x00")
        with pytest.raises(SceneFormatError):
            load_ranges(path)

    def test_out_of_range_value(self, tmp_path):
        path = tmp_path / "ranges.g4dr"
        save_ranges(RangeThresholds(frames={0: (np.array([0]), np.array([1.5]))}), path)
        with pytest.raises(ValidationError):
            load_ranges(path)

    def test_binarized_fraction(self):
        r = RangeThresholds(frames={0: (np.arange(4), np.array([0.01, 0.5, 0.97, 1.0]))})
        assert r.binarized_fraction() == pytest.approx(0.75)
        assert RangeThresholds().binarized_fraction() == 1.0
