"""
Tests for synth.py -- scenario layouts, ground truth and dataset output.
"""
import json

import numpy as np
import pytest

from conftest import small_spec
from scene_model import InstanceMask, ValidationError, load_cameras, load_mask, load_scene
from synth import (
    SCENARIOS,
    SynthSpec,
    add_mask_noise,
    generate,
    make_cameras,
    perfect_masks_from_gt,
    write_dataset,
)


class TestSynthSpec:
    """Parameter validation."""

    @pytest.mark.parametrize("changes", [
        {"scenario": "unknown"},
        {"n_per_object": 3},
        {"frames": 0},
        {"views_per_frame": 0},
        {"scenario": "identity_flip", "frames": 1},
        {"image_size": 8},
        {"mask_noise": 1.5},
    ])
    def test_invalid(self, changes):
        with pytest.raises(ValidationError):
            generate(SynthSpec(**changes))


class TestGenerate:
    """Every scenario yields a consistent dataset."""

    @pytest.mark.parametrize("scenario", SCENARIOS)
    def test_shapes_and_pairing(self, scenario, synth_cache):
        spec = small_spec(scenario=scenario)
        ds = synth_cache(spec)
        n, t = ds.scene.gaussian_count, ds.scene.timestamp_count
        assert t == spec.frames
        assert ds.gt_assignment.shape == (t, n)
        assert len(ds.cameras) == len(ds.masks) == spec.frames * spec.views_per_frame
        for cam, mask in ds.views:
            assert (mask.height, mask.width) == (cam.height, cam.width)
            assert mask.timestamp == cam.timestamp
        assert any((m.labels == ds.target).any() for m in ds.masks)

    def test_deterministic_in_seed(self):
        a = generate(small_spec(seed=7))
        b = generate(small_spec(seed=7))
        c = generate(small_spec(seed=8))
        assert np.array_equal(a.scene.means, b.scene.means)
        assert all(np.array_equal(x.labels, y.labels) for x, y in zip(a.masks, b.masks))
        assert not np.array_equal(a.scene.means, c.scene.means)

    def test_static_assignment_never_changes(self, synth_cache):
        ds = synth_cache(small_spec(scenario="static_two_objects"))
        assert (ds.gt_assignment == ds.gt_assignment[0]).all()
        assert set(np.unique(ds.gt_assignment)) == {1, 2}

    def test_identity_flip_switches_at_midpoint(self, synth_cache):
        spec = small_spec(scenario="identity_flip")
        ds = synth_cache(spec)
        flip = spec.frames // 2
        changed = ds.gt_assignment[flip] != ds.gt_assignment[flip - 1]
        assert changed.sum() == 2 * spec.n_per_object
        assert (ds.gt_assignment[flip - 1][changed] == 2).all()
        assert (ds.gt_assignment[flip][changed] == 1).all()

    def test_occluder_has_background_floaters(self, synth_cache):
        ds = synth_cache(small_spec(scenario="occluder"))
        labels = ds.gt_assignment[0]
        assert (labels == 0).sum() >= 2
        assert (labels == 2).sum() > 0

    def test_cameras(self):
        cams = make_cameras(SynthSpec(frames=3, views_per_frame=2, image_size=32))
        assert [c.view_id for c in cams] == list(range(6))
        assert [c.timestamp for c in cams] == [0, 0, 1, 1, 2, 2]
        assert cams[0].cx == pytest.approx(15.5)
        for cam in cams:
            cam.validate(3)

    def test_gt_binary_uses_first_view(self, synth_cache):
        ds = synth_cache(small_spec(scenario="static_two_objects"))
        gt = ds.gt_binary()
        assert sorted(gt) == list(range(ds.spec.frames))
        np.testing.assert_array_equal(gt[0], ds.gt_masks[0].labels == 1)


class TestMasks:
    """Ground-truth rendering and label noise."""

    def test_perfect_masks_match_generated(self, synth_cache):
        ds = synth_cache(small_spec(scenario="static_two_objects"))
        masks = perfect_masks_from_gt(ds.scene, ds.cameras[:1], ds.gt_assignment)
        np.testing.assert_array_equal(masks[0].labels, ds.masks[0].labels)

    @pytest.mark.parametrize("scenario", SCENARIOS)
    def test_target_rows_have_no_holes(self, scenario, synth_cache):
        ds = synth_cache(small_spec(scenario=scenario))
        for mask in ds.gt_masks:
            target = mask.labels == ds.target
            for row in target:
                cols = np.flatnonzero(row)
                if len(cols):
                    assert row[cols[0]:cols[-1] + 1].all()

    def test_translucent_target_is_solid(self, synth_cache):
        # opacity-0.7 target: no pixel inside its grid may fall to the background
        ds = synth_cache(small_spec(scenario="occluder"))
        labels = ds.gt_masks[0].labels
        rows, cols = np.nonzero(labels == ds.target)
        inner = labels[rows.min() + 2:rows.max() - 1, cols.min() + 2:cols.max() - 1]
        assert inner.size > 0
        assert not (inner == 0).any()

    def test_assignment_shape_checked(self, synth_cache):
        ds = synth_cache(small_spec(scenario="static_two_objects"))
        with pytest.raises(ValidationError):
            perfect_masks_from_gt(ds.scene, ds.cameras, ds.gt_assignment[:, :-1])

    def test_noise_only_touches_boundaries(self, rng):
        labels = np.zeros((12, 12), dtype=np.int64)
        labels[3:9, 3:9] = 1
        noisy = add_mask_noise(labels, 1.0, rng)
        changed = noisy != labels
        assert changed.any()
        assert not changed[0:2].any() and not changed[5:7, 5:7].any()

    def test_zero_noise_is_identity(self, rng):
        labels = np.arange(16).reshape(4, 4)
        np.testing.assert_array_equal(add_mask_noise(labels, 0.0, rng), labels)

    def test_noisy_dataset_keeps_clean_ground_truth(self):
        ds = generate(small_spec(mask_noise=0.5))
        clean = generate(small_spec())
        assert all(np.array_equal(a.labels, b.labels) for a, b in zip(ds.gt_masks, clean.gt_masks))
        assert any(not np.array_equal(a.labels, b.labels) for a, b in zip(ds.masks, ds.gt_masks))


class TestWriteDataset:
    """On-disk layout read back by the segment command."""

    def test_layout(self, tmp_path, synth_cache):
        ds = synth_cache(small_spec(scenario="occluder"))
        root = write_dataset(ds, tmp_path / "occ")
        scene = load_scene(root / "scene.g4ds")
        assert np.array_equal(scene.means, ds.scene.means)
        cams = load_cameras(root / "cameras.json", scene.timestamp_count)
        assert len(cams) == len(ds.cameras)
        mask = load_mask(root / "masks" / "0001.pgm", timestamp=cams[1].timestamp)
        np.testing.assert_array_equal(mask.labels, ds.masks[1].labels)
        gt = load_mask(root / "gt" / "0.pgm")
        assert set(np.unique(gt.labels)) <= {0, 1}
        assert np.load(root / "gt_assignment.npy").shape == ds.gt_assignment.shape
        meta = json.loads((root / "synth.json").read_text())
        assert meta["scenario"] == "occluder"
        assert meta["gaussian_count"] == ds.scene.gaussian_count
        assert isinstance(ds.masks[0], InstanceMask)
