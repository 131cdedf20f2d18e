"""
Tests for scripts/run_ablation.py and scripts/benchmark_iterations.py.

Pipeline runs are real but tiny; timing uses a fake clock so the
benchmark arithmetic is exact. Tests marked slow run at benchmark scale
with the real clock.
"""
from __future__ import annotations

import csv
import os
import sys
import time
from itertools import count
from unittest.mock import patch

import pytest

# Ensure the workspace root and scripts directory are importable
WORKSPACE_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
SCRIPTS_DIR = os.path.dirname(os.path.abspath(__file__))
sys.path.insert(0, WORKSPACE_ROOT)
sys.path.insert(0, SCRIPTS_DIR)

import benchmark_iterations  # noqa: E402
import run_ablation  # noqa: E402
from segment4d import PipelineConfig, dataset_from_synth, render_frames, run_pipeline  # noqa: E402
from synth import SynthSpec, generate  # noqa: E402

TINY = dict(n_per_object=16, frames=2, views_per_frame=1, image_size=32)


def fake_clock(step: float = 2.0):
    ticks = count()
    return lambda: next(ticks) * step


# ---------------------------------------------------------------------------
# run_ablation
# ---------------------------------------------------------------------------

class TestVariantConfigs:
    """Variant table construction."""

    def test_variants_and_tau_sweep(self):
        configs = run_ablation.variant_configs(PipelineConfig(), [0.3, 0.7])
        assert list(configs) == ["full", "wo_ts", "wo_rrc", "wo_ts_rrc", "tau_0.3", "tau_0.7"]
        assert configs["wo_ts"].disable_temporal and not configs["wo_ts"].disable_rrc
        assert configs["wo_rrc"].disable_rrc and not configs["wo_rrc"].disable_temporal
        assert configs["wo_ts_rrc"].igit_max_iters == 1
        assert configs["tau_0.7"].tau == 0.7

    def test_base_settings_carry_over(self):
        base = PipelineConfig(rrc_max_iters=3)
        configs = run_ablation.variant_configs(base, [])
        assert all(c.rrc_max_iters == 3 for c in configs.values())


class TestRunAblation:
    """Rows and CSV output on a tiny scene."""

    def test_rows_cover_every_variant(self, capsys):
        spec = SynthSpec(scenario="static_two_objects", **TINY)
        rows = run_ablation.run_ablation([spec], [0.4], base=PipelineConfig(rrc_max_iters=3))
        variants = {r["variant"] for r in rows}
        assert variants == {"full", "wo_ts", "wo_rrc", "wo_ts_rrc", "tau_0.4"}
        assert len(rows) == 2 * len(variants)
        for row in rows:
            assert 0.0 <= row["miou"] <= 1.0
        assert "[EVAL]" in capsys.readouterr().out

    def test_all_row_is_mean(self):
        specs = [SynthSpec(scenario=s, **TINY) for s in ("static_two_objects", "boundary_stress")]
        rows = run_ablation.run_ablation(specs, [], base=PipelineConfig(rrc_max_iters=2))
        full = [r for r in rows if r["variant"] == "full"]
        per_scene = [r["miou"] for r in full if r["scenario"] != "all"]
        mean_row = next(r for r in full if r["scenario"] == "all")
        assert mean_row["miou"] == pytest.approx(sum(per_scene) / len(per_scene))

    def test_write_table(self, tmp_path):
        rows = [{"variant": "full", "scenario": "all", "miou": 0.5, "macc": 0.75}]
        path = tmp_path / "ablation.csv"
        run_ablation.write_table(rows, path)
        with open(path, newline="") as f:
            read = list(csv.DictReader(f))
        assert read == [{"variant": "full", "scenario": "all", "miou": "0.5", "macc": "0.75"}]

    def test_main_writes_csv(self, tmp_path):
        out = tmp_path / "table.csv"
        code = run_ablation.main(["--scenarios", "static_two_objects", "--taus",
                                  "--n", "16", "--frames", "2", "--views", "1", "--size", "32",
                                  "--iters", "2", "--out", str(out)])
        assert code == 0
        assert out.exists()

    def test_main_reports_errors(self, tmp_path, capsys):
        code = run_ablation.main(["--scenarios", "no_such_scene", "--out", str(tmp_path / "x.csv")])
        assert code == 1
        assert "[ERROR]" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# benchmark_iterations
# ---------------------------------------------------------------------------

class TestBenchmark:
    """Per-cap timing rows."""

    def test_rows_with_fake_clock(self):
        spec = SynthSpec(scenario="static_two_objects", **TINY)
        rows = benchmark_iterations.benchmark(spec, [1, 2], timer=fake_clock(2.0))
        assert [r["iters"] for r in rows] == [1, 2]
        # every run is bracketed by two consecutive ticks
        assert all(r["seconds"] == 2.0 for r in rows)
        for row in rows:
            assert 1 <= row["igit_iterations"] <= row["iters"]
            assert row["rrc_iterations"] <= row["iters"]

    def test_linearity(self):
        rows = [{"iters": 1, "seconds": 2.0}, {"iters": 4, "seconds": 4.0}]
        assert benchmark_iterations.linearity(rows) == [1.0, 0.5]
        assert benchmark_iterations.linearity([]) == []

    def test_main_prints_table(self, capsys):
        with patch.object(benchmark_iterations, "benchmark",
                          return_value=[{"iters": 1, "seconds": 1.0, "igit_iterations": 1,
                                         "rrc_iterations": 1, "seconds_per_sweep": 0.5}]):
            assert benchmark_iterations.main(["--iters", "1"]) == 0
        assert "s/sweep" in capsys.readouterr().out


# ---------------------------------------------------------------------------
# Benchmark-scale checks
# ---------------------------------------------------------------------------

class TestAblationOrdering:
    """Each stage removed from the full pipeline costs accuracy."""

    @pytest.mark.slow
    @pytest.mark.timeout(3600)
    def test_full_beats_reduced_variants(self):
        specs = [SynthSpec(scenario=s, n_per_object=100, image_size=64)
                 for s in ("boundary_stress", "identity_flip")]
        rows = run_ablation.run_ablation(specs, [])
        combined = {r["variant"]: r["miou"] for r in rows if r["scenario"] == "all"}
        assert combined["full"] > combined["wo_rrc"]
        assert combined["full"] > combined["wo_ts_rrc"]


class TestRuntimeAtScale:
    """50k Gaussians, 60 frames at 400 x 400, five IGIT and five RRC iterations."""

    @pytest.mark.slow
    @pytest.mark.timeout(3600)
    def test_full_pipeline_under_ten_minutes(self, capsys):
        spec = SynthSpec(scenario="static_two_objects", n_per_object=25000, frames=60,
                         views_per_frame=1, image_size=400)
        dataset = dataset_from_synth(generate(spec))
        assert dataset.scene.gaussian_count == 50000
        config = PipelineConfig(igit_max_iters=5, rrc_max_iters=5)
        start = time.perf_counter()
        result = run_pipeline(config, dataset)
        renders = render_frames(dataset, result, config.k0)
        seconds = time.perf_counter() - start
        with capsys.disabled():
            print(f"\n[BENCH] {spec.n_per_object * 2} Gaussians x {spec.frames} frames: {seconds:.1f}s "
                  f"({config.threads} thread(s))")
        assert len(renders) == spec.frames
        assert seconds < 600
