#!/usr/bin/env python3
"""
Runtime of the pipeline against the iteration cap.

Generates one synthetic dataset, then times run_pipeline with IGIT and RRC
both capped at each requested count. Scenes that converge before the cap
stop early, so the report also lists the iterations actually used.

Usage:
    python scripts/benchmark_iterations.py
    python scripts/benchmark_iterations.py --iters 1 3 5 10 --n 400 --size 128
    python scripts/benchmark_iterations.py --iters 5 --n 25000 --frames 60 --views 1 --size 400
"""
from __future__ import annotations

import argparse
import sys
import time
from dataclasses import replace
from pathlib import Path

_REPO_ROOT = Path(__file__).resolve().parent.parent
if str(_REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(_REPO_ROOT))

from scene_model import Segment4DError  # noqa: E402
from segment4d import PipelineConfig, dataset_from_synth, run_pipeline  # noqa: E402
from synth import SCENARIOS, SynthSpec, generate  # noqa: E402

DEFAULT_ITERS = [1, 3, 5, 10]


def benchmark(spec: SynthSpec, iteration_counts: list[int], *,
              base: PipelineConfig | None = None, timer=time.perf_counter) -> list[dict]:
    """One row per iteration cap: seconds, sweeps used and seconds per sweep."""
    base = base or PipelineConfig()
    dataset = dataset_from_synth(generate(spec, threads=base.threads))
    rows = []
    for iters in iteration_counts:
        config = replace(base, igit_max_iters=iters, rrc_max_iters=iters)
        start = timer()
        result = run_pipeline(config, dataset)
        seconds = timer() - start
        rrc_steps = 0 if result.ranges is None else result.ranges.iterations
        sweeps = result.segments.iterations + rrc_steps
        rows.append({
            "iters": iters,
            "seconds": seconds,
            "igit_iterations": result.segments.iterations,
            "rrc_iterations": rrc_steps,
            "seconds_per_sweep": seconds / max(sweeps, 1),
        })
    return rows


def linearity(rows: list[dict]) -> list[float]:
    """Measured time over the time predicted linearly from the first row."""
    if not rows:
        return []
    unit = rows[0]["seconds"] / rows[0]["iters"]
    return [row["seconds"] / (unit * row["iters"]) if unit > 0 else 0.0 for row in rows]


def build_parser() -> argparse.ArgumentParser:
    defaults = SynthSpec()
    parser = argparse.ArgumentParser(description="Time the pipeline per iteration cap.")
    parser.add_argument("--iters", nargs="+", type=int, default=DEFAULT_ITERS)
    parser.add_argument("--scenario", choices=SCENARIOS, default="boundary_stress")
    parser.add_argument("--n", type=int, default=defaults.n_per_object)
    parser.add_argument("--frames", type=int, default=defaults.frames)
    parser.add_argument("--views", type=int, default=defaults.views_per_frame)
    parser.add_argument("--size", type=int, default=defaults.image_size)
    parser.add_argument("--threads", type=int, default=None)
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point. Returns exit code (0 = success, 1 = error)."""
    args = build_parser().parse_args(argv)
    spec = SynthSpec(scenario=args.scenario, n_per_object=args.n, frames=args.frames,
                     views_per_frame=args.views, image_size=args.size)
    base = PipelineConfig()
    if args.threads is not None:
        base = replace(base, threads=args.threads)
    try:
        rows = benchmark(spec, args.iters, base=base)
    except Segment4DError as e:
        print(f"[ERROR] benchmark: {e}")
        return 1
    print(f"{'iters':>5s} {'seconds':>9s} {'igit':>5s} {'rrc':>5s} {'s/sweep':>9s} {'vs linear':>9s}")
    for row, ratio in zip(rows, linearity(rows)):
        print(f"{row['iters']:>5d} {row['seconds']:>9.2f} {row['igit_iterations']:>5d} "
              f"{row['rrc_iterations']:>5d} {row['seconds_per_sweep']:>9.3f} {ratio:>9.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
