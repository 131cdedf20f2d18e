#!/usr/bin/env python3
"""
Ablation table on synthetic scenarios.

Runs each pipeline variant on freshly generated datasets and scores the
rendered target masks against ground truth:

  full          temporal IGIT + range control (tau = 0.5)
  wo_ts         one segment over all frames + range control
  wo_rrc        temporal IGIT, no range control
  wo_ts_rrc     a single tracing pass, no temporal segments, no range control
  tau_<x>       full pipeline with merge threshold x (one row per --taus value)

Usage:
    python scripts/run_ablation.py --out ablation.csv
    python scripts/run_ablation.py --scenarios boundary_stress identity_flip --taus 0.3 0.7
"""
from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

# Add the repository root to sys.path so the pipeline modules import
_REPO_ROOT = Path(__file__).resolve().parent.parent
if str(_REPO_ROOT) not in sys.path:
    sys.path.insert(0, str(_REPO_ROOT))

from evalsuite import binarize_render, evaluate_run  # noqa: E402
from scene_model import Segment4DError  # noqa: E402
from segment4d import PipelineConfig, dataset_from_synth, render_frames, run_pipeline  # noqa: E402
from synth import SynthSpec, generate  # noqa: E402

DEFAULT_SCENARIOS = ["boundary_stress", "identity_flip"]
DEFAULT_TAUS = [0.3, 0.7]

VARIANTS = {
    "full": {},
    "wo_ts": {"disable_temporal": True},
    "wo_rrc": {"disable_rrc": True},
    "wo_ts_rrc": {"disable_temporal": True, "disable_rrc": True, "igit_max_iters": 1},
}

CSV_FIELDS = ["variant", "scenario", "miou", "macc"]


def variant_configs(base: PipelineConfig, taus: list[float]) -> dict[str, PipelineConfig]:
    configs = {name: replace(base, **changes) for name, changes in VARIANTS.items()}
    for tau in taus:
        configs[f"tau_{tau:g}"] = replace(base, tau=tau)
    return configs


def run_ablation(specs: list[SynthSpec], taus: list[float] | None = None, *,
                 base: PipelineConfig | None = None) -> list[dict]:
    """One row per (variant, scenario) plus an 'all' row per variant with the mean."""
    base = base or PipelineConfig()
    configs = variant_configs(base, DEFAULT_TAUS if taus is None else taus)
    datasets = {spec.scenario: dataset_from_synth(generate(spec, threads=base.threads))
                for spec in specs}
    rows = []
    for name, config in configs.items():
        scores = []
        for scenario, dataset in datasets.items():
            result = run_pipeline(config, dataset)
            renders = render_frames(dataset, result, config.k0, threads=config.threads)
            pred = {t: binarize_render(out) for t, out in renders.items()}
            report = evaluate_run(pred, dataset.gt)
            scores.append((report.miou, report.macc))
            rows.append({"variant": name, "scenario": scenario,
                         "miou": report.miou, "macc": report.macc})
            print(f"[EVAL] {name:<10s} {scenario:<20s} mIoU {report.miou:.4f}  mAcc {report.macc:.4f}")
        rows.append({"variant": name, "scenario": "all",
                     "miou": float(np.mean([s[0] for s in scores])),
                     "macc": float(np.mean([s[1] for s in scores]))})
    return rows


def write_table(rows: list[dict], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def build_parser() -> argparse.ArgumentParser:
    defaults = SynthSpec()
    parser = argparse.ArgumentParser(
        description="Compare pipeline variants on synthetic scenarios.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--scenarios", nargs="+", default=DEFAULT_SCENARIOS)
    parser.add_argument("--taus", nargs="*", type=float, default=DEFAULT_TAUS,
                        help="Extra merge thresholds for the tau sweep.")
    parser.add_argument("--n", type=int, default=defaults.n_per_object, help="Gaussians per object.")
    parser.add_argument("--frames", type=int, default=defaults.frames)
    parser.add_argument("--views", type=int, default=defaults.views_per_frame)
    parser.add_argument("--size", type=int, default=defaults.image_size)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--iters", type=int, default=None,
                        help="IGIT and RRC iteration cap (default 20).")
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--out", default="ablation.csv", help="CSV output path.")
    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point. Returns exit code (0 = success, 1 = error)."""
    args = build_parser().parse_args(argv)
    specs = [SynthSpec(scenario=s, n_per_object=args.n, frames=args.frames,
                       views_per_frame=args.views, image_size=args.size, seed=args.seed)
             for s in args.scenarios]
    base = PipelineConfig()
    if args.iters is not None:
        base = replace(base, igit_max_iters=args.iters, rrc_max_iters=args.iters)
    if args.threads is not None:
        base = replace(base, threads=args.threads)
    try:
        rows = run_ablation(specs, args.taus, base=base)
        write_table(rows, args.out)
    except (Segment4DError, OSError) as e:
        print(f"[ERROR] ablation: {e}")
        return 1
    print(f"[EVAL] Wrote {len(rows)} row(s) to {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
