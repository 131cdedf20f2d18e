#!/usr/bin/env python3
"""
segment4d -- lift per-frame 2D instance masks into a segmented dynamic Gaussian scene.

Pipeline: temporal IGIT (mask extraction + segment merging), then rendering
range control, then per-frame rendering of the target object.

Usage:
    python segment4d.py synth --scenario occluder --out data/occluder
    python segment4d.py segment --data data/occluder --out out/occluder
    python segment4d.py segment --config run.json --k0 2 --no-rrc
    python segment4d.py eval --pred out/occluder/masks --gt data/occluder/gt
    python segment4d.py render --data data/occluder --run out/occluder --timestamp 3
    python segment4d.py trace --data data/occluder --timestamp 0 --out trace/

A dataset directory (--data) holds scene.g4ds, cameras.json, masks/NNNN.pgm
(one per camera, by view index) and optionally gt/{t}.pgm. A JSON config
(--config) names the same paths explicitly plus any run parameters; relative
paths resolve against the config file's directory.

Outputs of `segment`:
    segments.json, pointclouds/seg_{s}.ply, ranges.g4dr, masks/{t}.pgm,
    rgb/{t}.ppm, metrics.csv (when ground truth exists), manifest.json

Environment:
    SEGMENT4D_THREADS    default worker threads (default: CPU count)
    SEGMENT4D_LOG_LEVEL  log level (default: WARNING)
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import re
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import get_type_hints

import numpy as np

from evalsuite import MetricsReport, binarize_render, evaluate_run, write_metrics_csv
from igit import DEFAULT_MAX_ITERS, accumulate_segment, downsample_views, extract, normalize
from rasterizer import DEFAULT_THREADS, RenderOutput
from rrc import RangeThresholds, load_ranges, render_segmented, rrc_run, save_ranges
from scene_model import (
    CameraView,
    DynamicScene,
    InstanceMask,
    Segment4DError,
    StageError,
    ValidationError,
    instance_count,
    load_cameras,
    load_mask,
    load_scene,
    save_pointcloud,
    validate_pairing,
    write_mask,
    write_ppm,
)
from synth import SCENARIOS, SynthDataset, SynthSpec, generate, write_dataset
from temporal import DEFAULT_TAU, TemporalSegments, single_segment_run, temporal_igit_run

logger = logging.getLogger(__name__)

LOG_LEVEL = os.environ.get("SEGMENT4D_LOG_LEVEL", "WARNING")

FRAME_FILE = re.compile(r"^(\d+)\.pgm$")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def _typed_value(name: str, value, hint):
    """*value* checked against a config field's annotation; ints are accepted for floats."""
    if hint is bool:
        ok = isinstance(value, bool)
    elif hint is int:
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif hint is float:
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    else:
        ok = isinstance(value, hint)
    if not ok:
        expected = getattr(hint, "__name__", str(hint))
        raise ValidationError(f"config key {name!r} must be {expected}, got {value!r}")
    return value


@dataclass
class PipelineConfig:
    scene: str = ""
    cameras: str = ""
    masks: str = ""
    gt: str | None = None
    k0: int = 1
    igit_max_iters: int = DEFAULT_MAX_ITERS
    rrc_max_iters: int = DEFAULT_MAX_ITERS
    tau: float = DEFAULT_TAU
    disable_temporal: bool = False
    disable_rrc: bool = False
    output_dir: str = "out"
    threads: int = DEFAULT_THREADS
    view_stride: int = 1

    @classmethod
    def from_dict(cls, data: dict, base_dir: str | Path | None = None) -> "PipelineConfig":
        if not isinstance(data, dict):
            raise ValidationError(f"config must be a JSON object, got {type(data).__name__}")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValidationError(f"unknown config keys: {unknown}")
        hints = get_type_hints(cls)
        config = cls(**{name: _typed_value(name, value, hints[name]) for name, value in data.items()})
        if base_dir is not None:
            base = Path(base_dir)
            for name in ("scene", "cameras", "masks", "gt", "output_dir"):
                value = getattr(config, name)
                if value and not Path(value).is_absolute():
                    setattr(config, name, str(base / value))
        return config

    @classmethod
    def from_json(cls, path: str | Path) -> "PipelineConfig":
        path = Path(path)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as e:
            raise ValidationError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(data, base_dir=path.parent)

    @classmethod
    def for_dataset(cls, root: str | Path, **overrides) -> "PipelineConfig":
        """Config for a directory laid out like `segment4d.py synth` output."""
        root = Path(root)
        gt = root / "gt"
        return cls(
            scene=str(root / "scene.g4ds"),
            cameras=str(root / "cameras.json"),
            masks=str(root / "masks"),
            gt=str(gt) if gt.is_dir() else None,
            **overrides,
        )

    def validate(self, check_paths: bool = True) -> None:
        if self.igit_max_iters < 1 or self.rrc_max_iters < 1:
            raise ValidationError("iteration counts must be >= 1")
        if not 0 < self.tau < 1:
            raise ValidationError(f"tau must lie in (0, 1), got {self.tau}")
        if self.k0 < 1:
            raise ValidationError(f"target instance must be >= 1, got {self.k0}")
        if self.threads < 1:
            raise ValidationError("threads must be >= 1")
        if self.view_stride < 1:
            raise ValidationError("view_stride must be >= 1")
        if check_paths:
            for name in ("scene", "cameras", "masks"):
                value = getattr(self, name)
                if not value or not Path(value).exists():
                    raise ValidationError(f"{name} path does not exist: {value!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# Datasets
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class Dataset:
    scene: DynamicScene
    cameras: list[CameraView]
    masks: list[InstanceMask]
    gt: dict[int, np.ndarray] | None = None

    @property
    def views(self) -> list[tuple[CameraView, InstanceMask]]:
        return list(zip(self.cameras, self.masks))

    @property
    def num_instances(self) -> int:
        return instance_count(self.masks)

    def eval_cameras(self) -> list[CameraView]:
        """Lowest view_id camera of every timestamp."""
        first: dict[int, CameraView] = {}
        for cam in sorted(self.cameras, key=lambda c: c.view_id):
            first.setdefault(cam.timestamp, cam)
        return [first[t] for t in sorted(first)]


def read_frame_dir(path: str | Path) -> dict[int, np.ndarray]:
    """{t: labels} for every {t}.pgm in *path*."""
    path = Path(path)
    if not path.is_dir():
        raise ValidationError(f"not a directory: {path}")
    frames = {}
    for entry in sorted(path.iterdir()):
        match = FRAME_FILE.match(entry.name)
        if match:
            t = int(match.group(1))
            frames[t] = load_mask(entry, timestamp=t).labels
    return frames


def load_dataset(config: PipelineConfig) -> Dataset:
    scene = load_scene(config.scene)
    cameras = load_cameras(config.cameras, scene.timestamp_count)
    masks_dir = Path(config.masks)
    masks = []
    for cam in cameras:
        path = masks_dir / f"{cam.view_id:04d}.pgm"
        if not path.exists():
            raise ValidationError(f"missing mask for view {cam.view_id}: {path}")
        masks.append(load_mask(path, timestamp=cam.timestamp))
    validate_pairing(cameras, masks, scene.timestamp_count)
    gt = None
    if config.gt and Path(config.gt).is_dir():
        gt = {t: labels != 0 for t, labels in read_frame_dir(config.gt).items()}
    return Dataset(scene, cameras, masks, gt)


def dataset_from_synth(ds: SynthDataset) -> Dataset:
    return Dataset(ds.scene, list(ds.cameras), list(ds.masks), ds.gt_binary())


# ---------------------------------------------------------------------------
# Pipeline
# ---------------------------------------------------------------------------

@dataclass(eq=False)
class PipelineResult:
    segments: TemporalSegments
    ranges: RangeThresholds | None
    num_instances: int
    training_views: int
    stage_seconds: dict[str, float] = field(default_factory=dict)
    igit_history: list = field(default_factory=list)
    rrc_history: list = field(default_factory=list)


def _stage(name: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except StageError:
        raise
    except (Segment4DError, OSError) as e:
        raise StageError(name, e) from e


def run_pipeline(config: PipelineConfig, dataset: Dataset) -> PipelineResult:
    """Mask extraction (temporal IGIT or one segment) followed by range control."""
    config.validate(check_paths=False)
    k = dataset.num_instances
    if not 1 <= config.k0 <= k:
        raise StageError("igit", ValidationError(f"target instance {config.k0} outside [1, {k}]"))
    if not any((m.labels == config.k0).any() for m in dataset.masks):
        raise StageError("igit", ValidationError(f"target instance {config.k0} appears in no mask"))

    views = downsample_views(dataset.views, config.view_stride)
    scene = dataset.scene
    timings: dict[str, float] = {}
    igit_history: list = []
    rrc_history: list = []

    start = time.perf_counter()
    if config.disable_temporal:
        segments = _stage("igit", single_segment_run, scene, views, config.k0,
                          config.igit_max_iters, num_instances=k,
                          history=igit_history, threads=config.threads)
    else:
        segments = _stage("igit", temporal_igit_run, scene, views, config.k0,
                          config.igit_max_iters, config.tau, num_instances=k,
                          history=igit_history, threads=config.threads)
    timings["igit"] = time.perf_counter() - start

    ranges = None
    start = time.perf_counter()
    if not config.disable_rrc:
        ranges = _stage("rrc", rrc_run, scene, views, segments, config.k0,
                        config.rrc_max_iters, num_instances=k,
                        history=rrc_history, threads=config.threads)
    timings["rrc"] = time.perf_counter() - start

    return PipelineResult(segments, ranges, k, len(views), timings, igit_history, rrc_history)


def render_frames(dataset: Dataset, result: PipelineResult, k0: int, *,
                  threads: int | None = None,
                  timestamps: list[int] | None = None) -> dict[int, RenderOutput]:
    """Render the target once per timestamp from its lowest-id camera."""
    renders = {}
    for cam in dataset.eval_cameras():
        if timestamps is not None and cam.timestamp not in timestamps:
            continue
        renders[cam.timestamp] = _stage(
            "render", render_segmented, dataset.scene, cam, result.segments,
            result.ranges, k0, threads=threads,
        )
    return renders


def write_renders(renders: dict[int, RenderOutput], out_dir: Path) -> None:
    (out_dir / "masks").mkdir(parents=True, exist_ok=True)
    (out_dir / "rgb").mkdir(parents=True, exist_ok=True)
    for t, out in sorted(renders.items()):
        write_mask(binarize_render(out).astype(np.uint16), out_dir / "masks" / f"{t}.pgm")
        write_ppm(out.rgb, out_dir / "rgb" / f"{t}.ppm")


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True), encoding="utf-8")


def run_segment(config: PipelineConfig) -> dict:
    """Load, segment, render and write every artifact; returns the manifest."""
    wall_start = time.perf_counter()
    config.validate()
    out_dir = Path(config.output_dir)

    start = time.perf_counter()
    dataset = _stage("load", load_dataset, config)
    load_seconds = time.perf_counter() - start

    result = run_pipeline(config, dataset)

    start = time.perf_counter()
    renders = render_frames(dataset, result, config.k0, threads=config.threads)
    render_seconds = time.perf_counter() - start

    start = time.perf_counter()
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "segments.json", result.segments.to_json(config.k0))
    (out_dir / "pointclouds").mkdir(exist_ok=True)
    for s, ((seg_start, _), mask) in enumerate(zip(result.segments.ranges(), result.segments.masks)):
        save_pointcloud(dataset.scene, mask.member, seg_start, out_dir / "pointclouds" / f"seg_{s}.ply")
    if result.ranges is not None:
        save_ranges(result.ranges, out_dir / "ranges.g4dr")
    write_renders(renders, out_dir)
    report: MetricsReport | None = None
    if dataset.gt is not None:
        pred = {t: binarize_render(out) for t, out in renders.items()}
        report = _stage("eval", evaluate_run, pred, dataset.gt)
        write_metrics_csv(report, out_dir / "metrics.csv")
    write_seconds = time.perf_counter() - start

    stage_seconds = {"load": load_seconds, **result.stage_seconds,
                     "render": render_seconds, "write": write_seconds}
    manifest = {
        "config": config.to_dict(),
        "gaussian_count": dataset.scene.gaussian_count,
        "timestamp_count": dataset.scene.timestamp_count,
        "rendered_frames": len(renders),
        "views": len(dataset.cameras),
        "training_views": result.training_views,
        "num_instances": result.num_instances,
        "segments": result.segments.count,
        "igit_iterations": result.segments.iterations,
        "rrc_iterations": None if result.ranges is None else result.ranges.iterations,
        "rrc_binarized_fraction": None if result.ranges is None else result.ranges.binarized_fraction(),
        "igit_history": result.igit_history,
        "rrc_history": result.rrc_history,
        "metrics": None if report is None else {"miou": report.miou, "macc": report.macc},
        "stage_seconds": stage_seconds,
        "total_seconds": time.perf_counter() - wall_start,
    }
    _write_json(out_dir / "manifest.json", manifest)
    return manifest


def run_eval(pred_dir: str | Path, gt_dir: str | Path, *, target: int | None = None,
             foreground_acc: bool = False) -> MetricsReport:
    """Compare {t}.pgm masks; prediction is any nonzero label, gt is *target* (or nonzero)."""
    pred = {t: labels != 0 for t, labels in read_frame_dir(pred_dir).items()}
    gt_labels = read_frame_dir(gt_dir)
    if target is None:
        gt = {t: labels != 0 for t, labels in gt_labels.items()}
    else:
        gt = {t: labels == target for t, labels in gt_labels.items()}
    return evaluate_run(pred, gt, foreground_acc=foreground_acc)


# ---------------------------------------------------------------------------
# CLI sub-commands
# ---------------------------------------------------------------------------

def config_from_args(args: argparse.Namespace) -> PipelineConfig:
    """--config file or --data directory, then flag overrides."""
    if args.config:
        config = PipelineConfig.from_json(args.config)
    elif args.data:
        config = PipelineConfig.for_dataset(args.data)
    else:
        raise ValidationError("either --config or --data is required")
    overrides = {
        "k0": args.k0,
        "igit_max_iters": args.igit_iters,
        "rrc_max_iters": args.rrc_iters,
        "tau": args.tau,
        "threads": args.threads,
        "view_stride": args.view_stride,
        "output_dir": args.out,
    }
    for name, value in overrides.items():
        if value is not None:
            setattr(config, name, value)
    if args.no_temporal:
        config.disable_temporal = True
    if args.no_rrc:
        config.disable_rrc = True
    return config


def _fail(stage: str, exc: BaseException) -> int:
    if isinstance(exc, StageError):
        stage, exc = exc.stage, exc.cause
    print(f"[ERROR] {stage}: {exc}")
    return 1


def cmd_segment(args: argparse.Namespace) -> int:
    try:
        config = config_from_args(args)
        print(f"[IGIT] Segmenting instance {config.k0} "
              f"({'single segment' if config.disable_temporal else f'tau={config.tau}'})...")
        manifest = run_segment(config)
    except (Segment4DError, OSError) as e:
        return _fail("segment", e)

    print(f"[IGIT] {manifest['segments']} segment(s) after {manifest['igit_iterations']} iteration(s)")
    if manifest["rrc_iterations"] is None:
        print("[RRC] Skipped (--no-rrc)")
    else:
        print(f"[RRC] {manifest['rrc_iterations']} step(s), "
              f"{manifest['rrc_binarized_fraction']:.1%} of thresholds binarized")
    print(f"[RENDER] Wrote {manifest['rendered_frames']} frame(s) to {config.output_dir}")
    if manifest["metrics"] is not None:
        print(f"[EVAL] mIoU {manifest['metrics']['miou']:.4f}  mAcc {manifest['metrics']['macc']:.4f}")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    try:
        report = run_eval(args.pred, args.gt, target=args.target,
                          foreground_acc=args.foreground_acc)
        out = Path(args.out) if args.out else Path(args.pred).parent / "metrics.csv"
        write_metrics_csv(report, out)
    except (Segment4DError, OSError) as e:
        return _fail("eval", e)
    for fm in report.per_frame:
        print(f"[EVAL] t={fm.timestamp:<4d} IoU {fm.iou:.4f}  Acc {fm.acc:.4f}")
    print(f"[EVAL] mIoU {report.miou:.4f}  mAcc {report.macc:.4f}  -> {out}")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        scenario=args.scenario, n_per_object=args.n, frames=args.frames,
        views_per_frame=args.views, image_size=args.size, seed=args.seed,
        mask_noise=args.noise,
    )
    try:
        ds = generate(spec, threads=args.threads)
        root = write_dataset(ds, args.out)
    except (Segment4DError, OSError) as e:
        return _fail("synth", e)
    print(f"[SYNTH] {spec.scenario}: N={ds.scene.gaussian_count}, T={ds.scene.timestamp_count}, "
          f"{len(ds.cameras)} view(s) -> {root}")
    return 0


def cmd_render(args: argparse.Namespace) -> int:
    try:
        config = config_from_args(args)
        config.validate()
        run_dir = Path(args.run)
        scene = load_scene(config.scene)
        cameras = load_cameras(config.cameras, scene.timestamp_count)
        data = json.loads((run_dir / "segments.json").read_text(encoding="utf-8"))
        segments = TemporalSegments.from_json(data, scene.gaussian_count)
        k0 = data.get("target") or config.k0
        ranges_path = run_dir / "ranges.g4dr"
        ranges = load_ranges(ranges_path) if ranges_path.exists() else None
        result = PipelineResult(segments, ranges, 0, 0)
        dataset = Dataset(scene, cameras, [])
        stamps = None if args.timestamp is None else [args.timestamp]
        renders = render_frames(dataset, result, k0, threads=config.threads, timestamps=stamps)
        if not renders:
            raise ValidationError(f"no camera observes timestamp {args.timestamp}")
        out_dir = Path(args.out) if args.out else run_dir
        write_renders(renders, out_dir)
    except (Segment4DError, OSError, KeyError) as e:
        return _fail("render", e)
    print(f"[RENDER] Wrote {len(renders)} frame(s) to {out_dir}")
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    try:
        config = config_from_args(args)
        config.validate()
        dataset = load_dataset(config)
        views = dataset.views
        if args.timestamp is not None:
            views = [v for v in views if v[0].timestamp == args.timestamp]
        if not views:
            raise ValidationError(f"no views at timestamp {args.timestamp}")
        weights = accumulate_segment(dataset.scene, views, num_instances=dataset.num_instances,
                                     threads=config.threads)
        probs = normalize(weights)
        mask = extract(probs, config.k0)
        out_dir = Path(args.out) if args.out else Path(config.output_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        np.save(out_dir / "trace_W.npy", weights.values)
        np.save(out_dir / "trace_P.npy", probs.values)
    except (Segment4DError, OSError) as e:
        return _fail("trace", e)
    print(f"[IGIT] One pass over {len(views)} view(s): {mask.count} of "
          f"{dataset.scene.gaussian_count} Gaussians assigned to instance {config.k0}")
    print(f"[IGIT] Wrote trace_W.npy and trace_P.npy to {out_dir}")
    return 0


# ---------------------------------------------------------------------------
# CLI argument parser
# ---------------------------------------------------------------------------

def _add_run_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", help="JSON run configuration.")
    src.add_argument("--data", help="Dataset directory (scene.g4ds, cameras.json, masks/, gt/).")
    p.add_argument("--k0", type=int, default=None, help="Target instance ID (default 1).")
    p.add_argument("--igit-iters", type=int, default=None, help="Max IGIT iterations (default 20).")
    p.add_argument("--rrc-iters", type=int, default=None, help="Max RRC iterations (default 20).")
    p.add_argument("--tau", type=float, default=None, help="Segment merge IoU threshold (default 0.5).")
    p.add_argument("--no-temporal", action="store_true", help="One segment over all frames.")
    p.add_argument("--no-rrc", action="store_true", help="Skip rendering range control.")
    p.add_argument("--threads", type=int, default=None, help="Worker threads for tile parallelism.")
    p.add_argument("--view-stride", type=int, default=None, help="Use every n-th training view.")
    p.add_argument("--out", default=None, help="Output directory.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description="Segment objects in dynamic Gaussian scenes from 2D instance masks.",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=(
            "Examples:\n"
            "  python segment4d.py synth --scenario identity_flip --out data/flip\n"
            "  python segment4d.py segment --data data/flip --out out/flip\n"
            "  python segment4d.py eval --pred out/flip/masks --gt data/flip/gt\n"
        ),
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="Log at DEBUG level.")
    subparsers = parser.add_subparsers(dest="command", help="Available commands")

    segment_p = subparsers.add_parser("segment", help="Run the full pipeline and write artifacts.")
    _add_run_args(segment_p)

    eval_p = subparsers.add_parser("eval", help="Score predicted masks against ground truth.")
    eval_p.add_argument("--pred", required=True, help="Directory of predicted {t}.pgm masks.")
    eval_p.add_argument("--gt", required=True, help="Directory of ground-truth {t}.pgm masks.")
    eval_p.add_argument("--target", type=int, default=None,
                        help="Instance ID to compare against (default: any nonzero label).")
    eval_p.add_argument("--foreground-acc", action="store_true",
                        help="Report accuracy over ground-truth foreground pixels only.")
    eval_p.add_argument("--out", default=None, help="CSV path (default: next to --pred).")

    synth_defaults = SynthSpec()
    synth_p = subparsers.add_parser("synth", help="Generate a synthetic dataset.")
    synth_p.add_argument("--scenario", choices=SCENARIOS, default="static_two_objects")
    synth_p.add_argument("--n", type=int, default=synth_defaults.n_per_object,
                         help="Gaussians per object.")
    synth_p.add_argument("--frames", type=int, default=synth_defaults.frames)
    synth_p.add_argument("--views", type=int, default=synth_defaults.views_per_frame,
                         help="Views per frame.")
    synth_p.add_argument("--size", type=int, default=synth_defaults.image_size,
                         help="Image width and height.")
    synth_p.add_argument("--seed", type=int, default=0)
    synth_p.add_argument("--noise", type=float, default=0.0, help="Boundary label flip probability.")
    synth_p.add_argument("--threads", type=int, default=None)
    synth_p.add_argument("--out", required=True, help="Dataset directory to write.")

    render_p = subparsers.add_parser("render", help="Re-render masks from a finished run.")
    _add_run_args(render_p)
    render_p.add_argument("--run", required=True, help="Output directory of a `segment` run.")
    render_p.add_argument("--timestamp", type=int, default=None, help="Only this frame.")

    trace_p = subparsers.add_parser("trace", help="Dump one tracing pass's W and P matrices.")
    _add_run_args(trace_p)
    trace_p.add_argument("--timestamp", type=int, default=None, help="Only views of this frame.")

    return parser


def main(argv: list[str] | None = None) -> int:
    """Entry point. Returns exit code (0 = success, 1 = error)."""
    parser = build_parser()
    args = parser.parse_args(argv)

    level = "DEBUG" if args.verbose else LOG_LEVEL.upper()
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")

    if not args.command:
        parser.print_help()
        return 0

    dispatch = {
        "segment": cmd_segment,
        "eval": cmd_eval,
        "synth": cmd_synth,
        "render": cmd_render,
        "trace": cmd_trace,
    }
    return dispatch[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
