"""``preprocess``: face crops + manifest from a video tree, or a synthetic dataset."""

from __future__ import annotations

import argparse
import logging
from pathlib import Path
from typing import List

from pydantic import ValidationError

from ..errors import ConfigError
from ..manifest import write_manifest
from ..preprocess import VideoJob, open_video, preprocess_videos
from ..schemas import UNKNOWN_SOURCE, DatasetManifest, PreprocessConfig, SyntheticSpec
from ..synthetic import default_suite, generate_synthetic_dataset, standard_splits
from . import deps

logger = logging.getLogger(__name__)

COMMAND = "preprocess"
VIDEO_SUFFIXES = {".mp4", ".avi", ".mov", ".mkv", ".webm"}


def add_parser(subparsers) -> argparse.ArgumentParser:
    p = subparsers.add_parser(COMMAND, help="build face-crop datasets and their manifests")
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--in", dest="input", type=deps.existing_dir,
                        help="video tree: real/<video>, fake/<generator>/<video>; a video is a file or a frame directory")
    source.add_argument("--synthetic", type=deps.existing_path, help="YAML/JSON SyntheticSpec document")
    source.add_argument("--suite", action="store_true", help="the default three-year synthetic suite")
    p.add_argument("--out", required=True, help="output directory for crops and manifests")
    p.add_argument("--name", help="dataset name (default: input directory name)")
    p.add_argument("--year", type=int, default=0, help="dataset year recorded on every video")
    p.add_argument("--split", choices=["train", "val", "test"], default="test", help="split recorded on every video")
    p.add_argument("--frames", type=int, help="PreprocessConfig.frames_per_video (default 32)")
    p.add_argument("--margin", type=float, help="PreprocessConfig.bbox_margin (default 1.3)")
    p.add_argument("--crop-size", type=int, help="PreprocessConfig.crop_size (default 256)")
    p.add_argument("--detector", help="PreprocessConfig.detector plug-in name (stub, mtcnn)")
    p.add_argument("--no-align", action="store_true", help="PreprocessConfig.alignment=false")
    p.add_argument("--format", choices=["png", "bmp"], help="PreprocessConfig.output_format")
    p.add_argument("--workers", type=int, default=1, help="parallel videos")
    p.set_defaults(handler=run)
    return p


def _config(args: argparse.Namespace) -> PreprocessConfig:
    fields = {
        "frames_per_video": args.frames,
        "bbox_margin": args.margin,
        "crop_size": args.crop_size,
        "detector": args.detector,
        "output_format": args.format,
    }
    data = {k: v for k, v in fields.items() if v is not None}
    if args.no_align:
        data["alignment"] = False
    try:
        return PreprocessConfig(**data)
    except ValidationError as exc:
        raise ConfigError(f"invalid preprocessing config: {exc}") from exc


def _videos(directory: Path) -> List[Path]:
    if not directory.is_dir():
        return []
    return sorted(p for p in directory.iterdir() if p.is_dir() or p.suffix.lower() in VIDEO_SUFFIXES)


def collect_jobs(root: Path, *, name: str, year: int, split: str) -> List[VideoJob]:
    """Jobs for ``root/real/*`` and ``root/fake/<generator>/*``.

    A fake named ``<source>_<anything>`` is linked to the real video ``<source>``
    when that exists, otherwise its source is unknown.
    """
    jobs: List[VideoJob] = []
    real_ids = {}
    for path in _videos(root / "real"):
        video_id = f"{name}/real/{path.stem}"
        real_ids[path.stem] = video_id
        jobs.append(VideoJob(video_id, "real", video_id, "real", split, name, year, open_video(path)))
    fake_root = root / "fake"
    generators = sorted(p for p in fake_root.iterdir() if p.is_dir()) if fake_root.is_dir() else []
    for gen_dir in generators:
        for path in _videos(gen_dir):
            source = real_ids.get(path.stem.split("_")[0], UNKNOWN_SOURCE)
            video_id = f"{name}/{gen_dir.name}/{path.stem}"
            jobs.append(VideoJob(video_id, "fake", source, gen_dir.name, split, name, year, open_video(path)))
    return jobs


def _summary(manifest: DatasetManifest) -> str:
    return (
        f"{manifest.name}: {len(manifest.reals)} real, {len(manifest.fakes)} fake videos, "
        f"{manifest.n_frames} frames, {len(manifest.excluded)} excluded"
    )


def _write_synthetic(spec: SyntheticSpec, out: Path) -> List[Path]:
    manifest = generate_synthetic_dataset(spec, out)
    paths = [write_manifest(manifest, out / f"{spec.name}.jsonl")]
    for split, part in standard_splits(manifest, spec).items():
        paths.append(write_manifest(part, out / f"{spec.name}-{split}.jsonl"))
    print(_summary(manifest))
    return paths


def run(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if args.synthetic or args.suite:
        if args.synthetic:
            try:
                specs = [SyntheticSpec.model_validate(deps.load_config_file(args.synthetic))]
            except ValidationError as exc:
                raise ConfigError(f"invalid synthetic spec: {exc}") from exc
        else:
            specs = default_suite()
        ctx = deps.make_context(COMMAND, args, {"synthetic": [s.model_dump(mode="json") for s in specs]})
        for spec in specs:
            for path in _write_synthetic(spec, out):
                logger.info("Manifest %s", path)
        logger.debug("Run directory %s", ctx.output_dir)
        return 0

    config = _config(args)
    name = args.name or args.input.name
    jobs = collect_jobs(args.input, name=name, year=args.year, split=args.split)
    if not jobs:
        raise ConfigError(f"no videos found under {args.input} (expected real/ and fake/<generator>/)")
    deps.make_context(COMMAND, args, {"preprocess": config.model_dump(mode="json"), "name": name})
    manifest = preprocess_videos(jobs, config, out, name=name, workers=args.workers)
    write_manifest(manifest, out / f"{name}.jsonl")
    print(_summary(manifest))
    for video_id, reason in sorted(manifest.excluded.items()):
        print(f"  excluded {video_id}: {reason}")
    return 0
