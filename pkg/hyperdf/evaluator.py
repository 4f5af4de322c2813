"""Scoring manifests with a trained detector and the cross-dataset benchmark."""

from __future__ import annotations

import hashlib
import json
import logging
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch

from .config import settings
from .dataset import FrameDataset, frame_loader
from .encoder import DetectorModel
from .errors import FingerprintMismatch
from .metrics import aggregate_video, auroc, video_scores
from .schemas import BenchmarkSummary, DatasetManifest, EvalReport, VideoScore

logger = logging.getLogger(__name__)


def model_fingerprint(model: DetectorModel) -> str:
    """sha256 over parameter names and bytes, in sorted name order."""
    digest = hashlib.sha256()
    for name, tensor in sorted(model.state_dict().items()):
        digest.update(name.encode("utf-8"))
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def frame_probabilities(
    model: DetectorModel,
    dataset: FrameDataset,
    *,
    batch_size: int,
    device: str,
) -> List[Tuple[int, float]]:
    """(video index, fake probability) for every frame, in dataset order."""
    was_training = model.training
    model.eval()
    results: List[Tuple[int, float]] = []
    try:
        with torch.no_grad():
            for images, _, videos, _ in frame_loader(dataset, range(len(dataset)), batch_size):
                output = model(images.to(device))
                results.extend(zip(videos.tolist(), output.fake_probs.cpu().tolist()))
    finally:
        model.train(was_training)
    return results


def score_manifest(
    model: DetectorModel,
    manifest: DatasetManifest,
    *,
    batch_size: int = 256,
    device: Optional[str] = None,
    config_fingerprint: str = "",
    fingerprint: Optional[str] = None,
) -> EvalReport:
    """Video-level report for ``manifest``; missing frames are skipped, empty videos excluded."""
    device = device or settings.DEVICE
    dataset = FrameDataset(manifest, model.spec.image_size, train=False, skip_missing=True)
    grouped = video_scores(frame_probabilities(model, dataset, batch_size=batch_size, device=device))
    per_video: List[VideoScore] = []
    excluded: List[str] = []
    for v, record in enumerate(manifest.records):
        probs = grouped.get(v)
        if not probs:
            excluded.append(record.video_id)
            continue
        per_video.append(
            VideoScore(video_id=record.video_id, label=record.target, frame_probs=probs, video_prob=aggregate_video(probs))
        )
    if excluded:
        logger.warning("%s: %d videos have no readable frames and were excluded", manifest.name, len(excluded))
    value = auroc([s.video_prob for s in per_video], [s.label for s in per_video])
    return EvalReport(
        dataset=manifest.name,
        n_real=sum(1 for s in per_video if s.label == 0),
        n_fake=sum(1 for s in per_video if s.label == 1),
        auroc=value,
        per_video=per_video,
        model_fingerprint=fingerprint or model_fingerprint(model),
        config_fingerprint=config_fingerprint,
        skipped_frames=dataset.skipped,
        excluded_videos=excluded,
    )


def check_fingerprint(manifest: DatasetManifest, expected: Optional[str], *, strict: bool) -> None:
    if expected is None or manifest.preprocessing_fingerprint == expected:
        return
    message = (
        f"{manifest.name} was preprocessed with {manifest.preprocessing_fingerprint}, "
        f"the model was trained on {expected}"
    )
    if strict:
        raise FingerprintMismatch(message)
    logger.warning("Preprocessing fingerprint mismatch: %s", message)


def run_benchmark(
    model: DetectorModel,
    manifests: Sequence[DatasetManifest],
    *,
    preprocessing_fingerprint: Optional[str] = None,
    strict: bool = False,
    batch_size: int = 256,
    device: Optional[str] = None,
    config_fingerprint: str = "",
) -> Tuple[List[EvalReport], BenchmarkSummary]:
    """One report per manifest plus the mean-over-datasets summary."""
    fingerprint = model_fingerprint(model)
    reports = []
    for manifest in manifests:
        check_fingerprint(manifest, preprocessing_fingerprint, strict=strict)
        report = score_manifest(
            model, manifest, batch_size=batch_size, device=device,
            config_fingerprint=config_fingerprint, fingerprint=fingerprint,
        )
        logger.info("%s: video AUROC %.4f (%d real, %d fake)", report.dataset, report.auroc, report.n_real, report.n_fake)
        reports.append(report)
    aurocs = [r.auroc for r in reports]
    summary = BenchmarkSummary(
        model_fingerprint=fingerprint,
        datasets=[r.dataset for r in reports],
        aurocs=aurocs,
        mean_auroc=float(np.mean(aurocs)) if aurocs else float("nan"),
    )
    return reports, summary


def dump_json(payload: Union[Dict, List], path: Union[str, Path]) -> Path:
    """Sorted-key, indented JSON; byte-stable for equal payloads."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def write_reports(
    reports: Sequence[EvalReport],
    summary: BenchmarkSummary,
    out_dir: Union[str, Path],
) -> List[Path]:
    out_dir = Path(out_dir)
    paths = [
        dump_json(report.model_dump(mode="json"), out_dir / f"report_{report.dataset.replace('/', '_')}.json")
        for report in reports
    ]
    paths.append(dump_json(summary.model_dump(mode="json"), out_dir / "summary.json"))
    return paths


__all__ = [
    "model_fingerprint",
    "frame_probabilities",
    "score_manifest",
    "check_fingerprint",
    "run_benchmark",
    "dump_json",
    "write_reports",
]
