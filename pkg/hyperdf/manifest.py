# hyperdf/manifest.py
"""Persisting dataset manifests and building paired / unpaired training splits.

A manifest file is JSON Lines: a header object first, then one VideoRecord per
line. Relative frame paths are resolved against the manifest's directory when
the file is read.
"""

from __future__ import annotations

import hashlib
import json
import logging
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Iterable, List, Tuple, Union

import numpy as np

from .errors import MissingSourceLinks
from .schemas import TOOL_VERSION, UNKNOWN_SOURCE, DatasetManifest, VideoRecord

logger = logging.getLogger(__name__)

HEADER_FIELDS = ("name", "preprocessing_fingerprint", "created_at", "tool_version", "excluded")


def _dumps(payload: Dict[str, Any]) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _header(manifest: DatasetManifest) -> Dict[str, Any]:
    data = manifest.model_dump(include=set(HEADER_FIELDS))
    if not data.get("created_at"):
        data["created_at"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    data["tool_version"] = data.get("tool_version") or TOOL_VERSION
    return data


def write_manifest(manifest: DatasetManifest, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [_dumps(_header(manifest))]
    lines.extend(_dumps(record.model_dump()) for record in manifest.records)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote manifest %s (%d records) to %s", manifest.name, len(manifest.records), path)
    return path


def _resolve_frames(record: Dict[str, Any], base: Path) -> Dict[str, Any]:
    frames = []
    for raw in record.get("frame_paths", []):
        frame = Path(raw)
        frames.append(str(frame if frame.is_absolute() else (base / frame)))
    return {**record, "frame_paths": frames}


def read_manifest(path: Union[str, Path], *, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        rows = [json.loads(line) for line in fh if line.strip()]
    if not rows:
        raise ValueError(f"manifest {path} is empty")
    header, body = rows[0], rows[1:]
    base = path.parent
    records = [VideoRecord.model_validate(_resolve_frames(row, base)) for row in body]
    manifest = DatasetManifest(**{k: header[k] for k in HEADER_FIELDS if k in header}, records=records)
    if check_files:
        missing = [p for r in manifest.records for p in r.frame_paths if not Path(p).is_file()]
        if missing:
            raise FileNotFoundError(f"{len(missing)} frame files listed in {path} are missing, e.g. {missing[0]}")
    logger.debug("Read manifest %s with %d records", manifest.name, len(manifest.records))
    return manifest


def check_source_links(manifest: DatasetManifest) -> None:
    real_ids = {r.video_id for r in manifest.reals}
    broken = [
        f.video_id for f in manifest.fakes if f.source_id == UNKNOWN_SOURCE or f.source_id not in real_ids
    ]
    if broken:
        raise MissingSourceLinks(f"{len(broken)} fake videos have no resolvable source, e.g. {broken[0]}")


def _split_reals(manifest: DatasetManifest, trial_seed: int) -> Tuple[List[VideoRecord], set[str]]:
    """Shuffle reals with ``trial_seed`` and cut them into two halves."""
    check_source_links(manifest)
    reals = sorted(manifest.reals, key=lambda r: r.video_id)
    order = np.random.default_rng(trial_seed).permutation(len(reals))
    half = len(reals) // 2
    first = [reals[i] for i in sorted(order[:half])]
    second = {reals[i].video_id for i in order[half:]}
    return first, second


def _with_records(manifest: DatasetManifest, records: Iterable[VideoRecord], name: str) -> DatasetManifest:
    return manifest.model_copy(update={"records": list(records), "name": name, "excluded": {}})


def build_paired_split(manifest: DatasetManifest, trial_seed: int) -> DatasetManifest:
    """Reals of the first half plus the fakes generated from exactly those reals."""
    first, _ = _split_reals(manifest, trial_seed)
    keep = {r.video_id for r in first}
    fakes = [f for f in manifest.fakes if f.source_id in keep]
    return _with_records(manifest, [*first, *fakes], f"{manifest.name}-paired-{trial_seed}")


def build_unpaired_split(manifest: DatasetManifest, trial_seed: int) -> DatasetManifest:
    """The same reals as the paired split, with fakes whose sources lie in the other half."""
    first, second = _split_reals(manifest, trial_seed)
    fakes = [f for f in manifest.fakes if f.source_id in second]
    return _with_records(manifest, [*first, *fakes], f"{manifest.name}-unpaired-{trial_seed}")


def split_digest(manifest: DatasetManifest) -> str:
    """Order-independent digest of the video ids in a manifest."""
    ids = "\n".join(sorted(r.video_id for r in manifest.records))
    return hashlib.sha256(ids.encode("utf-8")).hexdigest()


__all__ = [
    "write_manifest",
    "read_manifest",
    "check_source_links",
    "build_paired_split",
    "build_unpaired_split",
    "split_digest",
]
