# hyperdf/weights.py
"""Resolution and loading of the pretrained CLIP vision encoder."""

from __future__ import annotations

import hashlib
import logging
from functools import lru_cache
from pathlib import Path
from typing import Optional

import httpx
import torch
import torch.nn as nn

from .config import settings
from .errors import WeightsUnavailable
from .schemas import CLIP_L14_CONTRACT

logger = logging.getLogger(__name__)

VISION_PREFIX = "vision_model."


def _is_url(source: str) -> bool:
    return source.startswith("http://") or source.startswith("https://")


def _download(url: str, dest: Path) -> Path:
    logger.info("Downloading encoder weights from %s", url)
    tmp = dest.with_suffix(dest.suffix + ".part")
    try:
        with httpx.Client(timeout=settings.DOWNLOAD_TIMEOUT, follow_redirects=True) as client:
            with client.stream("GET", url) as r:
                r.raise_for_status()
                with tmp.open("wb") as fh:
                    for chunk in r.iter_bytes():
                        fh.write(chunk)
    except httpx.HTTPError as exc:
        tmp.unlink(missing_ok=True)
        raise WeightsUnavailable(f"failed to download {url}: {exc}") from exc
    tmp.replace(dest)
    logger.debug("Stored encoder weights at %s (%d bytes)", dest, dest.stat().st_size)
    return dest


@lru_cache(maxsize=4)
def resolve_weights(source: str) -> Path:
    """Return a local path for ``source``; URLs are downloaded once into the cache."""
    if _is_url(source):
        cache = settings.cache_path
        cache.mkdir(parents=True, exist_ok=True)
        suffix = Path(source.split("?", 1)[0]).suffix or ".bin"
        dest = cache / (hashlib.sha256(source.encode("utf-8")).hexdigest()[:24] + suffix)
        if dest.exists():
            logger.debug("Using cached encoder weights %s", dest)
            return dest
        return _download(source, dest)
    path = Path(source).expanduser()
    if not path.exists():
        raise WeightsUnavailable(f"encoder weights not found at {path}")
    return path


def load_clip_vision(source: Optional[str] = None) -> nn.Module:
    """Build a ``transformers.CLIPVisionModel`` (ViT-L/14 geometry) from ``source``.

    ``source`` may be a Hugging Face style directory or a state-dict file holding
    either the vision tower alone or a full CLIP checkpoint.
    """
    source = source or settings.CLIP_WEIGHTS
    if not source:
        raise WeightsUnavailable("no pretrained weights configured (set HYPERDF_CLIP_WEIGHTS)")
    try:
        from transformers import CLIPVisionConfig, CLIPVisionModel
    except ImportError as exc:
        raise WeightsUnavailable("the transformers package is required for the CLIP encoder") from exc

    path = resolve_weights(source)
    if path.is_dir():
        try:
            return CLIPVisionModel.from_pretrained(str(path))
        except (OSError, ValueError) as exc:
            raise WeightsUnavailable(f"cannot load CLIP vision model from {path}: {exc}") from exc

    config = CLIPVisionConfig(
        hidden_size=CLIP_L14_CONTRACT["width"],
        intermediate_size=4 * CLIP_L14_CONTRACT["width"],
        num_hidden_layers=CLIP_L14_CONTRACT["depth"],
        num_attention_heads=CLIP_L14_CONTRACT["heads"],
        image_size=CLIP_L14_CONTRACT["image_size"],
        patch_size=CLIP_L14_CONTRACT["patch_size"],
    )
    model = CLIPVisionModel(config)
    try:
        state = torch.load(path, map_location="cpu", weights_only=True)
    except Exception as exc:
        raise WeightsUnavailable(f"cannot read weights file {path}: {exc}") from exc
    state = state.get("state_dict", state)
    vision = {k: v for k, v in state.items() if k.startswith(VISION_PREFIX)}
    missing, _ = model.load_state_dict(vision or state, strict=False)
    missing = [k for k in missing if not k.endswith("position_ids")]
    if missing:
        raise WeightsUnavailable(f"weights file {path} lacks {len(missing)} vision parameters")
    logger.info("Loaded CLIP vision encoder from %s", path)
    return model


__all__ = ["resolve_weights", "load_clip_vision"]
