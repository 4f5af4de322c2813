# hyperdf/checkpoint.py
"""Checkpoint files: a magic line, the payload's sha256, then a ``torch.save`` payload."""

from __future__ import annotations

import hashlib
import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import torch

from .encoder import DetectorModel, build_model
from .errors import CorruptCheckpoint
from .schemas import EncoderSpec, ParamPolicy, TrainConfig

logger = logging.getLogger(__name__)

MAGIC = b"HYPERDF-CKPT-1\n"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    model: DetectorModel
    config: Optional[TrainConfig]
    step: int = 0
    epoch: int = 0
    optimizer_state: Optional[Dict[str, Any]] = None
    schedule_state: Optional[Dict[str, Any]] = None
    trainer_state: Dict[str, Any] = field(default_factory=dict)
    digest: str = ""


def checkpoint_save(
    model: DetectorModel,
    path: Union[str, Path],
    *,
    config: Optional[TrainConfig] = None,
    step: int = 0,
    epoch: int = 0,
    optimizer: Optional[torch.optim.Optimizer] = None,
    schedule_state: Optional[Dict[str, Any]] = None,
    trainer_state: Optional[Dict[str, Any]] = None,
) -> str:
    """Write a checkpoint and return the sha256 of its payload."""
    payload = {
        "format": FORMAT_VERSION,
        "encoder_spec": model.spec.model_dump(mode="json"),
        "policy": model.policy.model_dump(mode="json"),
        "l2_normalize": bool(model.l2_normalize),
        "state_dict": {k: v.detach().cpu() for k, v in model.state_dict().items()},
        "config": config.model_dump(mode="json") if config is not None else None,
        "step": int(step),
        "epoch": int(epoch),
        "optimizer": optimizer.state_dict() if optimizer is not None else None,
        "schedule": schedule_state,
        "trainer_state": trainer_state or {},
    }
    buffer = io.BytesIO()
    torch.save(payload, buffer)
    body = buffer.getvalue()
    digest = hashlib.sha256(body).hexdigest()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(MAGIC + digest.encode("ascii") + b"\n" + body)
    tmp.replace(path)
    logger.debug("Saved checkpoint %s (step %d, sha256 %s)", path, step, digest[:12])
    return digest


def _read_payload(path: Path) -> tuple[Dict[str, Any], str]:
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise CorruptCheckpoint(f"cannot read checkpoint {path}: {exc}") from exc
    if not raw.startswith(MAGIC):
        raise CorruptCheckpoint(f"{path} is not a hyperdf checkpoint")
    header_end = len(MAGIC) + 64
    digest = raw[len(MAGIC) : header_end].decode("ascii", errors="replace")
    body = raw[header_end + 1 :]
    if hashlib.sha256(body).hexdigest() != digest:
        raise CorruptCheckpoint(f"checkpoint {path} failed its hash check")
    try:
        payload = torch.load(io.BytesIO(body), map_location="cpu", weights_only=True)
    except Exception as exc:
        raise CorruptCheckpoint(f"cannot decode checkpoint {path}: {exc}") from exc
    if payload.get("format") != FORMAT_VERSION:
        raise CorruptCheckpoint(f"unsupported checkpoint format {payload.get('format')}")
    return payload, digest


def checkpoint_load(
    path: Union[str, Path],
    *,
    expected_spec: Optional[EncoderSpec] = None,
    weights: Optional[str] = None,
) -> Checkpoint:
    """Rebuild the model stored in ``path``.

    Raises ``CorruptCheckpoint`` on a hash mismatch, an undecodable payload,
    an encoder spec differing from ``expected_spec`` or parameters that do
    not fit the stored architecture.
    """
    path = Path(path)
    payload, digest = _read_payload(path)
    spec = EncoderSpec.model_validate(payload["encoder_spec"])
    if expected_spec is not None and spec != expected_spec:
        raise CorruptCheckpoint(f"checkpoint {path} holds encoder {spec!r}, expected {expected_spec!r}")
    policy = ParamPolicy.model_validate(payload["policy"])
    model = build_model(spec, policy, 0, l2_normalize=payload["l2_normalize"], weights=weights)
    try:
        model.load_state_dict(payload["state_dict"], strict=True)
    except RuntimeError as exc:
        raise CorruptCheckpoint(f"checkpoint {path} does not match its architecture: {exc}") from exc
    config = TrainConfig.model_validate(payload["config"]) if payload.get("config") else None
    logger.info("Loaded checkpoint %s (policy=%s, step %d)", path, policy.label, payload["step"])
    return Checkpoint(
        model=model,
        config=config,
        step=payload["step"],
        epoch=payload["epoch"],
        optimizer_state=payload.get("optimizer"),
        schedule_state=payload.get("schedule"),
        trainer_state=payload.get("trainer_state") or {},
        digest=digest,
    )


def checkpoint_digest(path: Union[str, Path]) -> str:
    return _read_payload(Path(path))[1]


__all__ = ["Checkpoint", "checkpoint_save", "checkpoint_load", "checkpoint_digest"]
