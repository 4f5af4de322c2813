# hyperdf/commands/deps.py
"""Shared plumbing for subcommands: run context, config resolution, manifest loading."""

from __future__ import annotations

import argparse
import json
import logging
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import yaml
from pydantic import ValidationError

from ..config import settings
from ..errors import ConfigError
from ..evaluator import dump_json
from ..manifest import read_manifest
from ..schemas import AugmentConfig, DatasetManifest, PolicyKind, Precision, TrainConfig

logger = logging.getLogger(__name__)


@dataclass
class RunContext:
    command: str
    run_id: str
    output_dir: Path
    seed: int
    resolved_config: Dict[str, Any] = field(default_factory=dict)

    def write_config(self) -> Path:
        return dump_json(self.resolved_config, self.output_dir / "resolved_config.json")


def new_run_id(command: str) -> str:
    stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    return f"{command}-{stamp}-{secrets.token_hex(3)}"


def make_context(command: str, args: argparse.Namespace, resolved: Dict[str, Any], seed: int = 0) -> RunContext:
    """Create the run directory and record the resolved config and run metadata in it."""
    run_id = new_run_id(command)
    output_dir = Path(args.out) if getattr(args, "out", None) else settings.output_root_path / run_id
    output_dir.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(command=command, run_id=run_id, output_dir=output_dir, seed=seed, resolved_config=resolved)
    ctx.write_config()
    (output_dir / "run.json").write_text(
        json.dumps({"command": command, "run_id": run_id, "seed": seed}, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info("Run %s writing to %s", run_id, output_dir)
    return ctx


def existing_path(value: str) -> Path:
    path = Path(value)
    if not path.exists():
        raise argparse.ArgumentTypeError(f"path does not exist: {value}")
    return path


def existing_dir(value: str) -> Path:
    path = existing_path(value)
    if not path.is_dir():
        raise argparse.ArgumentTypeError(f"not a directory: {value}")
    return path


def path_list(value: str) -> List[Path]:
    """Comma-separated existing paths."""
    return [existing_path(v) for v in value.split(",") if v]


def int_list(value: str) -> List[int]:
    try:
        return [int(v) for v in value.split(",") if v]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {value!r}") from exc


def load_config_file(path: Optional[Path]) -> Dict[str, Any]:
    """YAML (``.yaml``/``.yml``) or JSON mapping; empty when ``path`` is None."""
    if path is None:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = yaml.safe_load(text) if Path(path).suffix in (".yaml", ".yml") else json.loads(text)
    except (yaml.YAMLError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse config file {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must hold a mapping")
    return data


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def add_train_flags(parser: argparse.ArgumentParser) -> None:
    """Flags mapping onto TrainConfig fields; each overrides the config file."""
    g = parser.add_argument_group("training (TrainConfig)")
    g.add_argument("--config", type=existing_path, help="YAML or JSON TrainConfig document")
    g.add_argument("--seed", type=int, help="TrainConfig.seed, root of every random stream")
    g.add_argument("--policy", choices=[p.value for p in PolicyKind], help="TrainConfig.policy.kind")
    g.add_argument("--rank", type=int, help="TrainConfig.policy.rank (low_rank only)")
    g.add_argument("--batch-size", type=int, help="TrainConfig.batch_size")
    g.add_argument("--extended-batch-size", type=int, help="TrainConfig.extended_batch_size")
    g.add_argument("--eval-batch-size", type=int, help="TrainConfig.eval_batch_size")
    g.add_argument("--lr-min", type=float, help="TrainConfig.lr_min")
    g.add_argument("--lr-max", type=float, help="TrainConfig.lr_max")
    g.add_argument("--warmup-epochs", type=int, help="TrainConfig.warmup_epochs")
    g.add_argument("--decay-epochs", type=int, help="TrainConfig.decay_epochs")
    g.add_argument("--max-cycles", type=int, help="TrainConfig.max_cycles")
    g.add_argument("--max-steps", type=int, help="TrainConfig.max_steps")
    g.add_argument("--precision", choices=[p.value for p in Precision], help="TrainConfig.precision")
    g.add_argument("--alpha", type=float, help="TrainConfig.loss_weights.alpha (alignment)")
    g.add_argument("--beta", type=float, help="TrainConfig.loss_weights.beta (uniformity)")
    g.add_argument("--weight-decay", type=float, help="TrainConfig.weight_decay")
    g.add_argument("--allow-weight-decay", action="store_true", default=None, help="TrainConfig.allow_weight_decay")
    g.add_argument("--no-l2", dest="l2_normalize", action="store_false", default=None, help="TrainConfig.l2_normalize=false")
    g.add_argument("--no-slerp", dest="slerp_extension", action="store_false", default=None, help="TrainConfig.slerp_extension=false")
    g.add_argument("--balance-classes", action="store_true", default=None, help="TrainConfig.balance_classes")
    g.add_argument("--no-augment", action="store_true", help="TrainConfig.augment: every probability 0")
    g.add_argument("--backbone", choices=["tiny_vit", "pretrained_clip_vision"], help="TrainConfig.encoder.backbone")
    g.add_argument("--image-size", type=int, help="TrainConfig.encoder.image_size (tiny_vit)")
    g.add_argument("--weights", help="pretrained encoder weights (file, directory or URL); default HYPERDF_CLIP_WEIGHTS")
    g.add_argument("--device", help="torch device; default HYPERDF_DEVICE")


SCALAR_FLAGS = (
    "seed", "batch_size", "extended_batch_size", "eval_batch_size", "lr_min", "lr_max", "warmup_epochs",
    "decay_epochs", "max_cycles", "max_steps", "precision", "weight_decay", "allow_weight_decay",
    "l2_normalize", "slerp_extension", "balance_classes",
)


def train_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    for name in SCALAR_FLAGS:
        value = getattr(args, name, None)
        if value is not None:
            overrides[name] = value
    if args.policy is not None or args.rank is not None:
        overrides["policy"] = {k: v for k, v in (("kind", args.policy), ("rank", args.rank)) if v is not None}
    weights = {k: v for k, v in (("alpha", args.alpha), ("beta", args.beta)) if v is not None}
    if weights:
        overrides["loss_weights"] = weights
    encoder = {k: v for k, v in (("backbone", args.backbone), ("image_size", args.image_size)) if v is not None}
    if encoder:
        overrides["encoder"] = encoder
    if args.no_augment:
        overrides["augment"] = AugmentConfig.disabled().model_dump()
    return overrides


def resolve_train_config(args: argparse.Namespace) -> TrainConfig:
    """Config file first, then flags; the flags win."""
    overrides = train_overrides(args)
    data = _merge(load_config_file(args.config), overrides)
    flagged = overrides.get("policy", {})
    if "kind" in flagged and "rank" not in flagged and flagged["kind"] != PolicyKind.LOW_RANK.value:
        # --policy replaces a low_rank policy from the file, rank included
        data["policy"].pop("rank", None)
    try:
        return TrainConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid training config: {exc}") from exc


def load_manifests(paths: Sequence[Path], *, check_files: bool = True) -> List[DatasetManifest]:
    return [read_manifest(p, check_files=check_files) for p in paths]


def select(
    manifest: DatasetManifest,
    *,
    split: Optional[str] = None,
    generators: Optional[Sequence[str]] = None,
) -> DatasetManifest:
    if split is None and generators is None:
        return manifest
    name = "-".join([manifest.name, *([split] if split else [])])
    return manifest.subset(split=split, generators=generators, name=name)


def setup_logging(level: Optional[str] = None) -> None:
    logging.basicConfig(
        level=(level or settings.LOG_LEVEL).upper(),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


__all__ = [
    "RunContext",
    "make_context",
    "existing_path",
    "existing_dir",
    "path_list",
    "int_list",
    "load_config_file",
    "add_train_flags",
    "train_overrides",
    "resolve_train_config",
    "load_manifests",
    "select",
    "setup_logging",
]
