"""``train``: fit one detector and keep its best-validation checkpoint."""

from __future__ import annotations

import argparse
import logging

from ..encoder import build_model
from ..manifest import read_manifest
from ..trainer import train
from . import deps

logger = logging.getLogger(__name__)

COMMAND = "train"


def add_parser(subparsers) -> argparse.ArgumentParser:
    p = subparsers.add_parser(COMMAND, help="train a detector")
    p.add_argument("--train", required=True, type=deps.existing_path, help="training manifest")
    p.add_argument("--val", required=True, type=deps.existing_path, help="validation manifest")
    p.add_argument("--train-split", choices=["train", "val", "test"], help="use only this split of --train")
    p.add_argument("--val-split", choices=["train", "val", "test"], help="use only this split of --val")
    p.add_argument("--generators", help="comma-separated fake generators kept for training (reals always kept)")
    p.add_argument("--resume", type=deps.existing_path, help="continue from a last.ckpt")
    p.add_argument("--out", help="run directory (default: HYPERDF_OUTPUT_ROOT/<run id>)")
    deps.add_train_flags(p)
    p.set_defaults(handler=run)
    return p


def run(args: argparse.Namespace) -> int:
    config = deps.resolve_train_config(args)
    generators = [g for g in args.generators.split(",") if g] if args.generators else None
    train_manifest = deps.select(read_manifest(args.train), split=args.train_split, generators=generators)
    val_manifest = deps.select(read_manifest(args.val), split=args.val_split)
    ctx = deps.make_context(COMMAND, args, config.model_dump(mode="json"), seed=config.seed)
    model = build_model(config.encoder, config.policy, config.seed, l2_normalize=config.l2_normalize, weights=args.weights)
    result = train(
        model,
        train_manifest,
        val_manifest,
        config,
        output_dir=ctx.output_dir,
        resume=args.resume,
        device=args.device,
        weights=args.weights,
    )
    print(f"best validation AUROC {result.best_val_auroc:.6f} at epoch {result.best_epoch}")
    print(f"checkpoint {result.checkpoint_path}")
    return 0
