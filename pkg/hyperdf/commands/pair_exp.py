"""``pair-exp``: paired vs unpaired training sets, learning curves and gap statistic."""

from __future__ import annotations

import argparse
import logging

from ..experiments import run_pairing_experiment
from ..manifest import read_manifest
from ..reports import plot_pairing_curves, write_result
from . import deps

logger = logging.getLogger(__name__)

COMMAND = "pair-exp"


def add_parser(subparsers) -> argparse.ArgumentParser:
    p = subparsers.add_parser(COMMAND, help="paired vs unpaired training experiment")
    p.add_argument("--data", required=True, type=deps.existing_path, help="manifest with real/fake source links")
    p.add_argument("--split", default="train", choices=["train", "val", "test"], help="split of --data to draw from")
    p.add_argument("--val", required=True, type=deps.existing_path, help="validation manifest")
    p.add_argument("--trials", type=int, default=10, help="paired/unpaired split pairs (trial seeds 0..n-1)")
    p.add_argument("--out", help="run directory (default: HYPERDF_OUTPUT_ROOT/<run id>)")
    deps.add_train_flags(p)
    p.set_defaults(handler=run)
    return p


def run(args: argparse.Namespace) -> int:
    config = deps.resolve_train_config(args)
    manifest = deps.select(read_manifest(args.data), split=args.split)
    val_manifest = read_manifest(args.val)
    ctx = deps.make_context(
        COMMAND, args, {"config": config.model_dump(mode="json"), "trials": args.trials, "split": args.split},
        seed=config.seed,
    )
    result = run_pairing_experiment(
        manifest, val_manifest, config, n_trials=args.trials,
        output_dir=ctx.output_dir / "runs", weights=args.weights, device=args.device,
    )
    write_result(result, ctx.output_dir, "pairing")
    plot_pairing_curves(result.curves, ctx.output_dir / "pairing_curves.svg")
    print(f"paired - unpaired mean best val AUROC: {result.gap:+.4f}")
    for condition, value in result.divergence.items():
        print(f"{condition}: train - val AUROC at best epoch {value:+.4f}")
    return 0
