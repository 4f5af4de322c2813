"""``ablate``: the five-setup component ablation, or the trainable-policy comparison."""

from __future__ import annotations

import argparse
import logging

from ..experiments import run_ablation, run_policy_comparison
from ..manifest import read_manifest
from ..reports import plot_policy_curves, write_matrix, write_result
from . import deps

logger = logging.getLogger(__name__)

COMMAND = "ablate"


def add_parser(subparsers) -> argparse.ArgumentParser:
    p = subparsers.add_parser(COMMAND, help="component ablation (or --policies comparison)")
    p.add_argument("--train", required=True, type=deps.existing_path, help="training manifest")
    p.add_argument("--val", required=True, type=deps.existing_path, help="validation manifest")
    p.add_argument("--test", required=True, type=deps.path_list, help="comma-separated test manifests")
    p.add_argument("--seeds", type=deps.int_list, help="comma-separated seeds to average over (default: --seed)")
    p.add_argument("--policies", action="store_true",
                   help="compare ln_only, bias_only, low_rank(1) and full instead of the five setups")
    p.add_argument("--out", help="run directory (default: HYPERDF_OUTPUT_ROOT/<run id>)")
    deps.add_train_flags(p)
    p.set_defaults(handler=run)
    return p


def run(args: argparse.Namespace) -> int:
    config = deps.resolve_train_config(args)
    train_manifest = read_manifest(args.train)
    val_manifest = read_manifest(args.val)
    tests = deps.load_manifests(args.test)
    stem = "policies" if args.policies else "ablation"
    ctx = deps.make_context(
        COMMAND, args, {"base_config": config.model_dump(mode="json"), "seeds": args.seeds, "mode": stem},
        seed=config.seed,
    )
    runner = run_policy_comparison if args.policies else run_ablation
    result = runner(
        train_manifest, val_manifest, tests, config,
        seeds=args.seeds, output_dir=ctx.output_dir / "runs", weights=args.weights, device=args.device,
    )
    write_matrix(result.matrix, ctx.output_dir, stem)
    write_result(result, ctx.output_dir, f"{stem}_result")
    if result.curves:
        plot_policy_curves(result.curves, ctx.output_dir / f"{stem}_curves.svg")
    for label, error in result.errors.items():
        logger.error("%s failed: %s", label, error)
    print((result.matrix * 100).round(1).to_string())
    return 1 if len(result.errors) == len(result.matrix.index) else 0
