"""``years``: one model per training dataset, tested across datasets ordered by year."""

from __future__ import annotations

import argparse
import logging

from ..experiments import run_years_experiment
from ..reports import plot_years, write_matrix, write_result
from . import deps

logger = logging.getLogger(__name__)

COMMAND = "years"


def add_parser(subparsers) -> argparse.ArgumentParser:
    p = subparsers.add_parser(COMMAND, help="detection difficulty over dataset years")
    p.add_argument("--train", required=True, type=deps.path_list,
                   help="comma-separated manifests; each trains on its train split and validates on its val split")
    p.add_argument("--test", required=True, type=deps.path_list, help="comma-separated test manifests")
    p.add_argument("--out", help="run directory (default: HYPERDF_OUTPUT_ROOT/<run id>)")
    deps.add_train_flags(p)
    p.set_defaults(handler=run, parser=p)
    return p


def run(args: argparse.Namespace) -> int:
    if len(args.train) < 2:
        args.parser.error("--train needs at least two manifests")
    config = deps.resolve_train_config(args)
    train_sets = [
        (deps.select(m, split="train"), deps.select(m, split="val")) for m in deps.load_manifests(args.train)
    ]
    tests = deps.load_manifests(args.test)
    ctx = deps.make_context(COMMAND, args, {"config": config.model_dump(mode="json")}, seed=config.seed)
    result = run_years_experiment(
        train_sets, tests, config, output_dir=ctx.output_dir / "runs", weights=args.weights, device=args.device
    )
    write_matrix(result.matrix, ctx.output_dir, "years")
    write_result(result, ctx.output_dir, "years_result")
    plot_years(result.matrix, result.years, result.in_dataset, ctx.output_dir / "years.svg")
    print((result.matrix * 100).round(1).to_string())
    return 0
