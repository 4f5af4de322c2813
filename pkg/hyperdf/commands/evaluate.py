"""``eval``: score a checkpoint on one or more manifests."""

from __future__ import annotations

import argparse
import logging

from ..checkpoint import checkpoint_load
from ..evaluator import run_benchmark, write_reports
from ..reports import benchmark_matrix, write_matrix
from . import deps

logger = logging.getLogger(__name__)

COMMAND = "eval"


def add_parser(subparsers) -> argparse.ArgumentParser:
    p = subparsers.add_parser(COMMAND, help="video-level AUROC of a checkpoint on test manifests")
    p.add_argument("--ckpt", required=True, type=deps.existing_path, help="checkpoint file")
    p.add_argument("--data", required=True, type=deps.path_list, help="comma-separated test manifests")
    p.add_argument("--split", choices=["train", "val", "test"], help="use only this split of every manifest")
    p.add_argument("--allow-mismatch", action="store_true",
                   help="warn instead of failing when a manifest's preprocessing fingerprint differs from training")
    p.add_argument("--batch-size", type=int, default=256, help="frames per forward pass")
    p.add_argument("--weights", help="pretrained encoder weights for pretrained_clip_vision checkpoints")
    p.add_argument("--device", help="torch device; default HYPERDF_DEVICE")
    p.add_argument("--out", help="run directory (default: HYPERDF_OUTPUT_ROOT/<run id>)")
    p.set_defaults(handler=run)
    return p


def run(args: argparse.Namespace) -> int:
    ckpt = checkpoint_load(args.ckpt, weights=args.weights)
    manifests = [deps.select(m, split=args.split) for m in deps.load_manifests(args.data)]
    config_fp = ckpt.config.fingerprint() if ckpt.config else ""
    ctx = deps.make_context(
        COMMAND, args,
        {"checkpoint": str(args.ckpt), "checkpoint_sha256": ckpt.digest, "data": [str(p) for p in args.data],
         "split": args.split, "config_fingerprint": config_fp},
    )
    reports, summary = run_benchmark(
        ckpt.model,
        manifests,
        preprocessing_fingerprint=ckpt.trainer_state.get("preprocessing_fingerprint"),
        strict=not args.allow_mismatch,
        batch_size=args.batch_size,
        device=args.device,
        config_fingerprint=config_fp,
    )
    write_reports(reports, summary, ctx.output_dir)
    write_matrix(benchmark_matrix({ckpt.digest[:12]: summary}), ctx.output_dir, "benchmark")
    for report in reports:
        print(f"{report.dataset}: AUROC {report.auroc:.6f} ({report.n_real} real, {report.n_fake} fake)")
    print(f"mean AUROC {summary.mean_auroc:.6f}")
    return 0
