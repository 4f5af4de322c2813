"""``report``: render saved matrices, or the dataset statistics table."""

from __future__ import annotations

import argparse
from pathlib import Path

from ..reports import dataset_stats_table, render_matrix
from . import deps

COMMAND = "report"


def add_parser(subparsers) -> argparse.ArgumentParser:
    p = subparsers.add_parser(COMMAND, help="display tables for saved results")
    what = p.add_mutually_exclusive_group(required=True)
    what.add_argument("--matrix", type=deps.existing_path, help="matrix .json/.csv or an experiment result .json")
    what.add_argument("--stats", type=deps.path_list, help="comma-separated manifests for the dataset table")
    p.add_argument("--out", help="also write the table to this file")
    p.set_defaults(handler=run)
    return p


def run(args: argparse.Namespace) -> int:
    if args.matrix:
        text = render_matrix(args.matrix)
    else:
        manifests = deps.load_manifests(args.stats, check_files=False)
        text = dataset_stats_table(manifests).to_string(index=False)
    print(text)
    if args.out:
        Path(args.out).write_text(text + "\n", encoding="utf-8")
    return 0
