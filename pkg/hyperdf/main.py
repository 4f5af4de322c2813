# hyperdf/main.py
"""Command-line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .commands import COMMANDS, deps
from .errors import HyperDFError

logger = logging.getLogger("hyperdf")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hyperdf",
        description="Parameter-efficient deepfake detection on the unit hypersphere.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--log-level", help="logging level (default HYPERDF_LOG_LEVEL)")
    subparsers = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for command in COMMANDS:
        command.add_parser(subparsers)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    deps.setup_logging(args.log_level)
    try:
        return int(args.handler(args) or EXIT_OK)
    except SystemExit as exc:
        return int(exc.code or 0)
    except ValidationError as exc:
        logger.error("invalid configuration: %s", exc)
        return EXIT_FAILURE
    except (HyperDFError, OSError, ValueError, RuntimeError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
