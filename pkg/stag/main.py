"""Command-line entry point: ``python -m stag.main <command> [flags]``."""

import argparse
import logging
import sys
import traceback

import colorlog

from .commands import bench, depth_sweep, gradcheck, multiset, oversmooth, train, vi_train
from .commands.common import common_parser
from .config import settings
from .errors import CitationFormatError, ConfigError, GraphConstructionError

logger = logging.getLogger("stag")

COMMANDS = (train, vi_train, oversmooth, depth_sweep, multiset, gradcheck, bench)

# Bad input rather than a failed computation: exit 2, no traceback
USER_ERRORS = (ConfigError, GraphConstructionError, CitationFormatError, FileNotFoundError)


def configure_logging(level: str | None = None, log_file: str | None = None):
    """Colored console handler on the ``stag`` logger, plus a plain file handler when configured."""
    level = (level or settings.log_level).upper()
    log_file = settings.log_file if log_file is None else log_file
    for handler in list(logger.handlers):
        logger.removeHandler(handler)
        handler.close()
    console = colorlog.StreamHandler()
    console.setFormatter(colorlog.ColoredFormatter(
        "%(log_color)s%(asctime)s %(levelname)s%(reset)s %(message)s", datefmt="%H:%M:%S",
    ))
    logger.addHandler(console)
    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s", datefmt="%H:%M:%S"))
        logger.addHandler(file_handler)
    logger.setLevel(level)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stag", description="Stochastic aggregation experiments for graph networks")
    subparsers = parser.add_subparsers(dest="command", metavar="command")
    subparsers.required = True
    parents = [common_parser()]
    for command in COMMANDS:
        command.register(subparsers, parents)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else 2
    try:
        configure_logging(args.log_level)
    except ValueError as e:
        logger.warning(f"--log-level: {e}")
        return 2

    try:
        return args.handler(args) or 0
    except USER_ERRORS as e:
        logger.warning(f"{args.command}: {e}")
        return 2
    except Exception as e:
        tb = traceback.format_exception(type(e), e, e.__traceback__)
        logger.error(f"{args.command} failed: {e}\n{''.join(tb)}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
