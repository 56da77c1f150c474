"""
multidetect - adversarial input detection with multiple representation models
Mounts the subcommands of every module that exposes a CLI surface.
"""
import argparse
import sys
from typing import List, Optional

from multidetect.core.config import settings
from multidetect.core.errors import EXIT_STAGE, EXIT_USAGE, StageError, ToolkitError
from multidetect.core.logging import configure_logging, get_logger
from multidetect.modules.harness.commands import register as register_harness

logger = get_logger("multidetect.main")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=settings.APP_NAME,
        description="Adversarial input detection with multiple representation models",
    )
    parser.add_argument("--log-level", default=None, help=f"logging level (default {settings.LOG_LEVEL})")
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.TOOLKIT_VERSION}")
    subparsers = parser.add_subparsers(dest="command", metavar="<command>")

    # Mount commands
    register_harness(subparsers)
    return parser


def exit_code_for(error: ToolkitError) -> int:
    """Stage failures report the exit code of their cause when it has one."""
    if isinstance(error, StageError) and isinstance(error.cause, ToolkitError):
        return exit_code_for(error.cause)
    return error.exit_code


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors; usage maps to 1 here
        return EXIT_USAGE if e.code not in (0, None) else 0
    configure_logging(args.log_level)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return args.handler(args)
    except ToolkitError as e:
        logger.error("%s", e)
        return exit_code_for(e)
    except Exception as e:
        logger.exception("Unexpected failure: %s", e)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
