"""Entrypoint of the LabelCloud command line."""

import logging
import sys
import traceback
from importlib import metadata
from platform import python_version

from core import build_parser, load_argv
from core.errors import LabelCloudError
from core.flow import LabelCloudFlow
from core.logger import configure, get_logger
from core.settings import Settings
from core.stages import Stages
from core.task import ExitCode


def version() -> str:
    """Installed package version."""
    try:
        return metadata.version("labelcloud")
    except metadata.PackageNotFoundError:
        return "unknown"


def main(argv: list[str] = None) -> int:
    """Entrypoint, returns the process exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    Stages.initialize(package="modules")

    if not argv:
        build_parser().print_usage(sys.stderr)
        return ExitCode.USAGE

    try:
        command, params = load_argv(argv)
    except SystemExit as e:
        return e.code if isinstance(e.code, int) else ExitCode.USAGE

    if command is None:
        build_parser().print_usage(sys.stderr)
        return ExitCode.USAGE

    try:
        configure()
        get_logger("flow").debug("Starting version %s (Python %s).", version(), python_version())

        flow = LabelCloudFlow(command, params)
        return flow.run()

    except SystemExit as e:
        return e.code if isinstance(e.code, int) else ExitCode.USAGE

    except (LabelCloudError, OSError) as e:
        if Settings.print_traceback:
            traceback.print_tb(e.__traceback__)

        logging.critical("[%s > %s] Failed to run.", e.__class__.__module__, e.__class__.__name__)
        logging.critical("%s", str(e))
        return ExitCode.FAILED

    finally:
        LabelCloudFlow.instance = None


if __name__ == "__main__":
    sys.exit(main())
