"""This module contains the StageRun class, executing one stage and mapping its outcome."""

import enum
import time
import traceback
import typing

from core.errors import LabelCloudError
from core.logger import get_logger
from core.report import RunReport
from core.settings import Settings

if typing.TYPE_CHECKING:
    from core.abstract import AbstractStage


class ExitCode(enum.IntEnum):
    """Process exit codes."""

    OK = 0
    FAILED = 1
    USAGE = 2


class StageRun:
    """Runs a stage with timing, error capture and report bookkeeping."""

    def __init__(self, stage: "AbstractStage", config: dict = None):
        self.stage = stage
        self.report = RunReport(stage.module_name())
        self.logger = get_logger(f"|>{stage.module_name()}>", group="task")

        self.report["config"] = config or {}
        self.duration: float | None = None

    def run(self) -> ExitCode:
        """Executes the stage and returns the exit code."""
        t = time.perf_counter()
        self.logger.debug("Running stage %s.", self.stage.__class__.__name__)

        try:
            passed = self.stage(self.report)
            code = ExitCode.OK if passed is not False else ExitCode.FAILED

        except (LabelCloudError, OSError, ValueError) as e:
            code = ExitCode.FAILED
            self.on_failure(e, time.perf_counter() - t)

        self.duration = time.perf_counter() - t
        self.report["status"] = {
            ExitCode.OK: "ok",
            ExitCode.FAILED: "failed",
            ExitCode.USAGE: "usage",
        }[code]
        self.report["duration_s"] = round(self.duration, 6)

        if code == ExitCode.OK:
            self.logger.info("Stage finished in %0.3fs", self.duration)
        elif "error" not in self.report:
            self.logger.warning("Stage reported invalid input after %0.3fs", self.duration)

        self.report.freeze()
        return code

    def on_failure(self, exc: Exception, elapsed: float):
        """Logs and records a failed stage."""
        self.logger.error(
            "[%s > %s] in %s after %0.3fs: %s",
            exc.__class__.__module__,
            exc.__class__.__name__,
            self.stage.module_name(),
            elapsed,
            str(exc),
        )

        self.report["error"] = {"type": exc.__class__.__name__, "message": str(exc)}

        if Settings.print_traceback:
            traceback.print_tb(exc.__traceback__)
