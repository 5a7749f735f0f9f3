"""Module holds the abstract classes for pipeline stages."""

import os
import typing
from abc import ABC, abstractmethod

from voluptuous import All, IsDir, Maybe, Optional, Union

from core.helpers import kebab_case
from core.logger import get_logger
from core.validation import EnvironmentVar

if typing.TYPE_CHECKING:
    from concurrent.futures import Executor

    from core.flow import LabelCloudFlow
    from core.report import RunReport

__all__ = ["AbstractStage", "AbstractSequenceStage"]


class AbstractStage(ABC):
    """This is the base class for all stages, each one is a subcommand."""

    command: str = None
    importable = False

    def __init__(self, flow: "LabelCloudFlow", params: dict):
        self.flow = flow
        self.params = params

        self.logger = get_logger(f"<{self.module_name()}>", group="stages")

    @classmethod
    def module_name(cls) -> str:
        """Returns the subcommand of the stage."""
        return cls.command or kebab_case(cls.__name__)

    @property
    def executor(self) -> "Executor":
        """Worker pool of the running flow."""
        return self.flow.executor

    @classmethod
    def params_schema(cls) -> dict | Union:
        """Returns the schema for the parameters of the stage."""
        return {}

    @abstractmethod
    def __call__(self, report: "RunReport") -> bool:
        """Executes the stage.

        Args:
            report (RunReport): Collects the machine readable results of the run.

        Returns:
            bool: False if the stage found the input invalid, True otherwise.
        """


class AbstractSequenceStage(AbstractStage, ABC):
    """Base class for stages working on one sequence directory."""

    default_output: str = "labelled"

    @classmethod
    def params_schema(cls) -> dict:
        """
        :sequence: Sequence directory containing poses, calibration, images and clouds.
        :output: Output directory, defaults to a subdirectory of the sequence.
        """
        # pylint: disable=E1120
        return {
            "sequence": All(EnvironmentVar(), IsDir()),
            Optional("output", default=None): Maybe(EnvironmentVar()),
        }

    @property
    def output_dir(self) -> str:
        """Resolved output directory, created on first access."""
        path = self.params["output"] or os.path.join(self.params["sequence"], self.default_output)
        os.makedirs(path, exist_ok=True)
        return path
