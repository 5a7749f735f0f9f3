"""This module is used to build and run one stage from the command line and a config file."""

import sys
import typing
from concurrent.futures import ThreadPoolExecutor

import simplejson as json
import yaml
from voluptuous import PREVENT_EXTRA, Schema
from voluptuous.validators import Invalid, IsFile

from core.abstract import AbstractStage
from core.errors import DataReadError
from core.helpers import load_env_pairs
from core.logger import configure, get_logger
from core.report import to_builtin
from core.settings import Settings
from core.stages import Stages
from core.task import ExitCode, StageRun
from core.validation import validate
from core.validation.schemas import ConfigSchema, EnvSchema, HeaderSchema

logger = get_logger("flow")


class LabelCloudFlow:
    """Resolves the configuration of one subcommand, owns the worker pool and runs the stage."""

    instance = None

    def __init__(self, command: str, cli_params: dict = None):
        if LabelCloudFlow.instance:
            raise RuntimeError("Flow has been initialized already!")
        LabelCloudFlow.instance = self

        self.command = command
        self.path = None
        self._executor: ThreadPoolExecutor | None = None

        self.configuration = self.get_configuration()

        if self.configuration:
            self.load_configuration()

        sections = self.configuration.get("stages") or {}
        params = (sections.get(command) or {}) | (cli_params or {})

        stage_cls = Stages.get_stage_cls(command)
        schema = Schema(stage_cls.params_schema(), required=True, extra=PREVENT_EXTRA)
        self.params = validate(params, schema, f"{command} parameters")

        if Settings.print_config:
            print(json.dumps(to_builtin(self.run_config), indent=2), file=sys.stderr)

        self.stage: AbstractStage = Stages.create_stage(self, command, self.params)
        logger.debug("Created stage %s.", stage_cls.__name__)

    @property
    def run_config(self) -> dict:
        """Resolved command, stage parameters and settings of this run."""
        return {"command": self.command, "params": self.params, "settings": Settings.snapshot()}

    @property
    def executor(self) -> ThreadPoolExecutor:
        """Worker pool sized by `Settings.threads`."""
        if self._executor is None:
            logger.debug("Starting worker pool with %d thread(s).", Settings.threads)
            self._executor = ThreadPoolExecutor(Settings.threads, thread_name_prefix="labelcloud")
        return self._executor

    def get_configuration(self) -> dict:
        """Loads and returns the raw configuration, empty if none is set."""
        if Settings.config is None:
            return {}

        try:
            self.path = Schema(IsFile())(Settings.config)  # pylint: disable=E1120
        except Invalid:
            logger.critical("No configuration file found at %s.", Settings.config)
            sys.exit(ExitCode.USAGE)

        logger.debug("Loading configuration file %s...", self.path)
        configuration = self.read_yaml(self.path)

        if not isinstance(configuration, dict):
            logger.critical("Configuration %s must be a mapping.", self.path)
            sys.exit(ExitCode.USAGE)

        return configuration

    def load_configuration(self):
        """Applies env, extensions and settings of the configuration file."""
        if env := validate(self.configuration, EnvSchema())["env"]:
            load_env_pairs(env)
            Settings.initiate()

        logger.debug("Validating file header...")
        header = validate(self.configuration, HeaderSchema())["labelcloud"]

        if extensions := header["extends"]:
            logger.debug("Found extensions. Loading...")
            self.load_extensions(extensions)

        if env := EnvSchema()(self.configuration)["env"]:
            load_env_pairs(env)

        self.configuration = validate(self.configuration, ConfigSchema())
        Settings.extend(self.configuration["labelcloud"]["settings"])
        configure()

        logger.info("Loaded configuration from %s", self.path)

    @staticmethod
    def read_yaml(path: str):
        """Reads a YAML document, exits with a usage error if it is invalid."""
        with open(path, "r", encoding="utf-8") as file:
            try:
                return yaml.safe_load(file)
            except yaml.YAMLError as e:
                logger.critical("Invalid YAML file detected: %s (%s)", path, e)
                sys.exit(ExitCode.USAGE)

    def load_extensions(self, extension_paths: list[str]):
        """Merges the extended configurations below this one, later files take precedence."""
        f = typing.TypeVar("f")

        def extend(base: f, extension: f):
            if isinstance(extension, dict) and isinstance(base, dict):
                for k, v in extension.items():
                    base[k] = extend(base.get(k), v) if k in base else v
                return base

            return extension

        noreq_schema = ConfigSchema(required=False)
        merged = {}

        for path in extension_paths:
            logger.debug("Loading extension %s...", path)

            if not (template := self.read_yaml(path)):
                logger.info("Extension %s is empty, skipping.", path)
                continue

            logger.debug("Loosely validating extension...")
            validate(template, noreq_schema, f"extension {path}")

            merged = extend(merged, template)

        self.configuration = extend(merged, self.configuration)

        # the header of the extending file is kept as is
        self.configuration["labelcloud"].pop("extends", None)

    def run(self) -> ExitCode:
        """Runs the stage, writes the report and returns the exit code."""
        run = StageRun(self.stage, self.run_config)

        try:
            code = run.run()
        finally:
            self.shutdown()

        try:
            run.report.dump(Settings.report)
        except OSError as e:
            logger.error("Could not write report to %s: %s", Settings.report, e)
            raise DataReadError(str(e)) from e

        return code

    def shutdown(self):
        """Stops the worker pool."""
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None
