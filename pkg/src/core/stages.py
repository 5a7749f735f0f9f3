"""This module is responsible for loading all stages from the `modules` folder."""

import importlib
import inspect
import pkgutil
import re
from typing import Generator

from voluptuous import Union

from core.abstract import AbstractStage
from core.logger import get_logger

logger = get_logger("stages")

__all__ = ["Importable", "Stages", "schema_docs"]


class Importable:
    """Make a stage importable by adding this as a decorator."""

    def __init__(self, *args, **kwargs):
        pass

    def __new__(cls, *args, **kwargs):
        # Create default instance if no cls is not called
        if args and inspect.isclass(args[0]) and issubclass(args[0], AbstractStage):
            instance = super().__new__(cls)
            return instance(args[0])

        return super().__new__(cls)

    def __call__(self, cls):
        if not issubclass(cls, AbstractStage):
            logger.error("Stage %s is not importable as it is of type %s", cls, type(cls))
            raise ImportError("Importing stage of incorrect type.")

        if cls.__dict__.get("importable"):
            logger.error("Stage %s is already importable. This can lead to unintended errors", cls)
            raise ValueError("Double applying of importable stage changes.")

        cls.importable = True
        return cls


def schema_docs(cls: type[AbstractStage]) -> dict[str, str]:
    """Collects `:key: description` lines of all `params_schema` docstrings in the MRO."""
    docs = {}
    for base in reversed(cls.__mro__):
        if (func := base.__dict__.get("params_schema")) is None:
            continue

        doc = getattr(func, "__func__", func).__doc__ or ""
        for key, text in re.findall(r"^\s*:(\w+):\s*(.+)$", doc, re.MULTILINE):
            docs[key] = text.strip()

    return docs


class Stages:
    """This class loads and is an interface to all loaded stages."""

    stages: dict[str, type[AbstractStage]] = {}

    @classmethod
    def __len__(cls):
        return len(cls.stages)

    @classmethod
    def initialize(cls, package: str = None, file: str = None):
        """Loads the stage modules and registers their stages."""

        logger.debug("Initializing stages...")
        for stage_cls in cls._iter_stage_cls(package, file):
            cls._add_stage_cls(stage_cls)

        logger.debug("Successfully initialized %s stages.", cls.__len__())

    @classmethod
    def get_stage_cls(cls, command: str) -> type[AbstractStage]:
        """Returns the stage class of a subcommand."""
        try:
            return cls.stages[command]
        except KeyError as e:
            raise ValueError(f"Stage `{command}` is unknown.") from e

    @classmethod
    def commands(cls) -> list[str]:
        """All registered subcommands in registration order."""
        return list(cls.stages)

    @classmethod
    def _iter_stage_cls(cls, pkg: str, file: str) -> Generator[type[AbstractStage], None, None]:
        """Loads all stage classes from the specified package or module."""
        assert pkg and file is None or pkg is None and file

        if pkg:
            package_module = importlib.import_module(pkg)
            path, name = package_module.__path__, f"{package_module.__name__}."

            for _, module_name, is_pkg in pkgutil.walk_packages(path, name):
                if is_pkg:
                    continue
                yield from cls._iter_module(module_name)

        if file:
            yield from cls._iter_module(file)

    @classmethod
    def _iter_module(cls, module_name: str):
        """Load a single module"""
        try:
            module = importlib.import_module(module_name)
        except ImportError as e:
            logger.warning(
                "Skipping module %s because of missing dependency `%s`. "
                "Check build and pyproject.toml if required.",
                *(module_name, e.name),
            )
            return

        # module dicts keep definition order
        members = [m for m in vars(module).values() if inspect.isclass(m)]

        for stage in members:
            if stage.__module__ == module_name and cls._validate_stage(stage):
                logger.debug("Loaded stage %s from %s.", stage.module_name(), module.__name__)
                yield stage

    @staticmethod
    def _validate_stage(stage: type[AbstractStage]) -> bool:
        """Some tests weather the stage class has expected implementations."""
        if not (issubclass(stage, AbstractStage) and stage.__dict__.get("importable")):
            return False

        try:
            if not isinstance(stage.module_name(), str):
                raise ValueError("Stage name is not a string.")

            if len(stage.__abstractmethods__) > 0:
                raise ValueError("Stage is not fully implemented.")

            if not isinstance(c := stage.params_schema(), (dict, Union)):
                raise ValueError(f"Params-Schema must be a dict or Union, not {type(c)}.")

            params = list(inspect.signature(stage.__call__).parameters.values())
            expected = list(inspect.signature(AbstractStage.__call__).parameters.values())
            if [p.name for p in params] != [p.name for p in expected]:
                raise ValueError(
                    f"Stage {stage} has an invalid __call__ signature. "
                    f"It should be {expected}, not {params}."
                )

            # check stage documentation
            if not stage.__doc__:
                logger.warning("Stage %s has no documentation.", str(stage))

            documented = schema_docs(stage)
            for key in stage.params_schema():
                name = getattr(key, "schema", key)
                if name not in documented:
                    logger.warning("Parameter `%s` of %s is undocumented.", name, str(stage))

        except ValueError as e:
            logger.error("Not loading %s: %s", stage.__name__, str(e))
            return False

        return True

    @staticmethod
    def _add_stage_cls(_cls: type[AbstractStage]):
        """Adds a new stage class to the registry."""
        name = _cls.module_name()

        if name in Stages.stages:
            if Stages.stages[name] is _cls:
                return
            raise ValueError(f"Stage with command {name} already exists! Please define a command.")

        Stages.stages[name] = _cls

    @staticmethod
    def create_stage(flow, command: str, params: dict) -> AbstractStage:
        """Creates the stage instance of a subcommand."""
        return Stages.get_stage_cls(command)(flow, params)
