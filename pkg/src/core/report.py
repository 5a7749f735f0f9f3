"""This module provides the run report, a nested mapping dumped as JSON after each run."""

import operator
import sys
from collections.abc import MutableMapping
from datetime import datetime, timezone
from functools import reduce

import numpy as np
import simplejson as json

from core.helpers import flatten
from core.settings import Settings

__all__ = ["RunReport", "to_builtin"]


def to_builtin(value):
    """Converts numpy values and containers into JSON serializable builtins."""
    if isinstance(value, dict):
        return {str(k): to_builtin(v) for k, v in value.items()}
    if isinstance(value, (list, tuple, set, frozenset)):
        return [to_builtin(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_builtin(value.tolist())
    if isinstance(value, np.generic):
        return to_builtin(value.item())
    if isinstance(value, float) and not np.isfinite(value):
        return None
    return value


class RunReport(MutableMapping):
    """Machine readable summary of a stage run.

    Nested keys can be accessed with `Settings.nested_attr_separator`,
    e.g. `report["points.dropped"]`."""

    __slots__ = ("command", "created", "values", "__frozen")

    def __init__(self, command: str, values: dict = None):
        self.__frozen = False

        self.command = command
        self.created = datetime.now(timezone.utc)
        self.values: dict = {}

        for k, v in (values or {}).items():
            self[k] = v

    def __repr__(self):
        return f"RunReport[{self.command}]({len(self)} keys)"

    def __getitem__(self, item: str):
        return reduce(operator.getitem, item.split(Settings.nested_attr_separator), self.values)

    def __setitem__(self, key: str, value):
        if self.__frozen:
            raise TypeError("Report is frozen, changing values is not allowed!")

        value = to_builtin(value)
        try:
            json.dumps(value, allow_nan=False)
        except (TypeError, ValueError) as e:
            raise ValueError(f"Report value of `{key}` is not JSON serializable.") from e

        *path, field = key.split(Settings.nested_attr_separator)
        top = self.values
        for p in path:
            top = top.setdefault(p, {})
        top[field] = value

    def __delitem__(self, key):
        *path, field = key.split(Settings.nested_attr_separator)
        del reduce(operator.getitem, path, self.values)[field]

    def __iter__(self):
        yield from self.flatten().keys()

    def __len__(self):
        return len(self.flatten())

    def __contains__(self, item):
        try:
            self[item]
        except (KeyError, TypeError):
            return False
        return True

    def flatten(self) -> dict:
        """Flattens nested values on the defined separator."""
        return flatten(self.values, Settings.nested_attr_separator)

    def freeze(self):
        """Freeze self."""
        self.__frozen = True

    @property
    def frozen(self) -> bool:
        """Whether the report can still be changed."""
        return self.__frozen

    def as_dict(self) -> dict:
        """Report content with run metadata."""
        return {"command": self.command, "created": self.created.isoformat(), **self.values}

    def dumps(self) -> str:
        """JSON encoded report."""
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def dump(self, path: str | None = None):
        """Writes the report to `path` or to stdout."""
        if path is None:
            print(self.dumps(), file=sys.stdout, flush=True)
            return

        with open(path, "w", encoding="utf-8") as file:
            file.write(self.dumps() + "\n")
