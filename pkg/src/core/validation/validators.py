"""Validators for the variables and structures."""

# pylint: disable=R0903
import logging
import math
import os
import re
import typing

from voluptuous import PREVENT_EXTRA
from voluptuous.error import ValueInvalid
from voluptuous.schema_builder import Schema
from voluptuous.validators import All, Coerce, Range

__all__ = [
    "AlwaysList",
    "EnvironmentVar",
    "TimeToSeconds",
    "LogLevel",
    "Ratios",
    "Positive",
    "NonNegative",
]


class AlwaysList(Schema):  # pylint: disable=R0903
    """The final result will be a list.

    You can set this field to either a single value if there is only one item
    or a list of the same value types."""

    def __init__(self, schema=object, required=True, extra=PREVENT_EXTRA):
        _s = Coerce(lambda s: [s] if not isinstance(s, list) else s)
        if schema:
            _s = All(_s, [schema])

        super().__init__(_s, required=required, extra=extra)
        self.schema = [schema]

    def __repr__(self):
        return f"!{self.schema}"


class EnvironmentVar:
    """Schema for expanding environment variables.

    Use the `${...}` syntax to define environment variables, which are loaded on runtime.

    It is also possible to nest env variable that holds others,
    as these are evaluated recursively (with a max depth of 16)."""

    def __init__(self, return_type: typing.Callable = str, max_depth=16):
        assert isinstance(max_depth, int)
        self._max_depth = max_depth
        self.schema = return_type

    def __call__(self, value: str, max_depth=None) -> str:
        """Recursively expand environment variables."""
        if max_depth is None:
            max_depth = self._max_depth

        if max_depth < 0:
            raise ValueInvalid("Max depth reached while expanding environment variables.")

        value = str(value)
        if (new := os.path.expanduser(os.path.expandvars(value))) == value:
            return self.schema(value)
        return self(new, max_depth - 1)

    def __repr__(self):
        return "str [Environment]"


class TimeToSeconds:
    """Schema for converting time strings to seconds.

    By default, the field accepts a decimal or a float specifying the amount of time in seconds.

    Shorter or longer spans can be set with [int|decimal] + [unit], e.g. `500ms`.
    Possible options are:
    `ms` (milliseconds), `s` (seconds), `m` (minutes), `h` (hours) and `d` (days).

    Combine multiple units with `:`, e.g. `1m:30s` for 1 minute and 30 seconds.
    """

    FACTORS = {"ms": 0.001, "s": 1, "m": 60, "h": 3600, "d": 86400}

    def __call__(self, value: str | int | float) -> int | float:
        """Transforms a time string to seconds."""
        if isinstance(value, bool):
            raise ValueInvalid(f"`{value}` is not a time span")

        if isinstance(value, str):
            if value.removeprefix("-").isdigit():
                return int(value)
            if value.removeprefix("-").replace(".", "", 1).isdigit():
                return float(value)

            result = 0

            for part in value.split(":"):
                if not part.strip():
                    continue

                try:
                    match = re.fullmatch(r"-?(\d+(?:\.\d+)?)([a-zA-Z]+)", part.strip().lower())
                    val, unit = match.group(1), match.group(2)
                    result += float(val) * self.FACTORS[unit]

                except Exception as e:
                    err_msg = f"Invalid time format `{part}` not parsable!"
                    raise ValueInvalid(err_msg, path=[]) from e

            value = -result if value.startswith("-") else result

        if not isinstance(value, (int, float)) or not math.isfinite(value):
            raise ValueInvalid(f"`{value}` is not a finite time span")

        return value

    def __repr__(self):
        return "Duration()"


class LogLevel:
    """Schema for a logging level, given as number or as name, e.g. `DEBUG`."""

    def __call__(self, value: str | int) -> int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value

        name = str(value).strip()
        if name.isdigit():
            return int(name)

        if isinstance(level := logging.getLevelName(name.upper()), int):
            return level

        raise ValueInvalid(f"`{value}` is not a known log level")

    def __repr__(self):
        return "LogLevel()"


class Ratios:
    """Schema for a list of positive fractions that sum up to one.

    A comma separated string is accepted as well, e.g. `0.7,0.15,0.15`."""

    def __init__(self, length: int = 3, tolerance: float = 1e-6):
        self.length = length
        self.tolerance = tolerance

    def __call__(self, value) -> list[float]:
        if isinstance(value, str):
            value = value.split(",")

        try:
            ratios = [float(v) for v in value]
        except (TypeError, ValueError) as e:
            raise ValueInvalid(f"`{value}` is not a list of numbers") from e

        if len(ratios) != self.length:
            raise ValueInvalid(f"Expected {self.length} ratios, got {len(ratios)}")

        if any(not math.isfinite(r) or r <= 0 for r in ratios):
            raise ValueInvalid("Ratios must be positive")

        if abs(sum(ratios) - 1) > self.tolerance:
            raise ValueInvalid(f"Ratios must sum up to 1, got {sum(ratios):.6f}")

        return ratios

    def __repr__(self):
        return f"Ratios({self.length})"


def Positive():  # pylint: disable=C0103
    """Float strictly greater than zero."""
    return All(Coerce(float), Range(min=0, min_included=False))


def NonNegative():  # pylint: disable=C0103
    """Float greater than or equal to zero."""
    return All(Coerce(float), Range(min=0))
