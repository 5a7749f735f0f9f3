"""Setup settings and logging for LabelCloud before loading core modules."""

import argparse

from voluptuous import Invalid, Optional
from voluptuous.schema_builder import Undefined

import core.logger
from core.helpers import flag_name
from core.settings import Settings


def is_boolean(validator) -> bool:
    """Checks for voluptuous `Boolean()` validators."""
    return getattr(validator, "__name__", None) == "Boolean"


def is_list(validator) -> bool:
    """Checks for `AlwaysList` validators, which accept several values."""
    return validator.__class__.__name__ == "AlwaysList"


def as_type(validator):
    """Wraps a validator for argparse, which reports ArgumentTypeErrors as usage errors."""

    def convert(value):
        try:
            return validator(value)
        except (Invalid, ValueError, TypeError) as e:
            raise argparse.ArgumentTypeError(f"invalid value `{value}`: {e}") from e

    convert.__name__ = getattr(validator, "__name__", validator.__class__.__name__)
    return convert


def add_flag(parser: argparse.ArgumentParser, key: str, validator, switch=False, **kwargs):
    """Adds a flag mirroring a settings or parameter key.

    Boolean `switch` flags take no value, so they can precede the subcommand."""
    if is_boolean(validator) and switch:
        kwargs.pop("type", None)
        kwargs |= {"action": "store_const", "const": True}
    elif is_boolean(validator):
        kwargs |= {"nargs": "?", "const": True}
    elif is_list(validator):
        kwargs |= {"nargs": "+"}

    parser.add_argument(flag_name(key), dest=key, default=argparse.SUPPRESS, **kwargs)


def build_parser() -> argparse.ArgumentParser:
    """Generates the argument parser from Settings and the registered stages."""
    # defined here because of import loops
    from core.stages import Stages, schema_docs  # pylint: disable=C0415

    parser = argparse.ArgumentParser(
        prog="labelcloud",
        description="Transfers 2D semantic labels onto 3D clouds and builds benchmark splits.",
    )
    for k, v in Settings.__annotations__.items():
        default = str(getattr(Settings, k)).replace("%", "%%")
        add_flag(parser, k, v, switch=True, type=as_type(v), help=f"(default: {default})")

    subparsers = parser.add_subparsers(dest="command", metavar="command")

    for command in Stages.commands():
        cls = Stages.get_stage_cls(command)
        docs = schema_docs(cls)
        doc = (cls.__doc__ or "").strip().replace("%", "%%")

        sub = subparsers.add_parser(command, help=doc.split("\n")[0], description=doc)
        for key, validator in cls.params_schema().items():
            name = getattr(key, "schema", key)
            text = docs.get(name, "")

            if isinstance(key, Optional) and not isinstance(key.default, Undefined):
                text = f"{text} (default: {key.default()})"
            else:
                text = f"{text} (required)"

            add_flag(sub, name, validator, help=text.replace("%", "%%"))

    return parser


# defined here because of import loops
def load_argv(argv: list[str] = None) -> tuple[str | None, dict]:
    """Loads commandline arguments as settings, returns the subcommand and its parameters."""
    parser = build_parser()
    namespace = vars(parser.parse_args(argv))

    command = namespace.pop("command", None)

    for k in list(namespace):
        if k in Settings.__annotations__:
            # only set if variable has been passed as argument
            Settings.set(k, namespace.pop(k), persistent=True)

    return command, namespace
