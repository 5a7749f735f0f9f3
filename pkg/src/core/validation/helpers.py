"""Helper methods for validation."""

# pylint: disable=R0903
import difflib
import logging
import sys

from voluptuous.error import Invalid, MultipleInvalid
from voluptuous.schema_builder import Schemable

__all__ = ["walk_similar_key", "print_validation_error", "validate"]


def walk_similar_key(schema, config, path, key):
    """Finds a matching key to the provided path's key."""
    group = schema.schema

    for p in path:
        try:
            group = group[p]
            config = config[p]
        except (KeyError, IndexError, TypeError):
            return None

        # get internal Schemable
        while hasattr(group, "schema"):
            group = getattr(group, "schema")

    keys = [str(getattr(k, "schema", k)) for k in group.keys()] if isinstance(group, dict) else []

    if matches := difflib.get_close_matches(str(key), keys, n=1, cutoff=0.5):
        value = str(config.get(key, "")).encode("unicode_escape").decode()
        value = f"{value[:55]}..." if len(value) > 55 else value
        return matches, value

    return None


def print_validation_error(schema, configuration, errors, scope: str = "config"):
    """Display a formatted explanation of an exception with its schema options."""

    errors = errors.errors if isinstance(errors, MultipleInvalid) else [errors]

    for error in errors:
        # extract invalid item's path
        try:
            *path, key = error.path
            field = "".join(f"[{s}]" for s in [scope, *path]) + f" > {key}"
        except ValueError:
            path, key = [], None
            field = f"[{scope}]"

        cls = f"[{error.__class__.__name__}] "
        print(f"{cls:╴<25}┬🠆 Field: {field}", file=sys.stderr, flush=True)

        # hint for misspelled keys
        if error.msg == "extra keys not allowed" and key:
            if found := walk_similar_key(schema, configuration, path, key):
                matches, value = found
                msg = f"{error.msg}. Did you mean: `{matches[0]}: {value}`?"
            else:
                msg = f"{error.msg}. No close matches found for `{key}`"

            error.args = (msg, *error.args[1:])

        msg = error.msg if error.msg.endswith((".", "!", "?")) else f"{error.msg}."
        print(f"{'':<25}└🠆 Error: {msg}", file=sys.stderr, flush=True)


def validate(configuration: dict, validator: Schemable, scope: str = "config"):
    """Validates the configuration against a schema, exits with code 2 on failure."""
    logger = logging.getLogger("flow")
    logger.debug("Validating %s...", scope)

    if not isinstance(configuration, dict):
        logger.critical("Expected a mapping for %s, got %s.", scope, type(configuration).__name__)
        sys.exit(2)

    configuration = configuration.copy()

    try:
        return validator(configuration)

    except Invalid as e:
        print_validation_error(validator, configuration, e, scope)

        logger.critical("Invalid %s, see `--help` or docs/FORMATS.md for details.", scope)
        sys.exit(2)
