"""Logging for the command line.

Records go to stderr (stdout carries the JSON run report) and optionally to a log file.
Loggers of stages and modules keep no level of their own, the root level set from
`Settings.log_level` applies to all of them."""

import logging
import sys

from core.settings import Settings

HANDLERS: list[logging.Handler] = []


class LevelFormatter(logging.Formatter):
    """Formatter with short level names and emojis.

    Adds the fields `emoji`, `short_level`, `group` and `scope` to each record. A logger with
    a `group` is printed under the group name, its own name moves in front of the message as
    `scope`, e.g. `[... INFO /stages] <gen-split> Scored 1000 candidates`. Other loggers use
    their name as `group`. `record.name` is left as is for other handlers."""

    EMOJI_LEVELS = {
        logging.DEBUG: "🔍",
        logging.INFO: "🟢",
        logging.WARNING: "🟠",
        logging.ERROR: "🔴",
        logging.CRITICAL: "🔥",
    }
    SHORT_LEVELS = {
        logging.DEBUG: "DEBUG",
        logging.INFO: "INFO ",
        logging.WARNING: "WARN ",
        logging.ERROR: "ERROR",
        logging.CRITICAL: "CRIT ",
    }

    def format(self, record):
        record.emoji = self.EMOJI_LEVELS.get(record.levelno, "🐛")
        record.short_level = self.SHORT_LEVELS.get(record.levelno, "NOLVL")
        record.group = record.name
        record.scope = ""

        if group := getattr(logging.getLogger(record.name), "group", None):
            record.group = group
            record.scope = f"{record.name} "

        return super().format(record)


def get_logger(name: str = "", group: str = None) -> logging.Logger:
    """Returns the logger `name`, printed under `group` if one is given."""
    logger = logging.getLogger(name)
    if group is not None:
        logger.group = group

    return logger


def configure():
    """Replaces the LabelCloud handlers on the root logger with ones built from Settings.

    Runs on import and again whenever argv or a configuration file change log settings."""
    root = logging.getLogger()

    # the file is opened first, the old handlers stay if that fails
    handlers = [logging.StreamHandler(sys.stderr)]
    if path := Settings.log_file:
        handlers.append(logging.FileHandler(path, encoding="utf-8"))

    for handler in HANDLERS:
        root.removeHandler(handler)
        handler.close()
    HANDLERS[:] = handlers

    formatter = LevelFormatter(Settings.log_format)
    for handler in HANDLERS:
        handler.setFormatter(formatter)
        root.addHandler(handler)

    root.setLevel(Settings.log_level)

    if path:
        logging.getLogger("flow").debug("Writing logs to file %s.", path)


configure()
