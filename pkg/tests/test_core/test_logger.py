import logging

from core.logger import LevelFormatter, get_logger

FORMAT = "%(short_level)s/%(group)s] %(scope)s%(message)s"


def make_record(name: str) -> logging.LogRecord:
    return logging.LogRecord(name, logging.INFO, __file__, 1, "Scored %d", (3,), None)


class TestLevelFormatter:
    def test_grouped(self):
        get_logger("<gen-split>", group="stages")
        record = make_record("<gen-split>")

        assert LevelFormatter(FORMAT).format(record) == "INFO /stages] <gen-split> Scored 3"
        assert record.name == "<gen-split>"

    def test_ungrouped(self):
        record = make_record("modules.splitgen")

        assert LevelFormatter(FORMAT).format(record) == "INFO /modules.splitgen] Scored 3"
        assert record.name == "modules.splitgen"

    def test_record_shared_by_handlers(self):
        get_logger("<transfer>", group="stages")
        record = make_record("<transfer>")

        LevelFormatter(FORMAT).format(record)
        plain = logging.Formatter("%(name)s: %(message)s").format(record)

        assert plain == "<transfer>: Scored 3"

    def test_format_twice(self):
        get_logger("<transfer>", group="stages")
        record = make_record("<transfer>")
        formatter = LevelFormatter(FORMAT)

        assert formatter.format(record) == formatter.format(record)
