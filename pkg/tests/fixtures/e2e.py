import logging

import pytest
import simplejson as json

from core.flow import LabelCloudFlow
from core.settings import Settings
from main import main


def run_cli(argv: list[str], report: str) -> tuple[int, dict]:
    """Runs the command line with a report file, returns the exit code and the report."""
    # every run is a new process on the command line
    Settings.Persistent.keys.clear()
    code = main(["--report", report, *argv])
    LabelCloudFlow.instance = None

    try:
        with open(report, "r", encoding="utf-8") as file:
            return int(code), json.load(file)
    except FileNotFoundError:
        return int(code), {}


@pytest.fixture()
def cli(tmp_path):
    """Runs the command line, reports are written into the temporary directory."""
    counter = iter(range(1_000_000))

    def run(*argv: str) -> tuple[int, dict]:
        return run_cli(list(argv), str(tmp_path / f"report-{next(counter)}.json"))

    return run


@pytest.fixture(autouse=True, scope="function")
def check_logs(request, caplog):
    """Automatically checks logs from stages for errors."""
    param = getattr(request, "param", [])

    level = param[0] if len(param) >= 1 else logging.ERROR
    stages = param[1] if len(param) >= 2 else ["setup", "call", "teardown"]

    yield

    # checks all logs after test has completed
    for stage in stages:
        for record in caplog.get_records(stage):
            if record.levelno >= level:
                pytest.fail(f"Message with level {record.levelno} has been sent.")
