import numpy as np
import pytest
import simplejson as json
import yaml

from core.flow import LabelCloudFlow
from core.stages import Stages
from main import main
from modules.dataio import SequenceLayout, write_index_label_png


def write_yaml(path, document) -> str:
    path.write_text(yaml.safe_dump(document))
    return str(path)


def header(**kwargs) -> dict:
    return {"labelcloud": {"version": "v1", **kwargs}}


@pytest.fixture()
def offset_sequence(sequence) -> SequenceLayout:
    """Sequence with one image between two poses."""
    data = np.zeros((100, 100), dtype=np.uint8)
    for subdir in (SequenceLayout.IMAGES, SequenceLayout.INDEX_LABELS):
        write_index_label_png(sequence.path(subdir, "3.250000"), data)
    return sequence


class TestCommandLine:
    @pytest.mark.parametrize("check_logs", [(60,)], indirect=True)
    def test_no_arguments(self, capsys):
        assert main([]) == 2
        assert "usage" in capsys.readouterr().err

    @pytest.mark.parametrize("check_logs", [(60,)], indirect=True)
    @pytest.mark.parametrize(
        "argv",
        [
            ["transfer"],
            ["--threads", "many", "validate-sequence"],
            ["validate-sequence", "--unknown", "1"],
            ["--seed"],
        ],
    )
    def test_usage_errors(self, cli, argv):
        code, report = cli(*argv)

        assert code == 2
        assert report == {}

    @pytest.mark.parametrize("check_logs", [(60,)], indirect=True)
    def test_missing_parameter(self, cli):
        assert cli("validate-sequence") == (2, {})

    def test_report(self, cli, sequence):
        code, report = cli("--seed", "4", "validate-sequence", "--sequence", sequence.root)

        assert code == 0
        assert report["command"] == "validate-sequence"
        assert report["status"] == "ok"
        assert report["duration_s"] >= 0
        assert report["config"]["command"] == "validate-sequence"
        assert report["config"]["params"] == {
            "sequence": sequence.root,
            "pose_mode": "exact",
            "channels": 4,
        }
        assert report["config"]["settings"]["seed"] == 4

    def test_report_stdout(self, capsys, sequence):
        assert main(["validate-sequence", "--sequence", sequence.root]) == 0

        report = json.loads(capsys.readouterr().out)
        assert report["passed"] is True

    def test_print_config(self, cli, capsys, sequence):
        code, _ = cli("--print-config", "validate-sequence", "--sequence", sequence.root)

        assert code == 0
        lines = capsys.readouterr().err.splitlines()
        start = lines.index("{")
        printed = json.loads("\n".join(lines[start : lines.index("}", start) + 1]))
        assert printed["params"]["pose_mode"] == "exact"
        assert printed["settings"]["print_config"] is True

    def test_log_file(self, cli, tmp_path, sequence):
        log = tmp_path / "labelcloud.log"
        code, _ = cli("--log-file", str(log), "validate-sequence", "--sequence", sequence.root)

        assert code == 0
        assert "INFO /task] |>validate-sequence> Stage finished" in log.read_text(encoding="utf-8")

    def test_environment(self, cli, monkeypatch, sequence):
        monkeypatch.setenv("LABELCLOUD_SEQUENCE", sequence.root)
        code, report = cli("validate-sequence", "--sequence", "${LABELCLOUD_SEQUENCE}")

        assert code == 0
        assert report["config"]["params"]["sequence"] == sequence.root

    def test_flow_singleton(self, sequence):
        Stages.initialize(package="modules")
        LabelCloudFlow("validate-sequence", {"sequence": sequence.root})

        with pytest.raises(RuntimeError):
            LabelCloudFlow("validate-sequence", {"sequence": sequence.root})


class TestConfiguration:
    @staticmethod
    def validate(cli, config: str, sequence: SequenceLayout, *argv: str):
        return cli("--config", config, "validate-sequence", "--sequence", sequence.root, *argv)

    def test_stage_section(self, cli, tmp_path, offset_sequence):
        stages = {"validate-sequence": {"pose_mode": "interpolate"}}
        document = header(settings={"seed": 9}) | {"stages": stages}
        config = write_yaml(tmp_path / "config.yaml", document)

        code, report = self.validate(cli, config, offset_sequence)

        assert code == 0
        assert report["passed"] is True
        assert report["config"]["settings"]["seed"] == 9

    def test_command_line_wins(self, cli, tmp_path, offset_sequence):
        stages = {"validate-sequence": {"pose_mode": "interpolate", "sequence": "/nowhere"}}
        config = write_yaml(tmp_path / "config.yaml", header() | {"stages": stages})

        code, report = self.validate(cli, config, offset_sequence, "--pose-mode", "exact")

        assert code == 1
        assert report["violations"]["kinds"] == {"no pose for timestamp": 1}

    def test_log_settings(self, cli, tmp_path, sequence):
        log = tmp_path / "run.log"
        settings = {"log_file": str(log), "log_level": "debug"}
        config = write_yaml(tmp_path / "config.yaml", header(settings=settings))

        code, _ = self.validate(cli, config, sequence)

        assert code == 0
        assert f"Writing logs to file {log}." in log.read_text(encoding="utf-8")
        assert "Stage finished" in log.read_text(encoding="utf-8")

    def test_extends(self, cli, tmp_path, offset_sequence):
        base = write_yaml(
            tmp_path / "base.yaml",
            {"stages": {"validate-sequence": {"pose_mode": "interpolate", "channels": 3}}},
        )
        config = write_yaml(
            tmp_path / "config.yaml",
            header(extends=[base]) | {"stages": {"validate-sequence": {"channels": 4}}},
        )

        code, report = self.validate(cli, config, offset_sequence)

        assert code == 0
        assert report["config"]["params"]["pose_mode"] == "interpolate"
        assert report["config"]["params"]["channels"] == 4

    def test_env_section(self, cli, monkeypatch, tmp_path, sequence):
        monkeypatch.setenv("LABELCLOUD_SEED", "0")
        config = write_yaml(tmp_path / "config.yaml", header() | {"env": {"LABELCLOUD_SEED": "5"}})

        code, report = self.validate(cli, config, sequence)

        assert code == 0
        assert report["config"]["settings"]["seed"] == 5

    @pytest.mark.parametrize("check_logs", [(60,)], indirect=True)
    @pytest.mark.parametrize(
        "document",
        [
            "labelcloud: [unclosed",
            "- a list",
            yaml.safe_dump({"labelcloud": {"version": "v2"}}),
            yaml.safe_dump(header(settings={"threads": "many"})),
            yaml.safe_dump(header() | {"stages": {"transfer": {}}}),
            yaml.safe_dump(header() | {"stages": {"validate-sequence": {"channel": 3}}}),
        ],
    )
    def test_invalid(self, cli, tmp_path, sequence, document):
        config = tmp_path / "config.yaml"
        config.write_text(document)

        assert self.validate(cli, str(config), sequence) == (2, {})

    @pytest.mark.parametrize("check_logs", [(60,)], indirect=True)
    def test_missing_file(self, cli, tmp_path, sequence):
        assert self.validate(cli, str(tmp_path / "none.yaml"), sequence) == (2, {})
