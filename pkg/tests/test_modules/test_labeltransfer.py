import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from core.cloud import CameraFrame, LabeledCloud
from core.errors import (
    FrameWithoutPoseError,
    InsufficientPointsError,
    MissingTimestampsError,
    NoFramesError,
    ShapeMismatchError,
)
from core.geometry import Trajectory
from core.ontology import IGNORE, ONTOLOGY
from modules.dataio import (
    SequenceLayout,
    read_cloud_bin,
    read_histogram_csv,
    read_label_file,
    write_index_label_png,
)
from modules.labeltransfer import (
    FrameSampleRule,
    SubmapSpec,
    extract_submap,
    histogram_summary,
    load_frames,
    merge_histograms,
    sample_frames,
    transfer_labels,
)
from tests.fixtures.scenes import (
    FOLIAGE,
    TRUNK,
    frame_at,
    histogram_oracle,
    plane_normals,
    uniform_raster,
)


def straight_walk(n: int, speed: float = 1.0) -> Trajectory:
    times = np.arange(float(n))
    positions = np.column_stack([speed * times, np.zeros(n), np.zeros(n)])
    return Trajectory(times, positions, np.tile([0, 0, 0, 1], (n, 1)))


class TestSampleFrames:
    def test_distance(self):
        assert sample_frames(straight_walk(13)) == [0.0, 5.0, 10.0]

    def test_heading(self):
        yaws = Rotation.from_euler("z", np.arange(13), degrees=True)
        trajectory = Trajectory(np.arange(13.0), np.zeros((13, 3)), yaws.as_quat())

        assert sample_frames(trajectory) == [0.0, 5.0, 10.0]

    def test_heading_wraps(self):
        yaws = Rotation.from_euler("z", [178, 181, 184], degrees=True)
        trajectory = Trajectory([0.0, 1.0, 2.0], np.zeros((3, 3)), yaws.as_quat())

        assert sample_frames(trajectory) == [0.0, 2.0]

    def test_short(self):
        assert sample_frames(straight_walk(2)) == [0.0]

    def test_custom_rule(self):
        rule = FrameSampleRule(distance_step=2.0, heading_step=90.0)
        assert sample_frames(straight_walk(6), rule) == [0.0, 2.0, 4.0]

    def test_single_pose(self):
        with pytest.raises(InsufficientPointsError):
            sample_frames(straight_walk(1))

    def test_invalid_rule(self):
        with pytest.raises(ValueError):
            FrameSampleRule(distance_step=0.0)


class TestExtractSubmap:
    @pytest.fixture()
    def cloud(self):
        points = [
            [50.0, 50.0, 0.0],  # 50 m from the sensor
            [55.0, 1.5, 0.0],  # 1.5 m from the carrier at its observation time
            [60.0, 0.0, 0.0],  # 10 m from the sensor, 5 m from the carrier
            [52.0, 0.0, 0.0],  # observed 2 s after the frame
        ]
        return LabeledCloud(points, times=[5.0, 5.5, 5.5, 7.0])

    def test_predicates(self, cloud):
        submap = extract_submap(cloud, 5.0, straight_walk(11, speed=10.0))

        assert submap.points.tolist() == [[10.0, 0.0, 0.0]]
        assert submap.times.tolist() == [5.5]

    def test_larger_window(self, cloud):
        spec = SubmapSpec(time_window=2.0)
        submap = extract_submap(cloud, 5.0, straight_walk(11, speed=10.0), spec)

        assert submap.points.tolist() == [[10.0, 0.0, 0.0], [2.0, 0.0, 0.0]]

    def test_empty(self, cloud):
        assert len(extract_submap(cloud, 0.0, straight_walk(11, speed=10.0))) == 0

    def test_requires_times(self):
        with pytest.raises(MissingTimestampsError):
            extract_submap(LabeledCloud(np.zeros((1, 3))), 0.0, straight_walk(2))

    @pytest.mark.parametrize("kwargs", [{"radius": 1.0}, {"time_window": -1.0}])
    def test_invalid_submap_radii(self, kwargs):
        with pytest.raises(ValueError):
            SubmapSpec(**kwargs)


class TestMergeHistograms:
    def test_zero_part(self):
        part = np.array([[1, 0, 2], [0, 3, 0]])
        assert merge_histograms([part, np.zeros_like(part)]).tolist() == part.tolist()

    def test_sum(self):
        assert merge_histograms([[[1, 2]], [[3, 4]], [[0, 1]]]).tolist() == [[4, 7]]

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            merge_histograms([np.zeros((2, 3)), np.zeros((3, 3))])

    def test_nothing(self):
        with pytest.raises(ShapeMismatchError):
            merge_histograms([])


class TestTransferLabels:
    def test_majority_vote(self):
        cloud = LabeledCloud([[0.0, 0.0, 5.0]])
        frames = [
            frame_at([0.0, 0.0, 0.0], uniform_raster(TRUNK), 0.0),
            frame_at([0.2, 0.0, 0.0], uniform_raster(TRUNK), 1.0),
            frame_at([-0.2, 0.0, 0.0], uniform_raster(FOLIAGE), 2.0),
        ]
        labelled = transfer_labels(cloud, frames)

        assert labelled.histograms[0, TRUNK] == 2
        assert labelled.histograms[0, FOLIAGE] == 1
        assert labelled.modes.tolist() == [TRUNK]

    def test_behind_dropped(self):
        cloud = LabeledCloud([[0.0, 0.0, 5.0], [0.0, 0.0, -5.0]])
        labelled = transfer_labels(cloud, [frame_at([0, 0, 0], uniform_raster(TRUNK))])

        assert labelled.points.tolist() == [[0.0, 0.0, 5.0]]

    def test_unlabelled_pixels(self):
        cloud = LabeledCloud([[0.0, 0.0, 5.0]])
        labelled = transfer_labels(cloud, [frame_at([0, 0, 0], uniform_raster(IGNORE))])

        assert len(labelled) == 0

    def test_plane_scene(self, plane_scene):
        cloud, frames = plane_scene
        labelled = transfer_labels(cloud, frames)

        assert len(labelled) == 25
        assert np.array_equal(labelled.histograms, histogram_oracle(cloud.points, frames))

        x = cloud.points[:, 0]
        assert (labelled.histograms.sum(axis=1) == 2).all()
        assert (labelled.modes[x < 0] == TRUNK).all()
        assert (labelled.modes[x >= 0] == FOLIAGE).all()

    def test_facing_normals(self, plane_scene):
        cloud, frames = plane_scene
        facing = transfer_labels(cloud, frames, normals=plane_normals(25))

        assert np.array_equal(facing.histograms, histogram_oracle(cloud.points, frames))

        away = transfer_labels(cloud, frames, normals=-plane_normals(25), slack_deg=0)
        assert len(away) == 0

    def test_normals_from_trajectory(self, plane_scene, still_trajectory):
        cloud, frames = plane_scene
        labelled = transfer_labels(cloud, frames, trajectory=still_trajectory, k=5)

        assert len(labelled) == 25

    @pytest.mark.parametrize("threads", [2, 8])
    def test_executor(self, plane_scene, threads):
        cloud, frames = plane_scene
        serial = transfer_labels(cloud, frames)

        with ThreadPoolExecutor(threads) as executor:
            parallel = transfer_labels(cloud, frames, executor=executor)

        assert np.array_equal(serial.histograms, parallel.histograms)

    def test_no_frames(self, plane_scene):
        with pytest.raises(NoFramesError):
            transfer_labels(plane_scene[0], [])

    def test_frame_without_pose(self, plane_scene):
        cloud, frames = plane_scene
        unposed = CameraFrame(2.0, frames[0].raster, frames[0].camera)

        with pytest.raises(FrameWithoutPoseError):
            transfer_labels(cloud, [*frames, unposed])

    def test_summary(self):
        histograms = np.zeros((3, ONTOLOGY.num_classes), dtype=np.int64)
        histograms[0, TRUNK] = 2
        histograms[1, [TRUNK, FOLIAGE]] = 1

        summary = histogram_summary(histograms)
        assert summary["hits"] == 4
        assert summary["ambiguous"] == 1
        assert summary["per_class"]["tree-trunk"] == 3


class TestLoadFrames:
    def test_sequence(self, sequence):
        frames = load_frames(sequence)

        assert [f.timestamp for f in frames] == [1.0, 2.0, 3.0]
        assert [f.pose.position[0] for f in frames] == [-0.5, 0.0, 0.5]

    def test_frame_without_pose(self, sequence):
        raster = np.zeros((100, 100), dtype=np.uint8)
        write_index_label_png(sequence.path(SequenceLayout.INDEX_LABELS, "10.000000"), raster)

        frames = load_frames(sequence)
        assert frames[-1].timestamp == 10.0
        assert frames[-1].pose is None

    def test_interpolated(self, sequence):
        raster = np.zeros((100, 100), dtype=np.uint8)
        write_index_label_png(sequence.path(SequenceLayout.INDEX_LABELS, "1.250000"), raster)

        frames = load_frames(sequence, pose_mode="interpolate")
        assert frames[1].pose.position[0] == pytest.approx(-0.375)


class TestStages:
    def test_sample_frames(self, cli, sequence, tmp_path):
        code, report = cli(
            "sample-frames",
            "--sequence",
            sequence.root,
            "--distance-step",
            "0.5",
            "--output",
            str(tmp_path / "out"),
        )

        assert code == 0
        assert report["frames"] == {"count": 5, "poses": 9}
        with open(report["output"], encoding="utf-8") as file:
            stems = file.read().split()

        assert stems == ["0.000000", "1.000000", "2.000000", "3.000000", "4.000000"]

    def test_extract_submaps(self, cli, sequence, tmp_path):
        out = str(tmp_path / "submaps")
        code, report = cli(
            "extract-submaps",
            "--sequence",
            sequence.root,
            "--time-window",
            "500ms",
            "--output",
            out,
        )

        assert code == 0
        assert report["submaps"]["count"] == 3
        assert report["submaps"]["empty"] == 2
        assert report["submaps"]["points"]["2.000000"] == 49

        submap = read_cloud_bin(os.path.join(out, "Clouds", "2.000000.bin"))
        assert len(submap) == 49

    def test_transfer_global(self, cli, sequence, tmp_path):
        out = str(tmp_path / "labelled")
        code, report = cli("transfer-labels", "--sequence", sequence.root, "--output", out)

        assert code == 0
        assert report["frames"] == 3
        assert report["points"] == {"total": 49, "kept": 49, "dropped": 0, "ambiguous": 7}
        assert report["hits"]["total"] == 147
        assert report["hits"]["per_class"]["tree-trunk"] == 70
        assert report["hits"]["per_class"]["tree-foliage"] == 77

        histograms = read_histogram_csv(os.path.join(out, "map.csv"))
        modes = ONTOLOGY.merge_raw(read_label_file(os.path.join(out, "map.label")))
        assert histograms.sum() == 147
        assert np.array_equal(modes, np.argmax(histograms, axis=1))

    def test_transfer_submaps(self, cli, sequence, tmp_path):
        out = str(tmp_path / "labelled")
        code, report = cli(
            "transfer-labels", "--sequence", sequence.root, "--mode", "submap", "--output", out
        )

        assert code == 0
        assert report["points"]["total"] == 147
        assert report["points"]["kept"] == 147
        assert report["hits"]["total"] == 441

        target = SequenceLayout(out)
        assert target.stems(SequenceLayout.LABELS) == ["1.000000", "2.000000", "3.000000"]
        assert len(read_cloud_bin(target.path(SequenceLayout.CLOUDS, "1.000000"))) == 49

    def test_threads_identical(self, cli, sequence, tmp_path):
        outputs = []
        for threads in ("1", "4", "8"):
            out = tmp_path / f"threads-{threads}"
            code, _ = cli(
                "--threads",
                threads,
                "transfer-labels",
                "--sequence",
                sequence.root,
                "--output",
                str(out),
            )
            assert code == 0
            outputs.append(out)

        for name in ("map.label", "map.csv", "map.bin"):
            contents = {(out / name).read_bytes() for out in outputs}
            assert len(contents) == 1

    @pytest.mark.parametrize("check_logs", [(60,)], indirect=True)
    def test_invalid_gamma(self, cli, sequence):
        code, report = cli("transfer-labels", "--sequence", sequence.root, "--gamma", "0.5")

        assert code == 2
        assert report == {}

    @pytest.mark.parametrize("check_logs", [(60,)], indirect=True)
    def test_unposed_frame_fails(self, cli, sequence, tmp_path):
        raster = np.zeros((100, 100), dtype=np.uint8)
        write_index_label_png(sequence.path(SequenceLayout.INDEX_LABELS, "10.000000"), raster)

        code, report = cli(
            "transfer-labels", "--sequence", sequence.root, "--output", str(tmp_path / "out")
        )

        assert code == 1
        assert report["status"] == "failed"
        assert report["error"]["type"] == "FrameWithoutPoseError"
