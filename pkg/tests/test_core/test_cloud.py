import numpy as np
import pytest

from core.cloud import CameraFrame, LabeledCloud, LabelRaster, modes_from_histograms
from core.errors import (
    DataFormatError,
    FrameWithoutPoseError,
    MissingTimestampsError,
    UnknownClassIndexError,
)
from core.geometry import Pose
from core.ontology import IGNORE
from tests.fixtures.scenes import small_camera


class TestModes:
    def test_majority(self):
        # two votes for trunk against one for foliage
        histograms = np.zeros((1, 15), dtype=np.int64)
        histograms[0, 13], histograms[0, 12] = 2, 1

        assert modes_from_histograms(histograms).tolist() == [13]

    def test_tie_lowest_index(self):
        assert modes_from_histograms([[0, 3, 3], [1, 0, 1]]).tolist() == [1, 0]

    def test_empty_row(self):
        assert modes_from_histograms([[0, 0, 0], [0, 0, 4]]).tolist() == [IGNORE, 2]


class TestLabeledCloud:
    def test_derives_modes(self):
        cloud = LabeledCloud(np.zeros((2, 3)), histograms=[[1, 2], [3, 0]])

        assert cloud.modes.tolist() == [1, 0]
        assert cloud.num_classes == 2

    def test_inconsistent_modes(self):
        with pytest.raises(DataFormatError):
            LabeledCloud(np.zeros((2, 3)), histograms=[[1, 2], [3, 0]], modes=[0, 0])

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"times": [0.0]},
            {"intensity": [0.0, 1.0, 2.0]},
            {"histograms": [[1, 0]]},
            {"histograms": [[1, 0], [-1, 2]]},
            {"modes": [1]},
        ],
    )
    def test_length_mismatch(self, kwargs):
        with pytest.raises(DataFormatError):
            LabeledCloud(np.zeros((2, 3)), **kwargs)

    def test_require_times(self):
        with pytest.raises(MissingTimestampsError):
            LabeledCloud(np.zeros((1, 3))).require_times()

        assert LabeledCloud(np.zeros((1, 3)), times=[4.0]).require_times().tolist() == [4.0]

    def test_subset(self):
        cloud = LabeledCloud(
            np.arange(9).reshape(3, 3), times=[0, 1, 2], histograms=[[1, 0], [0, 1], [0, 0]]
        )
        part = cloud.subset(np.array([False, True, True]))

        assert len(part) == 2
        assert part.times.tolist() == [1, 2]
        assert part.modes.tolist() == [1, IGNORE]
        assert part.intensity is None

    def test_with_histograms(self):
        cloud = LabeledCloud(np.zeros((1, 3)), modes=[4])
        assert cloud.with_histograms([[0, 5]]).modes.tolist() == [1]

    def test_in_frame(self):
        cloud = LabeledCloud([[1.0, 2.0, 3.0]])
        assert cloud.in_frame(Pose(0, [1, 1, 1])).points.tolist() == [[0, 1, 2]]


class TestLabelRaster:
    def test_validate(self):
        data = np.zeros((4, 4), dtype=np.uint8)
        data[0, :2] = 200
        data[1, 0] = IGNORE

        with pytest.raises(UnknownClassIndexError) as e:
            LabelRaster(data).validate(15)

        assert e.value.values == {200: 2}

    def test_not_2d(self):
        with pytest.raises(DataFormatError):
            LabelRaster(np.zeros((2, 2, 3)))

    def test_lookup(self):
        raster = LabelRaster(np.arange(6).reshape(2, 3))
        assert raster.lookup([[0.0, 0.0], [2.9, 1.5], [1.0, 0.99]]).tolist() == [0, 5, 1]


class TestCameraFrame:
    def test_size_mismatch(self):
        with pytest.raises(DataFormatError):
            CameraFrame(0.0, LabelRaster(np.zeros((10, 10))), small_camera())

    def test_without_pose(self):
        frame = CameraFrame(0.0, LabelRaster(np.zeros((100, 100))), small_camera())

        with pytest.raises(FrameWithoutPoseError):
            _ = frame.camera_pose
