"""Synthetic sequence directory: a labelled plane seen by three frames."""

import os

import numpy as np
import pytest

from core.cloud import LabeledCloud
from core.geometry import CameraModel, Trajectory
from core.ontology import IGNORE, ONTOLOGY
from modules.dataio import (
    SequenceLayout,
    write_calibration,
    write_cloud_bin,
    write_histogram_csv,
    write_index_label_png,
    write_label_file,
    write_poses_csv,
    write_times,
)
from tests.fixtures.scenes import FOLIAGE, TRUNK, plane_grid

FRAME_TIMES = (1.0, 2.0, 3.0)
POSE_TIMES = tuple(np.arange(0.0, 4.01, 0.5))


def sequence_camera() -> CameraModel:
    """Camera of the synthetic sequence."""
    return CameraModel(fx=50.0, fy=50.0, cx=50.0, cy=50.0, width=100, height=100)


def sequence_trajectory(times=POSE_TIMES) -> Trajectory:
    """Walk along x at 0.5 m/s, looking along +z."""
    times = np.asarray(times, dtype=np.float64)
    positions = np.column_stack([0.5 * (times - 2.0), np.zeros(len(times)), np.zeros(len(times))])
    return Trajectory(times, positions, np.tile([0.0, 0.0, 0.0, 1.0], (len(times), 1)))


def label_image(camera: CameraModel) -> np.ndarray:
    """Left half trunk, right half foliage, the top rows unlabelled."""
    data = np.full((camera.height, camera.width), FOLIAGE, dtype=np.uint8)
    data[:, : camera.width // 2] = TRUNK
    data[:5] = IGNORE
    return data


def write_sequence(root: str) -> SequenceLayout:
    """Writes the synthetic sequence into `root`."""
    layout = SequenceLayout(root)
    camera = sequence_camera()

    for subdir in SequenceLayout.SUFFIXES:
        os.makedirs(layout.path(subdir), exist_ok=True)

    write_poses_csv(layout.poses_path, sequence_trajectory())
    write_calibration(layout.calibration_path, camera)

    points = plane_grid(n=7, half=3.0)
    intensity = np.linspace(0.0, 1.0, len(points))

    write_cloud_bin(os.path.join(root, "map.bin"), LabeledCloud(points, intensity=intensity))
    write_times(os.path.join(root, "map.times"), np.full(len(points), 2.0))

    labels = label_image(camera)
    histograms = np.zeros((len(points), ONTOLOGY.num_classes), dtype=np.int64)
    histograms[:, TRUNK] = 1

    for t in FRAME_TIMES:
        stem = layout.stem(t)
        write_index_label_png(layout.path(SequenceLayout.INDEX_LABELS, stem), labels)
        write_index_label_png(layout.path(SequenceLayout.IMAGES, stem), np.full_like(labels, 128))
        write_index_label_png(layout.path(SequenceLayout.LABEL_IMAGES, stem), labels)

        local = points - [0.5 * (t - 2.0), 0.0, 0.0]
        write_cloud_bin(layout.path(SequenceLayout.CLOUDS, stem), LabeledCloud(local))
        write_times(os.path.join(layout.path(SequenceLayout.CLOUDS), f"{stem}.times"), [t] * 49)
        write_label_file(
            layout.path(SequenceLayout.LABELS, stem), ONTOLOGY.to_raw(np.full(49, TRUNK))
        )
        write_histogram_csv(layout.path(SequenceLayout.HISTS, stem), histograms)

    return layout


@pytest.fixture()
def sequence(tmp_path) -> SequenceLayout:
    """Synthetic sequence in a temporary directory."""
    return write_sequence(str(tmp_path / "V-01"))
