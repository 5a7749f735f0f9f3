"""Readers and writers for sequence files.

Binary files are little-endian: clouds hold float32 records (x, y, z, intensity),
`.label` files one uint32 per point whose lower 16 bits are the raw class index and
`.times` files one float64 observation time per point."""

import csv
import math
import os
from dataclasses import dataclass
from functools import cached_property

import imageio.v3 as iio
import numpy as np
import yaml
from voluptuous import Invalid, MultipleInvalid

from core.cloud import LabeledCloud, LabelRaster
from core.errors import (
    DataFormatError,
    DataReadError,
    DuplicateTimestampError,
    MalformedBinError,
    MalformedLabelError,
    MissingColumnError,
    MissingFieldError,
    NonFiniteValueError,
    RowLengthMismatchError,
)
from core.geometry import CameraModel, Pose, Trajectory
from core.logger import get_logger
from core.ontology import ONTOLOGY, ClassOntology
from core.validation.schemas import CalibrationSchema

logger = get_logger("dataio")

CLOUD_DTYPE = np.dtype("<f4")
LABEL_DTYPE = np.dtype("<u4")
TIMES_DTYPE = np.dtype("<f8")
POSE_COLUMNS = ("timestamp", "x", "y", "z", "qx", "qy", "qz", "qw")


def _read_bytes(path: str) -> bytes:
    try:
        with open(path, "rb") as file:
            return file.read()
    except OSError as e:
        raise DataReadError(f"Cannot read {path}: {e.strerror or e}") from e


def _write_bytes(path: str, data: bytes):
    try:
        with open(path, "wb") as file:
            file.write(data)
    except OSError as e:
        raise DataReadError(f"Cannot write {path}: {e.strerror or e}") from e


# --- Clouds, labels and times


def read_cloud_bin(path: str, channels: int = 4) -> LabeledCloud:
    """Reads a cloud of `channels` float32 values per point, the 4th one being intensity."""
    if channels not in (3, 4):
        raise ValueError(f"Clouds have 3 or 4 channels, not {channels}.")

    data = _read_bytes(path)
    record = channels * CLOUD_DTYPE.itemsize
    if len(data) % record:
        raise MalformedBinError(f"{path}: {len(data)} bytes is not a multiple of {record}.")

    values = np.frombuffer(data, dtype=CLOUD_DTYPE).reshape(-1, channels)
    intensity = values[:, 3] if channels == 4 else None
    return LabeledCloud(values[:, :3], intensity=intensity)


def write_cloud_bin(path: str, cloud: LabeledCloud | np.ndarray, channels: int = 4):
    """Writes a cloud as float32 records, missing intensities are written as 0."""
    if isinstance(cloud, np.ndarray):
        cloud = LabeledCloud(cloud)

    values = np.zeros((len(cloud), channels), dtype=CLOUD_DTYPE)
    values[:, :3] = cloud.points
    if channels == 4 and cloud.intensity is not None:
        values[:, 3] = cloud.intensity

    _write_bytes(path, values.tobytes())


def read_label_file(path: str, ontology: ClassOntology = ONTOLOGY) -> np.ndarray:
    """Reads raw class indices, the upper 16 instance bits are discarded.

    Values are checked against the ontology's raw classes when `ontology` is set."""
    data = _read_bytes(path)
    if len(data) % LABEL_DTYPE.itemsize:
        raise MalformedLabelError(f"{path}: {len(data)} bytes is not a multiple of 4.")

    labels = np.frombuffer(data, dtype=LABEL_DTYPE) & 0xFFFF
    if ontology is not None:
        ontology.merge_raw(labels)

    return labels.astype(np.uint32)


def write_label_file(path: str, labels: np.ndarray):
    """Writes raw class indices with instance id 0."""
    labels = np.asarray(labels)
    if np.any((labels < 0) | (labels > 0xFFFF)):
        raise DataFormatError("Raw class indices must fit into 16 bits.")
    _write_bytes(path, labels.astype(LABEL_DTYPE).tobytes())


def read_times(path: str) -> np.ndarray:
    """Reads per-point observation times."""
    data = _read_bytes(path)
    if len(data) % TIMES_DTYPE.itemsize:
        raise MalformedBinError(f"{path}: {len(data)} bytes is not a multiple of 8.")
    return np.frombuffer(data, dtype=TIMES_DTYPE).astype(np.float64)


def write_times(path: str, times: np.ndarray):
    """Writes per-point observation times."""
    _write_bytes(path, np.asarray(times, dtype=TIMES_DTYPE).tobytes())


def read_cloud(path: str, channels: int = 4, times_path: str = None) -> LabeledCloud:
    """Reads a cloud and, if present, its `.times` sidecar."""
    cloud = read_cloud_bin(path, channels)
    times_path = times_path or f"{os.path.splitext(path)[0]}.times"

    if os.path.exists(times_path):
        return LabeledCloud(cloud.points, read_times(times_path), cloud.intensity)
    return cloud


# --- Poses and calibration


def _open_csv(path: str, mode: str = "r"):
    try:
        return open(path, mode, newline="", encoding="utf-8")
    except OSError as e:
        raise DataReadError(f"Cannot open {path}: {e.strerror or e}") from e


def read_poses_csv(path: str) -> Trajectory:
    """Reads timestamped poses, sorts them by time and normalizes the quaternions."""
    with _open_csv(path) as file:
        reader = csv.reader(file)
        header = [h.strip() for h in next(reader, [])]

        if missing := [c for c in POSE_COLUMNS if c not in header]:
            raise MissingColumnError(f"{path}: missing columns {missing}.")

        columns = [header.index(c) for c in POSE_COLUMNS]
        rows = []

        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise RowLengthMismatchError(
                    f"{path}:{line}: expected {len(header)} values, got {len(row)}."
                )

            try:
                values = [float(row[i]) for i in columns]
            except ValueError as e:
                raise DataFormatError(f"{path}:{line}: {e}") from e

            if not all(math.isfinite(v) for v in values):
                raise NonFiniteValueError(f"{path}:{line}: non-finite pose value.")
            rows.append(values)

    if not rows:
        raise DataFormatError(f"{path}: no poses found.")

    poses = np.array(rows, dtype=np.float64)
    if np.any(np.diff(poses[:, 0]) < 0):
        logger.warning("Poses in %s are not ordered by time, sorting them.", path)
        poses = poses[np.argsort(poses[:, 0], kind="stable")]

    if len(duplicated := np.flatnonzero(np.diff(poses[:, 0]) == 0)):
        raise DuplicateTimestampError(f"{path}: duplicate timestamp {poses[duplicated[0], 0]}.")

    return Trajectory(poses[:, 0], poses[:, 1:4], poses[:, 4:8])


def write_poses_csv(path: str, trajectory: Trajectory):
    """Writes poses with a header row, floats are written losslessly."""
    with _open_csv(path, "w") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(POSE_COLUMNS)

        for t, p, q in zip(trajectory.times, trajectory.positions, trajectory.quaternions):
            writer.writerow([repr(float(v)) for v in (t, *p, *q)])


def read_calibration(path: str) -> CameraModel:
    """Reads the camera intrinsics and the camera to sensor-body extrinsic."""
    try:
        with open(path, "r", encoding="utf-8") as file:
            document = yaml.safe_load(file)
    except OSError as e:
        raise DataReadError(f"Cannot read {path}: {e.strerror or e}") from e
    except yaml.YAMLError as e:
        raise DataFormatError(f"{path}: invalid YAML: {e}") from e

    try:
        camera = CalibrationSchema()(document or {})["camera"]
    except Invalid as e:
        errors = e.errors if isinstance(e, MultipleInvalid) else [e]
        fields = [".".join(map(str, err.path)) for err in errors]

        if any(err.msg == "required key not provided" for err in errors):
            raise MissingFieldError(f"{path}: missing fields {fields}.") from e
        raise DataFormatError(f"{path}: invalid fields {fields}: {e.msg}") from e

    intrinsics, extrinsic = camera["intrinsics"], camera["extrinsic"]
    return CameraModel(
        **intrinsics,
        extrinsic=Pose(0.0, extrinsic["translation"], extrinsic["rotation"]),
    )


def write_calibration(path: str, camera: CameraModel):
    """Writes a calibration file readable by `read_calibration`."""
    document = {
        "camera": {
            "intrinsics": {
                "fx": float(camera.fx),
                "fy": float(camera.fy),
                "cx": float(camera.cx),
                "cy": float(camera.cy),
                "width": int(camera.width),
                "height": int(camera.height),
            },
            "extrinsic": {
                "translation": camera.extrinsic.position.tolist(),
                "rotation": camera.extrinsic.quaternion.tolist(),
            },
        }
    }
    try:
        with open(path, "w", encoding="utf-8") as file:
            yaml.safe_dump(document, file, sort_keys=False)
    except OSError as e:
        raise DataReadError(f"Cannot write {path}: {e.strerror or e}") from e


# --- Images


def read_index_label_png(path: str, ontology: ClassOntology = ONTOLOGY) -> LabelRaster:
    """Reads a single channel 8 bit index label image."""
    try:
        image = iio.imread(path)
    except (OSError, ValueError) as e:
        raise DataReadError(f"Cannot read {path}: {e}") from e

    if image.ndim != 2 or image.dtype != np.uint8:
        raise DataFormatError(f"{path}: expected an 8 bit single channel image.")

    return LabelRaster(image).validate(ontology.num_classes)


def write_index_label_png(path: str, raster: LabelRaster | np.ndarray):
    """Writes a label raster as 8 bit grayscale PNG."""
    data = raster.data if isinstance(raster, LabelRaster) else np.asarray(raster, np.uint8)
    try:
        iio.imwrite(path, data.astype(np.uint8), extension=".png")
    except OSError as e:
        raise DataReadError(f"Cannot write {path}: {e}") from e


# --- Histograms


def write_histogram_csv(path: str, histograms: np.ndarray, class_names=ONTOLOGY.eval2d):
    """Writes one row of class counts per point with a header naming the classes."""
    histograms = np.asarray(histograms, dtype=np.int64).reshape(-1, len(class_names))

    with _open_csv(path, "w") as file:
        writer = csv.writer(file, lineterminator="\n")
        writer.writerow(class_names)
        writer.writerows(histograms.tolist())


def read_histogram_csv(path: str, class_names=ONTOLOGY.eval2d) -> np.ndarray:
    """Reads class counts, the header must name the expected classes in order."""
    with _open_csv(path) as file:
        reader = csv.reader(file)
        header = next(reader, None)

        if header is None:
            raise MissingColumnError(f"{path}: no header row.")
        if class_names is not None and tuple(header) != tuple(class_names):
            raise MissingColumnError(f"{path}: header {header} does not match the classes.")

        width = len(header)
        rows = []

        for line, row in enumerate(reader, start=2):
            if len(row) != width:
                raise RowLengthMismatchError(f"{path}:{line}: expected {width} counts.")
            try:
                rows.append([int(v) for v in row])
            except ValueError as e:
                raise DataFormatError(f"{path}:{line}: {e}") from e

    histograms = np.array(rows, dtype=np.int64).reshape(-1, width)
    if np.any(histograms < 0):
        raise DataFormatError(f"{path}: negative counts.")
    return histograms


# --- Sequence layout


@dataclass(frozen=True)
class SequenceLayout:
    """Directory structure of one sequence, files are named by their timestamp stem."""

    root: str

    IMAGES = "image"
    INDEX_LABELS = "indexLabel"
    LABEL_IMAGES = "label"
    CLOUDS = "Clouds"
    LABELS = "Labels"
    HISTS = "Hists"
    POSES = "poses.csv"
    CALIBRATION = "camera_calibration.yaml"

    SUFFIXES = {
        IMAGES: ".png",
        INDEX_LABELS: ".png",
        LABEL_IMAGES: ".png",
        CLOUDS: ".bin",
        LABELS: ".label",
        HISTS: ".csv",
    }

    def path(self, subdir: str, stem: str = None) -> str:
        """Path of a subdirectory or of one file in it."""
        if stem is None:
            return os.path.join(self.root, subdir)
        return os.path.join(self.root, subdir, f"{stem}{self.SUFFIXES[subdir]}")

    @property
    def poses_path(self) -> str:
        """Path of the trajectory file."""
        return os.path.join(self.root, self.POSES)

    @property
    def calibration_path(self) -> str:
        """Path of the camera calibration."""
        return os.path.join(self.root, self.CALIBRATION)

    def stems(self, subdir: str) -> list[str]:
        """File stems of a subdirectory ordered by timestamp, empty if it does not exist."""
        directory, suffix = self.path(subdir), self.SUFFIXES[subdir]
        if not os.path.isdir(directory):
            return []

        stems = [f.removesuffix(suffix) for f in os.listdir(directory) if f.endswith(suffix)]
        return sorted(stems, key=lambda s: (self.timestamp(s), s))

    @staticmethod
    def timestamp(stem: str) -> float:
        """Timestamp in seconds encoded in a file stem."""
        try:
            value = float(stem)
        except ValueError as e:
            raise DataFormatError(f"File stem `{stem}` is not a timestamp.") from e

        if not math.isfinite(value):
            raise NonFiniteValueError(f"File stem `{stem}` is not a finite timestamp.")
        return value

    @staticmethod
    def stem(timestamp: float) -> str:
        """File stem of a timestamp."""
        return f"{timestamp:.6f}"

    @cached_property
    def trajectory(self) -> Trajectory:
        """Poses of the sequence."""
        return read_poses_csv(self.poses_path)

    @cached_property
    def camera(self) -> CameraModel:
        """Camera model of the sequence."""
        return read_calibration(self.calibration_path)
