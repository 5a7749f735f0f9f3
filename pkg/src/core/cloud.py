"""Point clouds with label histograms, label rasters and posed camera frames."""

from dataclasses import dataclass, replace

import numpy as np

from core.errors import (
    DataFormatError,
    FrameWithoutPoseError,
    MissingTimestampsError,
    UnknownClassIndexError,
)
from core.geometry import CameraModel, Pose, world_to_camera
from core.ontology import IGNORE

__all__ = ["LabeledCloud", "LabelRaster", "CameraFrame", "modes_from_histograms"]


def modes_from_histograms(histograms: np.ndarray) -> np.ndarray:
    """Most observed class per point, ties go to the lowest class index.

    Points without any observation get IGNORE."""
    histograms = np.asarray(histograms)
    modes = np.argmax(histograms, axis=1).astype(np.uint8)
    modes[histograms.sum(axis=1) == 0] = IGNORE
    return modes


@dataclass(frozen=True, eq=False)
class LabeledCloud:
    """World frame points with optional per-point attributes.

    `times` holds the time each point was first observed, `histograms` the label counts
    (N x C) and `modes` the class index per point. Modes are derived from histograms
    whenever histograms are present."""

    points: np.ndarray
    times: np.ndarray | None = None
    intensity: np.ndarray | None = None
    histograms: np.ndarray | None = None
    modes: np.ndarray | None = None

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        object.__setattr__(self, "points", points)
        n = len(points)

        for name, dtype in (("times", np.float64), ("intensity", np.float32)):
            if (value := getattr(self, name)) is not None:
                value = np.asarray(value, dtype=dtype).reshape(-1)
                if len(value) != n:
                    raise DataFormatError(f"Cloud has {n} points but {len(value)} {name}.")
                object.__setattr__(self, name, value)

        if self.histograms is not None:
            histograms = np.asarray(self.histograms, dtype=np.int64)
            if histograms.ndim != 2 or len(histograms) != n:
                raise DataFormatError(f"Histograms of shape {histograms.shape} for {n} points.")
            if np.any(histograms < 0):
                raise DataFormatError("Histogram counts must not be negative.")

            modes = modes_from_histograms(histograms)
            if self.modes is not None and not np.array_equal(np.asarray(self.modes), modes):
                raise DataFormatError("Modes do not match the histograms.")

            object.__setattr__(self, "histograms", histograms)
            object.__setattr__(self, "modes", modes)

        elif self.modes is not None:
            modes = np.asarray(self.modes).reshape(-1)
            if len(modes) != n:
                raise DataFormatError(f"Cloud has {n} points but {len(modes)} modes.")
            object.__setattr__(self, "modes", modes)

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        attrs = [a for a in ("times", "intensity", "histograms") if getattr(self, a) is not None]
        return f"LabeledCloud(n={len(self)}, attributes={attrs})"

    @property
    def num_classes(self) -> int | None:
        """Histogram length or None without histograms."""
        return None if self.histograms is None else self.histograms.shape[1]

    def require_times(self) -> np.ndarray:
        """Returns per-point times, raises if they are absent."""
        if self.times is None:
            raise MissingTimestampsError("Cloud has no per-point observation times.")
        return self.times

    def subset(self, index: np.ndarray) -> "LabeledCloud":
        """Cloud restricted to a boolean mask or an index array."""
        pick = lambda a: None if a is None else a[index]  # pylint: disable=C3001
        return LabeledCloud(
            self.points[index],
            pick(self.times),
            pick(self.intensity),
            pick(self.histograms),
            None if self.histograms is not None else pick(self.modes),
        )

    def with_histograms(self, histograms: np.ndarray) -> "LabeledCloud":
        """Copy with new histograms and the derived modes."""
        return replace(self, histograms=histograms, modes=None)

    def in_frame(self, pose: Pose) -> "LabeledCloud":
        """Copy with points expressed in the frame of `pose`."""
        return replace(self, points=world_to_camera(self.points, pose))


@dataclass(frozen=True, eq=False)
class LabelRaster:
    """Per-pixel class indices of one image, IGNORE marks unlabelled pixels."""

    data: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data)
        if data.ndim != 2:
            raise DataFormatError(f"Label raster must be 2D, got shape {data.shape}.")
        object.__setattr__(self, "data", data.astype(np.uint8, copy=False))

    @property
    def width(self) -> int:
        """Number of columns."""
        return self.data.shape[1]

    @property
    def height(self) -> int:
        """Number of rows."""
        return self.data.shape[0]

    def validate(self, num_classes: int) -> "LabelRaster":
        """Raises UnknownClassIndexError listing each offending value and its pixel count."""
        bad = (self.data >= num_classes) & (self.data != IGNORE)
        if bad.any():
            values, counts = np.unique(self.data[bad], return_counts=True)
            found = dict(zip(values.tolist(), counts.tolist()))
            raise UnknownClassIndexError(f"Unknown label values (value: pixels) {found}.", found)
        return self

    def lookup(self, uv: np.ndarray) -> np.ndarray:
        """Class of the pixel containing each (u, v), pixels must lie inside the raster."""
        uv = np.floor(np.asarray(uv).reshape(-1, 2)).astype(np.int64)
        return self.data[uv[:, 1], uv[:, 0]]


@dataclass(frozen=True, eq=False)
class CameraFrame:
    """Label raster of one rectified image with the camera and sensor-body pose."""

    timestamp: float
    raster: LabelRaster
    camera: CameraModel
    pose: Pose | None = None

    def __post_init__(self):
        if (self.raster.width, self.raster.height) != (self.camera.width, self.camera.height):
            raise DataFormatError(
                f"Raster of {self.raster.width}x{self.raster.height} does not match "
                f"camera of {self.camera.width}x{self.camera.height} at t={self.timestamp}."
            )

    @property
    def camera_pose(self) -> Pose:
        """World pose of the camera."""
        if self.pose is None:
            raise FrameWithoutPoseError(f"Frame at t={self.timestamp:.6f} has no pose.")
        return self.camera.camera_pose(self.pose)
