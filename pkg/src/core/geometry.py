"""Rigid-body poses, trajectories and the pinhole camera model.

Quaternions are stored as (qx, qy, qz, qw) and rotate sensor coordinates into the world
frame. Cameras follow the OpenCV convention, z forward, x right and y down."""

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from core.errors import (
    DataFormatError,
    DuplicateTimestampError,
    NonFiniteValueError,
    NonPositiveFocalError,
    NoPoseAtTimeError,
    OutOfRangeError,
)

__all__ = [
    "Pose",
    "Trajectory",
    "CameraModel",
    "Behind",
    "BEHIND",
    "pose_at",
    "world_to_camera",
    "camera_to_world",
    "project",
    "project_points",
]

SYNC_TOLERANCE = 0.01
Z_MIN = 1e-6


@dataclass(frozen=True, eq=False)
class Pose:
    """A timestamped 6-DoF pose (world <- sensor)."""

    t: float
    position: np.ndarray
    quaternion: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 0.0, 1.0]))

    def __post_init__(self):
        position = np.asarray(self.position, dtype=np.float64).reshape(3)
        quaternion = np.asarray(self.quaternion, dtype=np.float64).reshape(4)

        if not (np.isfinite(self.t) and np.isfinite(position).all()):
            raise NonFiniteValueError(f"Pose at t={self.t} has non-finite values.")

        norm = np.linalg.norm(quaternion)
        if not np.isfinite(norm) or norm < 1e-12:
            raise NonFiniteValueError(f"Pose at t={self.t} has an invalid quaternion.")

        object.__setattr__(self, "t", float(self.t))
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "quaternion", quaternion / norm)

    def __repr__(self):
        return f"Pose(t={self.t:.6f}, position={self.position.tolist()})"

    @classmethod
    def identity(cls, t: float = 0.0) -> "Pose":
        """Pose without translation and rotation."""
        return cls(t, np.zeros(3))

    @classmethod
    def from_rotation(cls, t: float, position, rotation: Rotation) -> "Pose":
        """Creates a pose from a scipy rotation."""
        return cls(t, position, rotation.as_quat())

    @cached_property
    def rotation(self) -> Rotation:
        """Rotation as scipy object."""
        return Rotation.from_quat(self.quaternion)

    @cached_property
    def matrix(self) -> np.ndarray:
        """3x3 rotation matrix."""
        return self.rotation.as_matrix()

    @property
    def yaw(self) -> float:
        """Heading angle about the world z axis in radians."""
        r = self.matrix
        return float(np.arctan2(r[1, 0], r[0, 0]))

    def compose(self, other: "Pose") -> "Pose":
        """Returns self ∘ other, keeping the timestamp of self."""
        position = self.matrix @ other.position + self.position
        return Pose.from_rotation(self.t, position, self.rotation * other.rotation)

    def inverse(self) -> "Pose":
        """Returns the inverse transform."""
        inv = self.rotation.inv()
        return Pose.from_rotation(self.t, -inv.apply(self.position), inv)

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Maps points from the sensor frame to the world frame."""
        return camera_to_world(points, self)


def world_to_camera(p_world: np.ndarray, cam_pose: Pose) -> np.ndarray:
    """Expresses world points in the frame of a pose, R⁻¹(p - t). Accepts (3,) or (N, 3)."""
    return (np.asarray(p_world, dtype=np.float64) - cam_pose.position) @ cam_pose.matrix


def camera_to_world(p_cam: np.ndarray, cam_pose: Pose) -> np.ndarray:
    """Inverse of `world_to_camera`, R·p + t."""
    return np.asarray(p_cam, dtype=np.float64) @ cam_pose.matrix.T + cam_pose.position


class Trajectory:
    """Time ordered sequence of poses stored as arrays."""

    def __init__(self, times, positions, quaternions):
        self.times = np.asarray(times, dtype=np.float64).reshape(-1)
        self.positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        quaternions = np.asarray(quaternions, dtype=np.float64).reshape(-1, 4)

        if not len(self.times):
            raise DataFormatError("Trajectory is empty.")

        if not (len(self.times) == len(self.positions) == len(quaternions)):
            raise DataFormatError("Trajectory arrays differ in length.")

        if not all(np.isfinite(a).all() for a in (self.times, self.positions, quaternions)):
            raise NonFiniteValueError("Trajectory contains non-finite values.")

        if len(equal := np.flatnonzero(np.diff(self.times) == 0)):
            raise DuplicateTimestampError(f"Duplicate pose timestamp {self.times[equal[0]]}.")

        if np.any(np.diff(self.times) < 0):
            raise DataFormatError("Trajectory timestamps are not increasing.")

        norms = np.linalg.norm(quaternions, axis=1, keepdims=True)
        if np.any(norms < 1e-12):
            raise NonFiniteValueError("Trajectory contains zero quaternions.")
        self.quaternions = quaternions / norms

    @classmethod
    def from_poses(cls, poses: list[Pose]) -> "Trajectory":
        """Builds a trajectory from a list of ordered poses."""
        return cls(
            [p.t for p in poses],
            [p.position for p in poses],
            [p.quaternion for p in poses],
        )

    def __len__(self):
        return len(self.times)

    def __getitem__(self, item: int) -> Pose:
        return Pose(self.times[item], self.positions[item], self.quaternions[item])

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @property
    def span(self) -> tuple[float, float]:
        """First and last timestamp."""
        return float(self.times[0]), float(self.times[-1])

    @cached_property
    def rotations(self) -> Rotation:
        """All orientations as one scipy rotation object."""
        return Rotation.from_quat(self.quaternions)

    @cached_property
    def yaws(self) -> np.ndarray:
        """Heading angle about world z for every pose in radians."""
        r = self.rotations.as_matrix().reshape(-1, 3, 3)
        return np.arctan2(r[:, 1, 0], r[:, 0, 0])

    def nearest(self, t: float) -> int:
        """Index of the pose closest in time, the earlier one on ties."""
        i = int(np.searchsorted(self.times, t))
        candidates = [j for j in (i - 1, i) if 0 <= j < len(self)]
        return min(candidates, key=lambda j: (abs(self.times[j] - t), j))

    def covers(self, times: np.ndarray, tolerance: float = SYNC_TOLERANCE) -> bool:
        """Checks whether all times lie within the trajectory span."""
        start, end = self.span
        times = np.asarray(times)
        return bool(np.all((times >= start - tolerance) & (times <= end + tolerance)))

    def pose_at(self, t: float, mode: str = "exact", tolerance: float = SYNC_TOLERANCE) -> Pose:
        """Returns the pose at a timestamp, see `pose_at`."""
        t = float(t)

        if mode == "exact":
            i = self.nearest(t)
            if abs(self.times[i] - t) > tolerance:
                raise NoPoseAtTimeError(f"No pose within {tolerance}s of t={t:.6f}.")
            return self[i]

        if mode != "interpolate":
            raise ValueError(f"Unknown pose lookup mode `{mode}`.")

        start, end = self.span
        if not start <= t <= end:
            raise OutOfRangeError(f"t={t:.6f} is outside of the trajectory [{start}, {end}].")

        i = int(np.searchsorted(self.times, t))
        if self.times[i] == t:
            return self[i]

        t0, t1 = self.times[i - 1], self.times[i]
        alpha = (t - t0) / (t1 - t0)
        position = (1 - alpha) * self.positions[i - 1] + alpha * self.positions[i]

        slerp = Slerp([t0, t1], Rotation.from_quat(self.quaternions[[i - 1, i]]))
        return Pose.from_rotation(t, position, slerp([t])[0])

    def positions_at(self, times: np.ndarray) -> np.ndarray:
        """Linearly interpolated positions for many timestamps, clamped at the ends."""
        times = np.asarray(times, dtype=np.float64)
        return np.stack([np.interp(times, self.times, self.positions[:, a]) for a in range(3)], -1)


def pose_at(
    trajectory: Trajectory | list[Pose],
    t: float,
    mode: str = "exact",
    tolerance: float = SYNC_TOLERANCE,
) -> Pose:
    """Looks up the pose of a trajectory at time `t`.

    In `exact` mode the nearest pose within `tolerance` seconds is returned, otherwise
    NoPoseAtTimeError is raised. In `interpolate` mode positions are interpolated linearly
    and orientations spherically between the bracketing poses, timestamps outside of the
    trajectory raise OutOfRangeError. A timestamp equal to a stored one returns that pose.
    """
    if not isinstance(trajectory, Trajectory):
        trajectory = Trajectory.from_poses(list(trajectory))
    return trajectory.pose_at(t, mode, tolerance)


class Behind(enum.Enum):
    """Projection result of points that are not in front of the camera."""

    BEHIND = "behind"


BEHIND = Behind.BEHIND


@dataclass(frozen=True, eq=False)
class CameraModel:
    """Rectified pinhole camera, `extrinsic` maps camera into sensor-body coordinates."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    extrinsic: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise NonPositiveFocalError(f"Focal lengths must be positive, got {self.fx, self.fy}.")

        if not (self.width > 0 and self.height > 0):
            raise DataFormatError(f"Invalid image size {self.width}x{self.height}.")

        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise DataFormatError(f"Principal point {self.cx, self.cy} lies outside the image.")

    @property
    def intrinsics(self) -> np.ndarray:
        """3x3 intrinsic matrix."""
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1]])

    def camera_pose(self, body_pose: Pose) -> Pose:
        """World pose of the camera for a sensor-body pose."""
        return body_pose.compose(self.extrinsic)

    def in_image(self, uv: np.ndarray) -> np.ndarray:
        """Mask of pixel coordinates inside [0, width) x [0, height)."""
        uv = np.asarray(uv).reshape(-1, 2)
        u, v = uv[:, 0], uv[:, 1]
        with np.errstate(invalid="ignore"):
            return (u >= 0) & (u < self.width) & (v >= 0) & (v < self.height)


def project(p_cam, cam: CameraModel, z_min: float = Z_MIN) -> tuple[float, float] | Behind:
    """Projects a camera-frame point to pixel coordinates.

    Returns BEHIND for points with z ≤ `z_min`, bounds are left to the caller."""
    x, y, z = (float(c) for c in np.asarray(p_cam).reshape(3))
    if z <= z_min:
        return BEHIND
    return cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy


def project_points(
    p_cam: np.ndarray, cam: CameraModel, z_min: float = Z_MIN
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized `project`, returns (N, 2) pixels (NaN if behind) and the in-front mask."""
    p_cam = np.asarray(p_cam, dtype=np.float64).reshape(-1, 3)
    front = p_cam[:, 2] > z_min

    uv = np.full((len(p_cam), 2), np.nan)
    x, y, z = p_cam[front].T
    uv[front, 0] = cam.fx * x / z + cam.cx
    uv[front, 1] = cam.fy * y / z + cam.cy

    return uv, front
