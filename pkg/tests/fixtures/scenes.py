"""Small synthetic scenes with brute-force reference implementations."""

import numpy as np
import pytest

from core.cloud import CameraFrame, LabeledCloud, LabelRaster
from core.geometry import BEHIND, CameraModel, Pose, Trajectory, project, world_to_camera
from core.ontology import IGNORE, ONTOLOGY

TRUNK = ONTOLOGY.index("tree-trunk")
FOLIAGE = ONTOLOGY.index("tree-foliage")


def small_camera() -> CameraModel:
    """100x100 pixel camera with a 90° field of view."""
    return CameraModel(fx=50.0, fy=50.0, cx=50.0, cy=50.0, width=100, height=100)


def split_raster(left: int, right: int, camera: CameraModel = None) -> LabelRaster:
    """Raster with class `left` for u < width/2 and `right` otherwise."""
    camera = camera or small_camera()
    data = np.full((camera.height, camera.width), right, dtype=np.uint8)
    data[:, : camera.width // 2] = left
    return LabelRaster(data)


def uniform_raster(value: int, camera: CameraModel = None) -> LabelRaster:
    """Raster of a single value."""
    camera = camera or small_camera()
    return LabelRaster(np.full((camera.height, camera.width), value, dtype=np.uint8))


def plane_grid(n: int = 5, half: float = 2.0, z: float = 5.0) -> np.ndarray:
    """n x n points on the plane at height `z`, facing a camera at the origin."""
    xs = np.linspace(-half, half, n)
    x, y = np.meshgrid(xs, xs, indexing="ij")
    return np.column_stack([x.ravel(), y.ravel(), np.full(n * n, z)])


def frame_at(position, raster: LabelRaster, t: float = 0.0) -> CameraFrame:
    """Frame of a camera looking along +z from `position`."""
    camera = small_camera()
    return CameraFrame(t, raster, camera, Pose(t, position))


def plane_normals(n: int) -> np.ndarray:
    """Normals of `plane_grid` points oriented towards the origin."""
    return np.tile([0.0, 0.0, -1.0], (n, 1))


def visible_oracle(points: np.ndarray, center: np.ndarray, tolerance: float = 1e-6) -> np.ndarray:
    """Mask of points without another point closer to `center` on the same ray."""
    rel = points - center
    dist = np.linalg.norm(rel, axis=1)
    rays = rel / dist[:, None]

    visible = np.ones(len(points), dtype=bool)
    for i in range(len(points)):
        for j in range(len(points)):
            if i != j and dist[j] < dist[i] and np.linalg.norm(rays[i] - rays[j]) < tolerance:
                visible[i] = False
    return visible


def zbuffer_oracle(points: np.ndarray, spacing: np.ndarray, pixel: float = 0.005) -> np.ndarray:
    """Visible mask from a depth buffer of a camera at the origin looking along +z.

    Every point covers the square of its sample `spacing` around it, so grids act as
    closed surfaces. The image plane is z = 1 with square pixels of size `pixel`."""
    z = points[:, 2]
    uv = points[:, :2] / z[:, None]
    half = np.asarray(spacing, dtype=np.float64) / 2 / z

    low = (uv - half[:, None]).min(axis=0)
    shape = np.ceil(((uv + half[:, None]).max(axis=0) - low) / pixel).astype(int) + 1
    depth = np.full(shape, np.inf)

    first = np.floor((uv - half[:, None] - low) / pixel).astype(int)
    last = np.ceil((uv + half[:, None] - low) / pixel).astype(int)
    for (u0, v0), (u1, v1), d in zip(first, last, z):
        np.minimum(depth[u0:u1, v0:v1], d, out=depth[u0:u1, v0:v1])

    own = np.floor((uv - low) / pixel).astype(int)
    return depth[own[:, 0], own[:, 1]] >= z - 1e-9


def histogram_oracle(
    points: np.ndarray,
    frames: list[CameraFrame],
    min_range: float = 2.0,
    max_range: float = 45.0,
    num_classes: int = ONTOLOGY.num_classes,
) -> np.ndarray:
    """Label histograms by looping over every (point, frame) pair."""
    histograms = np.zeros((len(points), num_classes), dtype=np.int64)

    for frame in frames:
        pose = frame.camera_pose
        visible = visible_oracle(points, pose.position)

        for i, p in enumerate(points):
            if not min_range <= np.linalg.norm(p - pose.position) <= max_range or not visible[i]:
                continue

            uv = project(world_to_camera(p, pose), frame.camera)
            if uv is BEHIND:
                continue

            u, v = uv
            if not (0 <= u < frame.camera.width and 0 <= v < frame.camera.height):
                continue

            value = frame.raster.data[int(np.floor(v)), int(np.floor(u))]
            if value != IGNORE:
                histograms[i, value] += 1

    return histograms


def cooccurrence_oracle(histograms: np.ndarray, num_classes: int) -> np.ndarray:
    """Row-normalized co-occurrence, one point at a time."""
    rows = [[0.0] * num_classes for _ in range(num_classes)]
    support = [0] * num_classes

    for h in histograms:
        total = float(sum(h))
        mode = max(range(num_classes), key=lambda c: (h[c], -c))
        support[mode] += 1
        for c in range(num_classes):
            rows[mode][c] += h[c] / total

    for a in range(num_classes):
        if support[a]:
            rows[a] = [v / support[a] for v in rows[a]]
    return np.array(rows)


def silhouette_oracle(xy: np.ndarray, labels: np.ndarray) -> float:
    """Silhouette coefficient computed over all pairs."""
    values = []
    for i in range(len(xy)):
        dist = {}
        for j in range(len(xy)):
            if i != j:
                dist.setdefault(labels[j], []).append(float(np.hypot(*(xy[i] - xy[j]))))

        a = sum(dist[labels[i]]) / len(dist[labels[i]])
        b = min(sum(d) / len(d) for label, d in dist.items() if label != labels[i])
        values.append((b - a) / max(a, b))
    return sum(values) / len(values)


@pytest.fixture()
def plane_scene():
    """25 points on a plane seen by two cameras, left half trunk and right half foliage."""
    points = plane_grid()
    frames = [
        frame_at([0.0, 0.0, 0.0], split_raster(TRUNK, FOLIAGE), t=0.0),
        frame_at([0.5, 0.0, 0.0], split_raster(TRUNK, FOLIAGE), t=1.0),
    ]
    return LabeledCloud(points, np.full(len(points), 0.5)), frames


@pytest.fixture()
def still_trajectory():
    """Two poses at the origin."""
    return Trajectory([0.0, 1.0], np.zeros((2, 3)), [[0, 0, 0, 1], [0, 0, 0, 1]])
