"""Surface normals and visible point determination.

Visibility uses hidden point removal with an exponential inversion kernel: points are
reflected about the viewpoint so that their distance order is reversed, and the points
whose reflections lie on the convex hull (together with the viewpoint) are visible."""

import os
from concurrent.futures import Executor
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree
from voluptuous import All, Coerce, Optional, Range

from core.abstract import AbstractSequenceStage
from core.cloud import LabeledCloud
from core.errors import InsufficientPointsError, OutOfRangeError
from core.geometry import Trajectory
from core.logger import get_logger
from core.stages import Importable

from modules.dataio import SequenceLayout, read_cloud

logger = get_logger("visibility")

__all__ = [
    "NormalField",
    "GhprConfig",
    "GhprResult",
    "estimate_normals",
    "ghpr_visible",
    "facing_check",
    "facing_mask",
]

# neighbors queried beyond k so that distance ties can be broken by index
TIE_MARGIN = 8
RANK_TOLERANCE = 1e-9


@dataclass(frozen=True, eq=False)
class NormalField:
    """Unit normals per point, NaN rows mark invalid (degenerate) neighborhoods."""

    normals: np.ndarray
    quality: np.ndarray

    @property
    def valid(self) -> np.ndarray:
        """Mask of points with a usable normal."""
        return np.isfinite(self.normals).all(axis=1)

    def __len__(self):
        return len(self.normals)


def _normals_chunk(points, tree, index, k, collinear_ratio, isotropic_ratio):
    """Normals and quality for `points[index]`."""
    query = min(k + TIE_MARGIN, len(points))
    dist, nbrs = tree.query(points[index], k=query)
    dist, nbrs = dist.reshape(len(index), -1), nbrs.reshape(len(index), -1)

    # equal distances are ordered by point index
    order = np.lexsort((nbrs, dist), axis=-1)[:, :k]
    nbrs = np.take_along_axis(nbrs, order, axis=-1)

    neighbors = points[nbrs]
    centered = neighbors - neighbors.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k

    eigvals, eigvecs = np.linalg.eigh(cov)
    eigvals = np.clip(eigvals, 0, None)
    total = eigvals.sum(axis=1)

    with np.errstate(invalid="ignore", divide="ignore"):
        quality = eigvals[:, 0] / total
        spread = eigvals[:, 1] / total

    normals = eigvecs[:, :, 0].copy()
    degenerate = ~(total > 0) | ~(spread >= collinear_ratio) | (3 * quality > isotropic_ratio)
    normals[degenerate] = np.nan
    quality[~(total > 0)] = np.nan

    return normals, quality


def estimate_normals(
    cloud: LabeledCloud,
    k: int,
    trajectory: Trajectory,
    *,
    collinear_ratio: float = 1e-9,
    isotropic_ratio: float = 0.9,
    executor: Executor = None,
    chunk_size: int = 65536,
) -> NormalField:
    """Estimates one normal per point from the covariance of its k nearest neighbors.

    The normal is the eigenvector of the smallest eigenvalue, oriented towards the sensor
    position at the time the point was first observed. Neighborhoods are invalid if they
    are collinear (second eigenvalue share below `collinear_ratio`) or nearly isotropic
    (smallest share above `isotropic_ratio` of its maximum 1/3)."""
    if k < 3:
        raise ValueError(f"At least 3 neighbors are required, got k={k}.")
    if len(cloud) < k:
        raise InsufficientPointsError(f"Cloud has {len(cloud)} points, k={k} required.")

    times = cloud.require_times()
    if not trajectory.covers(times):
        raise OutOfRangeError("Point observation times are not covered by the trajectory.")

    points = cloud.points
    tree = cKDTree(points)

    starts = range(0, len(points), chunk_size)
    chunks = [np.arange(s, min(s + chunk_size, len(points))) for s in starts]
    args = (k, collinear_ratio, isotropic_ratio)

    if executor is None:
        parts = [_normals_chunk(points, tree, c, *args) for c in chunks]
    else:
        parts = list(executor.map(lambda c: _normals_chunk(points, tree, c, *args), chunks))

    normals = np.concatenate([p[0] for p in parts])
    quality = np.concatenate([p[1] for p in parts])

    observers = trajectory.positions_at(times)
    flip = np.einsum("ij,ij->i", normals, observers - points) < 0
    normals[flip] *= -1

    if invalid := int((~np.isfinite(normals).all(axis=1)).sum()):
        logger.debug("%d of %d normals are invalid.", invalid, len(points))

    return NormalField(normals, quality)


@dataclass(frozen=True)
class GhprConfig:
    """Kernel exponent and range limits of the visibility test."""

    gamma: float = -0.1
    max_range: float = 45.0
    min_range: float = 2.0

    def __post_init__(self):
        if not self.gamma < 0:
            raise ValueError(f"gamma must be negative, got {self.gamma}.")
        if not 0 <= self.min_range < self.max_range:
            raise ValueError(f"Invalid range [{self.min_range}, {self.max_range}].")


@dataclass(frozen=True, eq=False)
class GhprResult:
    """Indices of visible points, `degenerate` marks a lower dimensional or failed hull."""

    indices: np.ndarray
    degenerate: bool = False

    def __len__(self):
        return len(self.indices)

    def __contains__(self, item):
        return bool(np.isin(item, self.indices))


def _hull_vertices(points: np.ndarray) -> tuple[np.ndarray, bool]:
    """Hull vertices (coplanar points included) and whether the set was degenerate."""
    centered = points - points.mean(axis=0)
    _, singular, vt = np.linalg.svd(centered, full_matrices=False)
    rank = int((singular > RANK_TOLERANCE * max(singular[0], np.finfo(float).tiny)).sum())

    if rank <= 1:
        line = centered @ vt[0]
        tol = RANK_TOLERANCE * max(np.abs(line).max(), np.finfo(float).tiny)
        return np.flatnonzero((line <= line.min() + tol) | (line >= line.max() - tol)), True

    hull = ConvexHull(points if rank == 3 else centered @ vt[:2].T)
    vertices = np.union1d(hull.vertices, hull.coplanar[:, 0] if len(hull.coplanar) else [])
    return vertices.astype(np.int64), rank < 3


def ghpr_visible(points: np.ndarray, viewpoint: np.ndarray, cfg: GhprConfig) -> GhprResult:
    """Returns the indices of the points visible from `viewpoint`.

    Points outside of [min_range, max_range] are removed first. Each remaining point at
    distance d is reflected to distance (d / d_max)^gamma along its ray, which keeps the
    result invariant to scaling about the viewpoint. The viewpoint is part of the hull."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    rel = points - np.asarray(viewpoint, dtype=np.float64).reshape(3)
    dist = np.linalg.norm(rel, axis=1)

    in_range = np.flatnonzero((dist >= cfg.min_range) & (dist <= cfg.max_range) & (dist > 1e-9))
    if not len(in_range):
        return GhprResult(in_range.astype(np.int64))

    d = dist[in_range]
    radius = (d / d.max()) ** cfg.gamma
    reflected = rel[in_range] / d[:, None] * radius[:, None]

    candidates = np.vstack([reflected, np.zeros((1, 3))])
    try:
        vertices, degenerate = _hull_vertices(candidates)
    except QhullError as e:
        logger.warning("Hull of %d points failed, keeping all in range: %s", len(d), e)
        return GhprResult(in_range.astype(np.int64), True)

    vertices = vertices[vertices < len(in_range)]
    return GhprResult(np.sort(in_range[vertices]).astype(np.int64), degenerate)


def facing_mask(
    points: np.ndarray, normals: np.ndarray, viewpoint: np.ndarray, slack_deg: float = 10.0
) -> np.ndarray:
    """Vectorized `facing_check`."""
    view = np.asarray(viewpoint, dtype=np.float64).reshape(3) - np.asarray(points).reshape(-1, 3)
    length = np.linalg.norm(view, axis=1)
    normals = np.asarray(normals, dtype=np.float64).reshape(-1, 3)

    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.einsum("ij,ij->i", normals, view) / length

    facing = cos >= -np.sin(np.radians(slack_deg)) - 1e-12
    return facing | ~np.isfinite(cos)


def facing_check(point, normal, viewpoint, slack_deg: float = 10.0) -> bool:
    """True if the angle between normal and the ray to the viewpoint is ≤ 90° + slack.

    Invalid (NaN) normals always pass."""
    return bool(facing_mask(point, normal, viewpoint, slack_deg)[0])


@Importable
class EstimateNormals(AbstractSequenceStage):
    """Estimates oriented surface normals of a sequence cloud."""

    @classmethod
    def params_schema(cls) -> dict:
        """
        :cloud: Cloud file relative to the sequence, needs a `.times` sidecar.
        :k: Number of nearest neighbors per covariance.
        :channels: Float values per point record in the cloud file (3 or 4).
        """
        return super().params_schema() | {
            Optional("cloud", default="map.bin"): str,
            Optional("k", default=10): All(Coerce(int), Range(min=3)),
            Optional("channels", default=4): All(Coerce(int), Range(min=3, max=4)),
        }

    def __call__(self, report) -> bool:
        layout = SequenceLayout(self.params["sequence"])
        path = os.path.join(layout.root, self.params["cloud"])
        cloud = read_cloud(path, self.params["channels"])

        field = estimate_normals(cloud, self.params["k"], layout.trajectory, executor=self.executor)

        stem = os.path.splitext(os.path.basename(self.params["cloud"]))[0]
        output = os.path.join(self.output_dir, f"{stem}.normals.npy")
        np.save(output, np.column_stack([field.normals, field.quality]).astype(np.float64))
        self.logger.info("Wrote %d normals to %s.", len(field), output)

        report["points"] = len(field)
        report["normals.invalid"] = int((~field.valid).sum())
        report["normals.k"] = self.params["k"]
        report["output"] = output
        return True
