"""Transfers 2D image labels onto 3D points.

Every camera frame votes once for each point it sees: points are range filtered,
projected into the image, checked against their surface normal and finally tested
for visibility from the camera center. The class of the pixel a visible point falls
into is added to the point's label histogram. Points nobody saw are dropped."""

import os
from concurrent.futures import Executor
from dataclasses import dataclass

import numpy as np
from voluptuous import All, Any, Boolean, Coerce, Maybe, Optional, Range

from core.abstract import AbstractSequenceStage
from core.cloud import CameraFrame, LabeledCloud
from core.errors import (
    InsufficientPointsError,
    NoFramesError,
    NoPoseAtTimeError,
    OutOfRangeError,
    ShapeMismatchError,
)
from core.geometry import SYNC_TOLERANCE, Trajectory, project_points, world_to_camera
from core.logger import get_logger
from core.ontology import IGNORE, ONTOLOGY, ClassOntology
from core.stages import Importable
from core.validation import NonNegative, Positive, TimeToSeconds

from modules.dataio import (
    SequenceLayout,
    read_cloud,
    read_index_label_png,
    write_cloud_bin,
    write_histogram_csv,
    write_label_file,
    write_times,
)
from modules.visibility import (
    GhprConfig,
    NormalField,
    estimate_normals,
    facing_mask,
    ghpr_visible,
)

logger = get_logger("labeltransfer")

__all__ = [
    "FrameSampleRule",
    "SubmapSpec",
    "sample_frames",
    "extract_submap",
    "observe_frame",
    "merge_histograms",
    "accumulate_histograms",
    "transfer_labels",
    "histogram_summary",
    "load_frames",
]

# absorbs rounding of accumulated distances and angles at exact step boundaries
STEP_TOLERANCE = 1e-9


@dataclass(frozen=True)
class FrameSampleRule:
    """Distance (meters) and cumulative heading change (degrees) between sampled frames."""

    distance_step: float = 5.0
    heading_step: float = 5.0

    def __post_init__(self):
        if not (self.distance_step > 0 and self.heading_step > 0):
            raise ValueError(f"Sampling steps must be positive, got {self}.")


@dataclass(frozen=True)
class SubmapSpec:
    """Radius and time window of a submap, points closer to the carrier are masked."""

    radius: float = 45.0
    time_window: float = 1.0
    self_strike_radius: float = 2.0

    def __post_init__(self):
        if not self.radius > self.self_strike_radius >= 0:
            raise ValueError(f"Invalid submap radii {self.radius}, {self.self_strike_radius}.")
        if not self.time_window >= 0:
            raise ValueError(f"Time window must not be negative, got {self.time_window}.")


def sample_frames(trajectory: Trajectory, rule: FrameSampleRule = FrameSampleRule()) -> list[float]:
    """Samples timestamps by travelled distance and accumulated heading change.

    The first pose is always emitted. Afterwards a pose is emitted as soon as the distance
    or the absolute yaw change summed since the last emission reaches its step."""
    if len(trajectory) < 2:
        raise InsufficientPointsError("Frame sampling needs at least 2 poses.")

    steps = np.linalg.norm(np.diff(trajectory.positions, axis=0), axis=1)
    turns = np.degrees(np.abs(np.angle(np.exp(1j * np.diff(trajectory.yaws)))))

    emitted = [float(trajectory.times[0])]
    distance = heading = 0.0

    for i, (step, turn) in enumerate(zip(steps, turns), start=1):
        distance += step
        heading += turn

        if (
            distance >= rule.distance_step - STEP_TOLERANCE
            or heading >= rule.heading_step - STEP_TOLERANCE
        ):
            emitted.append(float(trajectory.times[i]))
            distance = heading = 0.0

    logger.debug("Sampled %d of %d poses.", len(emitted), len(trajectory))
    return emitted


def extract_submap(
    cloud: LabeledCloud,
    t: float,
    trajectory: Trajectory,
    spec: SubmapSpec = SubmapSpec(),
    tolerance: float = SYNC_TOLERANCE,
) -> LabeledCloud:
    """Points around the sensor at time `t`, expressed in the sensor frame.

    Keeps points within `radius` of the sensor that were observed within `time_window`
    seconds of `t`, except those observed closer than `self_strike_radius` to the carrier."""
    times = cloud.require_times()
    pose = trajectory.pose_at(t, "exact", tolerance)

    keep = np.linalg.norm(cloud.points - pose.position, axis=1) <= spec.radius
    keep &= np.abs(times - t) <= spec.time_window

    index = np.flatnonzero(keep)
    carrier = trajectory.positions_at(times[index])
    strike = np.linalg.norm(cloud.points[index] - carrier, axis=1) < spec.self_strike_radius
    index = index[~strike]

    if not len(index):
        logger.warning("Submap at t=%.6f is empty.", t)

    return cloud.subset(index).in_frame(pose)


def observe_frame(
    points: np.ndarray,
    frame: CameraFrame,
    cfg: GhprConfig,
    slack_deg: float,
    normals: np.ndarray = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Points labelled by one frame, returns their indices and the observed classes."""
    pose = frame.camera_pose
    center = pose.position

    distance = np.linalg.norm(points - center, axis=1)
    index = np.flatnonzero((distance >= cfg.min_range) & (distance <= cfg.max_range))

    uv, front = project_points(world_to_camera(points[index], pose), frame.camera)
    hit = front & frame.camera.in_image(uv)
    index, uv = index[hit], uv[hit]

    if normals is not None:
        facing = facing_mask(points[index], normals[index], center, slack_deg)
        index, uv = index[facing], uv[facing]

    visible = ghpr_visible(points[index], center, cfg)
    if visible.degenerate:
        logger.warning("Degenerate visibility hull for frame t=%.6f.", frame.timestamp)
    index, uv = index[visible.indices], uv[visible.indices]

    classes = frame.raster.lookup(uv)
    labelled = classes != IGNORE
    return index[labelled], classes[labelled].astype(np.int64)


def merge_histograms(parts: list[np.ndarray]) -> np.ndarray:
    """Sums histogram arrays of identical shape."""
    parts = [np.asarray(p, dtype=np.int64) for p in parts]
    if not parts:
        raise ShapeMismatchError("Nothing to merge.")

    if len(shapes := {p.shape for p in parts}) > 1:
        raise ShapeMismatchError(f"Histograms differ in shape: {sorted(shapes)}.")

    return np.sum(parts, axis=0, dtype=np.int64)


def accumulate_histograms(
    points: np.ndarray,
    frames: list[CameraFrame],
    cfg: GhprConfig,
    slack_deg: float,
    num_classes: int,
    normals: np.ndarray = None,
    executor: Executor = None,
) -> np.ndarray:
    """Label histograms of all points, including the ones no frame has seen."""
    if not frames:
        raise NoFramesError("Label transfer needs at least one camera frame.")

    # fail before any frame is processed
    for frame in frames:
        _ = frame.camera_pose

    observe = lambda f: observe_frame(points, f, cfg, slack_deg, normals)  # pylint: disable=C3001
    results = map(observe, frames) if executor is None else executor.map(observe, frames)

    n = len(points)
    histograms = np.zeros((n, num_classes), dtype=np.int64)

    for frame, (index, classes) in zip(frames, results):
        partial = np.bincount(index * num_classes + classes, minlength=n * num_classes)
        histograms = merge_histograms([histograms, partial.reshape(n, num_classes)])
        logger.debug("Frame t=%.6f labelled %d points.", frame.timestamp, len(index))

    return histograms


def transfer_labels(
    cloud: LabeledCloud,
    frames: list[CameraFrame],
    cfg: GhprConfig = GhprConfig(),
    slack_deg: float = 10.0,
    *,
    normals: NormalField | np.ndarray = None,
    trajectory: Trajectory = None,
    k: int = 10,
    executor: Executor = None,
    ontology: ClassOntology = ONTOLOGY,
) -> LabeledCloud:
    """Labels a world frame cloud from posed label images.

    Normals are estimated from `trajectory` unless given, without either the facing test
    is skipped. The returned cloud holds the observed points with histograms and modes."""
    if isinstance(normals, NormalField):
        normals = normals.normals
    elif normals is None and trajectory is not None:
        normals = estimate_normals(cloud, k, trajectory, executor=executor).normals

    if normals is None:
        logger.info("No normals available, skipping the facing test.")

    histograms = accumulate_histograms(
        cloud.points, frames, cfg, slack_deg, ontology.num_classes, normals, executor
    )
    observed = histograms.sum(axis=1) > 0

    if dropped := int((~observed).sum()):
        logger.info("Dropping %d of %d points without observations.", dropped, len(cloud))

    return cloud.subset(observed).with_histograms(histograms[observed])


def histogram_summary(histograms: np.ndarray, class_names=ONTOLOGY.eval2d) -> dict:
    """Label hits per class, total hits and points observed with more than one class."""
    histograms = np.asarray(histograms, dtype=np.int64)
    return {
        "hits": int(histograms.sum()),
        "per_class": dict(zip(class_names, histograms.sum(axis=0).tolist())),
        "ambiguous": int(((histograms > 0).sum(axis=1) > 1).sum()),
    }


def load_frames(
    layout: SequenceLayout,
    ontology: ClassOntology = ONTOLOGY,
    pose_mode: str = "exact",
    stems: list[str] = None,
) -> list[CameraFrame]:
    """Index label images of a sequence as camera frames.

    Frames without a pose at their timestamp are kept without pose."""
    camera, trajectory = layout.camera, layout.trajectory
    frames = []

    for stem in stems if stems is not None else layout.stems(SequenceLayout.INDEX_LABELS):
        t = layout.timestamp(stem)
        raster = read_index_label_png(layout.path(SequenceLayout.INDEX_LABELS, stem), ontology)

        try:
            pose = trajectory.pose_at(t, pose_mode)
        except (NoPoseAtTimeError, OutOfRangeError) as e:
            logger.warning("Frame %s: %s", stem, e)
            pose = None

        frames.append(CameraFrame(t, raster, camera, pose))

    return frames


class LabelTransferStage(AbstractSequenceStage):
    """Common parameters of stages building on the sequence trajectory."""

    @classmethod
    def params_schema(cls) -> dict:
        """
        :pose_mode: Pose lookup at frame timestamps, `exact` or `interpolate`.
        """
        return super().params_schema() | {
            Optional("pose_mode", default="exact"): Any("exact", "interpolate"),
        }


@Importable
class SampleFrames(LabelTransferStage):
    """Samples frame timestamps along the trajectory by distance and heading change."""

    default_output = "."

    @classmethod
    def params_schema(cls) -> dict:
        """
        :distance_step: Meters travelled between sampled frames.
        :heading_step: Degrees of accumulated heading change between sampled frames.
        """
        return super().params_schema() | {
            Optional("distance_step", default=5.0): Positive(),
            Optional("heading_step", default=5.0): Positive(),
        }

    def __call__(self, report) -> bool:
        layout = SequenceLayout(self.params["sequence"])
        rule = FrameSampleRule(self.params["distance_step"], self.params["heading_step"])

        timestamps = sample_frames(layout.trajectory, rule)
        output = os.path.join(self.output_dir, "frames.txt")

        with open(output, "w", encoding="utf-8") as file:
            file.writelines(f"{layout.stem(t)}\n" for t in timestamps)

        self.logger.info("Sampled %d frames into %s.", len(timestamps), output)
        report["frames.count"] = len(timestamps)
        report["frames.poses"] = len(layout.trajectory)
        report["output"] = output
        return True


@Importable
class ExtractSubmaps(LabelTransferStage):
    """Cuts a submap around the sensor for every frame out of the global cloud."""

    default_output = "."

    @classmethod
    def params_schema(cls) -> dict:
        """
        :cloud: Global cloud relative to the sequence, needs a `.times` sidecar.
        :channels: Float values per point record in the cloud file (3 or 4).
        :frames: Text file of frame stems, defaults to the stems of the image directory.
        :radius: Submap radius around the sensor in meters.
        :time_window: Time before and after the frame a point must have been observed, e.g. 500ms.
        :self_strike_radius: Points observed closer to the carrier are removed, in meters.
        """
        return super().params_schema() | {
            Optional("cloud", default="map.bin"): str,
            Optional("channels", default=4): All(Coerce(int), Range(min=3, max=4)),
            Optional("frames", default=None): Maybe(str),
            Optional("radius", default=45.0): Positive(),
            Optional("time_window", default=1.0): All(TimeToSeconds(), NonNegative()),
            Optional("self_strike_radius", default=2.0): NonNegative(),
        }

    def frame_stems(self, layout: SequenceLayout) -> list[str]:
        """Stems of the frames to extract."""
        if self.params["frames"] is None:
            return layout.stems(SequenceLayout.IMAGES)

        with open(self.params["frames"], "r", encoding="utf-8") as file:
            return [line.strip() for line in file if line.strip()]

    def __call__(self, report) -> bool:
        layout = SequenceLayout(self.params["sequence"])
        spec = SubmapSpec(
            self.params["radius"], self.params["time_window"], self.params["self_strike_radius"]
        )

        cloud = read_cloud(os.path.join(layout.root, self.params["cloud"]), self.params["channels"])
        trajectory = layout.trajectory
        stems = self.frame_stems(layout)

        target = SequenceLayout(self.output_dir)
        os.makedirs(target.path(SequenceLayout.CLOUDS), exist_ok=True)

        extract = lambda s: extract_submap(cloud, layout.timestamp(s), trajectory, spec)
        sizes = {}

        for stem, submap in zip(stems, self.executor.map(extract, stems)):
            path = target.path(SequenceLayout.CLOUDS, stem)
            write_cloud_bin(path, submap, self.params["channels"])
            write_times(f"{os.path.splitext(path)[0]}.times", submap.times)
            sizes[stem] = len(submap)

        self.logger.info("Extracted %d submaps.", len(sizes))
        report["submaps.count"] = len(sizes)
        report["submaps.empty"] = sum(1 for n in sizes.values() if not n)
        report["submaps.points"] = sizes
        report["output"] = target.path(SequenceLayout.CLOUDS)
        return True


@Importable
class TransferLabels(LabelTransferStage):
    """Transfers the index label images of a sequence onto its global cloud or submaps."""

    @classmethod
    def params_schema(cls) -> dict:
        """
        :mode: `global` labels the global cloud, `submap` every cloud in the Clouds directory.
        :cloud: Global cloud relative to the sequence, used in global mode.
        :channels: Float values per point record in the cloud files (3 or 4).
        :gamma: Exponent of the visibility kernel, must be negative.
        :max_range: Points farther from the camera are not labelled, in meters.
        :min_range: Points closer to the camera are not labelled, in meters.
        :slack: Degrees beyond 90 a surface may face away from the camera.
        :k: Number of nearest neighbors for normal estimation.
        :facing: Whether to discard points whose surface faces away from the camera.
        :normals: Normals file written by estimate-normals, estimated when not given.
        """
        # pylint: disable=E1120
        return super().params_schema() | {
            Optional("mode", default="global"): Any("global", "submap"),
            Optional("cloud", default="map.bin"): str,
            Optional("channels", default=4): All(Coerce(int), Range(min=3, max=4)),
            Optional("gamma", default=-0.1): All(Coerce(float), Range(max=0, max_included=False)),
            Optional("max_range", default=45.0): Positive(),
            Optional("min_range", default=2.0): NonNegative(),
            Optional("slack", default=10.0): All(Coerce(float), Range(min=0, max=90)),
            Optional("k", default=10): All(Coerce(int), Range(min=3)),
            Optional("facing", default=True): Boolean(),
            Optional("normals", default=None): Maybe(str),
        }

    @property
    def ghpr_config(self) -> GhprConfig:
        """Visibility configuration from the parameters."""
        return GhprConfig(self.params["gamma"], self.params["max_range"], self.params["min_range"])

    def label(self, cloud: LabeledCloud, frames: list, trajectory: Trajectory, normals=None):
        """Histograms of all points of `cloud`."""
        if self.params["facing"] and normals is None:
            if cloud.times is None:
                self.logger.warning("Cloud has no observation times, skipping the facing test.")
            else:
                normals = estimate_normals(
                    cloud, self.params["k"], trajectory, executor=self.executor
                ).normals

        return accumulate_histograms(
            cloud.points,
            frames,
            self.ghpr_config,
            self.params["slack"],
            ONTOLOGY.num_classes,
            normals if self.params["facing"] else None,
            self.executor,
        )

    def write(self, base: str, cloud: LabeledCloud):
        """Writes points, times, mode labels and histograms of a labelled cloud."""
        write_cloud_bin(f"{base}.bin", cloud, self.params["channels"])
        write_label_file(f"{base}.label", ONTOLOGY.to_raw(cloud.modes))
        write_histogram_csv(f"{base}.csv", cloud.histograms)
        if cloud.times is not None:
            write_times(f"{base}.times", cloud.times)

    def run_global(self, layout: SequenceLayout, frames: list) -> tuple[np.ndarray, int]:
        """Labels the global cloud, returns all histograms and the number of kept points."""
        cloud = read_cloud(os.path.join(layout.root, self.params["cloud"]), self.params["channels"])

        normals = None
        if self.params["normals"]:
            normals = np.load(self.params["normals"])[:, :3]
            if len(normals) != len(cloud):
                raise ShapeMismatchError(f"{len(normals)} normals for {len(cloud)} points.")

        histograms = self.label(cloud, frames, layout.trajectory, normals)
        observed = histograms.sum(axis=1) > 0
        labelled = cloud.subset(observed).with_histograms(histograms[observed])

        stem = os.path.splitext(os.path.basename(self.params["cloud"]))[0]
        self.write(os.path.join(self.output_dir, stem), labelled)
        return histograms, len(labelled)

    def run_submaps(self, layout: SequenceLayout, frames: list) -> tuple[np.ndarray, int]:
        """Labels every submap, points stay in their sensor frame."""
        target = SequenceLayout(self.output_dir)
        for subdir in (SequenceLayout.CLOUDS, SequenceLayout.LABELS, SequenceLayout.HISTS):
            os.makedirs(target.path(subdir), exist_ok=True)

        parts, kept = [], 0
        for stem in layout.stems(SequenceLayout.CLOUDS):
            path = layout.path(SequenceLayout.CLOUDS, stem)
            local = read_cloud(path, self.params["channels"])
            pose = layout.trajectory.pose_at(layout.timestamp(stem), self.params["pose_mode"])

            world = LabeledCloud(pose.transform(local.points), local.times, local.intensity)
            histograms = self.label(world, frames, layout.trajectory)
            observed = histograms.sum(axis=1) > 0

            labelled = local.subset(observed).with_histograms(histograms[observed])
            self.write_submap(target, stem, labelled)

            self.logger.debug("Submap %s: %d of %d labelled.", stem, len(labelled), len(local))
            parts.append(histograms)
            kept += len(labelled)

        if not parts:
            return np.zeros((0, ONTOLOGY.num_classes), dtype=np.int64), 0
        return np.concatenate(parts), kept

    def write_submap(self, target: SequenceLayout, stem: str, cloud: LabeledCloud):
        """Writes a labelled submap into the Clouds, Labels and Hists directories."""
        path = target.path(SequenceLayout.CLOUDS, stem)
        write_cloud_bin(path, cloud, self.params["channels"])
        if cloud.times is not None:
            write_times(f"{os.path.splitext(path)[0]}.times", cloud.times)

        write_label_file(target.path(SequenceLayout.LABELS, stem), ONTOLOGY.to_raw(cloud.modes))
        write_histogram_csv(target.path(SequenceLayout.HISTS, stem), cloud.histograms)

    def __call__(self, report) -> bool:
        layout = SequenceLayout(self.params["sequence"])
        frames = load_frames(layout, ONTOLOGY, self.params["pose_mode"])
        self.logger.info("Loaded %d frames.", len(frames))

        if self.params["mode"] == "global":
            histograms, kept = self.run_global(layout, frames)
        else:
            histograms, kept = self.run_submaps(layout, frames)

        summary = histogram_summary(histograms)
        self.logger.info("Labelled %d of %d points.", kept, len(histograms))

        report["mode"] = self.params["mode"]
        report["frames"] = len(frames)
        report["points.total"] = len(histograms)
        report["points.kept"] = kept
        report["points.dropped"] = len(histograms) - kept
        report["points.ambiguous"] = summary["ambiguous"]
        report["hits.total"] = summary["hits"]
        report["hits.per_class"] = summary["per_class"]
        report["output"] = self.output_dir
        return True
