"""Consistency checks of a sequence directory."""

import os
from concurrent.futures import Executor
from dataclasses import dataclass, field

from voluptuous import All, Any, Coerce, IsDir, Optional, Range

from core.abstract import AbstractStage
from core.errors import GeometryError, LabelCloudError
from core.logger import get_logger
from core.ontology import ONTOLOGY
from core.stages import Importable
from core.validation import EnvironmentVar

from modules.dataio import (
    SequenceLayout,
    read_cloud_bin,
    read_histogram_csv,
    read_index_label_png,
    read_label_file,
    read_times,
)

logger = get_logger("sequence")

__all__ = ["Violation", "SequenceCheck", "validate_sequence"]

MISSING_FILE = "missing file"
MALFORMED_FILE = "malformed file"
BAD_FILE_NAME = "file name is not a timestamp"
COUNT_MISMATCH = "point count mismatch"
SIZE_MISMATCH = "image size mismatch"
NO_POSE = "no pose for timestamp"
POSES_UNREADABLE = "poses unreadable"
CALIBRATION_UNREADABLE = "calibration unreadable"

# directories whose stems must correspond to each other when both exist
PAIRS = (
    (SequenceLayout.IMAGES, SequenceLayout.INDEX_LABELS),
    (SequenceLayout.CLOUDS, SequenceLayout.LABELS),
    (SequenceLayout.CLOUDS, SequenceLayout.HISTS),
)
CHECKED = (
    SequenceLayout.IMAGES,
    SequenceLayout.INDEX_LABELS,
    SequenceLayout.CLOUDS,
    SequenceLayout.LABELS,
    SequenceLayout.HISTS,
)


@dataclass(frozen=True)
class Violation:
    """One inconsistency found in a sequence."""

    kind: str
    path: str
    detail: str = ""

    def as_dict(self) -> dict:
        """Report representation."""
        return {"kind": self.kind, "path": self.path, "detail": self.detail}


@dataclass
class SequenceCheck:
    """Result of `validate_sequence`."""

    root: str
    stems: dict[str, list[str]] = field(default_factory=dict)
    violations: list[Violation] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """True without any violation."""
        return not self.violations

    def add(self, kind: str, path: str, detail: str = ""):
        """Records a violation."""
        logger.debug("%s: %s %s", kind, path, detail)
        self.violations.append(Violation(kind, os.path.relpath(path, self.root), detail))

    def counts(self) -> dict[str, int]:
        """Number of violations per kind."""
        counts = {}
        for v in self.violations:
            counts[v.kind] = counts.get(v.kind, 0) + 1
        return counts


def _list_stems(layout: SequenceLayout, subdir: str, check: SequenceCheck) -> list[str]:
    directory, suffix = layout.path(subdir), layout.SUFFIXES[subdir]
    if not os.path.isdir(directory):
        return []

    stems = []
    for name in sorted(os.listdir(directory)):
        if not name.endswith(suffix):
            continue

        stem = name.removesuffix(suffix)
        try:
            layout.timestamp(stem)
        except LabelCloudError:
            check.add(BAD_FILE_NAME, os.path.join(directory, name))
            continue
        stems.append(stem)

    return sorted(stems, key=lambda s: (layout.timestamp(s), s))


def _check_pairs(layout: SequenceLayout, check: SequenceCheck):
    for left, right in PAIRS:
        if not (os.path.isdir(layout.path(left)) and os.path.isdir(layout.path(right))):
            continue

        a, b = set(check.stems[left]), set(check.stems[right])
        for stem in sorted(a - b, key=layout.timestamp):
            check.add(MISSING_FILE, layout.path(right, stem), f"counterpart of {left}/{stem}")
        for stem in sorted(b - a, key=layout.timestamp):
            check.add(MISSING_FILE, layout.path(left, stem), f"counterpart of {right}/{stem}")


def _check_cloud(layout: SequenceLayout, stem: str, channels: int) -> list[tuple]:
    """Violations of one cloud and the files holding per-point values for it."""
    found = []
    path = layout.path(SequenceLayout.CLOUDS, stem)

    try:
        points = len(read_cloud_bin(path, channels))
    except LabelCloudError as e:
        return [(MALFORMED_FILE, path, str(e))]

    times = f"{os.path.splitext(path)[0]}.times"
    readers = [(times, read_times)] if os.path.exists(times) else []

    labels = layout.path(SequenceLayout.LABELS, stem)
    if os.path.exists(labels):
        readers.append((labels, read_label_file))

    hists = layout.path(SequenceLayout.HISTS, stem)
    if os.path.exists(hists):
        readers.append((hists, read_histogram_csv))

    for other, reader in readers:
        try:
            values = len(reader(other))
        except LabelCloudError as e:
            found.append((MALFORMED_FILE, other, str(e)))
            continue

        if values != points:
            found.append((COUNT_MISMATCH, other, f"{values} records but {points} points"))

    return found


def _check_image(layout: SequenceLayout, stem: str, size: tuple | None) -> list[tuple]:
    path = layout.path(SequenceLayout.INDEX_LABELS, stem)
    try:
        raster = read_index_label_png(path, ONTOLOGY)
    except LabelCloudError as e:
        return [(MALFORMED_FILE, path, str(e))]

    if size is not None and (raster.width, raster.height) != size:
        shape = f"{raster.width}x{raster.height}"
        return [(SIZE_MISMATCH, path, f"{shape} but calibration is {size[0]}x{size[1]}")]
    return []


def validate_sequence(
    directory: str,
    *,
    pose_mode: str = "exact",
    channels: int = 4,
    executor: Executor = None,
) -> SequenceCheck:
    """Checks the files of a sequence against each other.

    Stems of paired directories must correspond, per-point files must match the point count
    of their cloud, every stem needs a pose and the calibration must be readable. All
    violations are collected, nothing is raised for inconsistent content."""
    layout = SequenceLayout(directory)
    check = SequenceCheck(directory)

    for subdir in CHECKED:
        check.stems[subdir] = _list_stems(layout, subdir, check)

    _check_pairs(layout, check)

    size = None
    try:
        camera = layout.camera
        size = (camera.width, camera.height)
    except (LabelCloudError, ValueError) as e:
        check.add(CALIBRATION_UNREADABLE, layout.calibration_path, str(e))

    mapper = map if executor is None else executor.map
    clouds = check.stems[SequenceLayout.CLOUDS]
    images = check.stems[SequenceLayout.INDEX_LABELS]

    for found in mapper(lambda s: _check_cloud(layout, s, channels), clouds):
        for violation in found:
            check.add(*violation)

    for found in mapper(lambda s: _check_image(layout, s, size), images):
        for violation in found:
            check.add(*violation)

    try:
        trajectory = layout.trajectory
    except (LabelCloudError, ValueError) as e:
        check.add(POSES_UNREADABLE, layout.poses_path, str(e))
        return check

    stems = sorted({s for subdir in CHECKED for s in check.stems[subdir]}, key=layout.timestamp)
    for stem in stems:
        try:
            trajectory.pose_at(layout.timestamp(stem), pose_mode)
        except GeometryError as e:
            check.add(NO_POSE, os.path.join(directory, stem), str(e))

    return check


@Importable
class ValidateSequence(AbstractStage):
    """Checks a sequence directory for missing, malformed and inconsistent files."""

    @classmethod
    def params_schema(cls) -> dict:
        """
        :sequence: Sequence directory to check.
        :pose_mode: Pose lookup at file timestamps, `exact` or `interpolate`.
        :channels: Float values per point record in the cloud files (3 or 4).
        """
        # pylint: disable=E1120
        return {
            "sequence": All(EnvironmentVar(), IsDir()),
            Optional("pose_mode", default="exact"): Any("exact", "interpolate"),
            Optional("channels", default=4): All(Coerce(int), Range(min=3, max=4)),
        }

    def __call__(self, report) -> bool:
        check = validate_sequence(
            self.params["sequence"],
            pose_mode=self.params["pose_mode"],
            channels=self.params["channels"],
            executor=self.executor,
        )

        for v in check.violations:
            self.logger.warning("%s: %s %s", v.kind, v.path, v.detail)

        status = "passed" if check.passed else "failed"
        self.logger.info("Sequence check %s with %d violations.", status, len(check.violations))

        report["passed"] = check.passed
        report["files"] = {k: len(v) for k, v in check.stems.items()}
        report["violations.count"] = len(check.violations)
        report["violations.kinds"] = check.counts()
        report["violations.list"] = [v.as_dict() for v in check.violations]
        return check.passed
