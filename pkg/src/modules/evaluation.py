"""Segmentation metrics and label ambiguity analysis."""

import csv
import os
from dataclasses import dataclass, field

import numpy as np
from voluptuous import All, Any, Boolean, Maybe, Optional, PathExists

from core.abstract import AbstractStage
from core.cloud import modes_from_histograms
from core.errors import (
    DataFormatError,
    DataReadError,
    LengthMismatchError,
    UnknownClassIndexError,
    ZeroHistogramError,
)
from core.logger import get_logger
from core.ontology import IGNORE, ONTOLOGY
from core.stages import Importable
from core.validation import AlwaysList, EnvironmentVar

from modules.dataio import read_histogram_csv, read_index_label_png, read_label_file

logger = get_logger("evaluation")

__all__ = [
    "ConfusionMatrix",
    "CooccurrenceMatrix",
    "accumulate_confusion",
    "iou_per_class",
    "miou",
    "cooccurrence",
    "diagonal_mean",
    "write_iou_csv",
    "write_cooccurrence_csv",
]


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """Counts of ground truth (rows) against predicted (columns) classes.

    `missed` counts ground truth per class without any prediction, they are false
    negatives of their class but false positives of none."""

    counts: np.ndarray
    missed: np.ndarray = None

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"Confusion matrix must be square, got shape {counts.shape}.")

        missed = np.zeros(len(counts), np.int64) if self.missed is None else self.missed
        missed = np.asarray(missed, dtype=np.int64).reshape(len(counts))

        if np.any(counts < 0) or np.any(missed < 0):
            raise ValueError("Confusion counts must not be negative.")

        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "missed", missed)

    @classmethod
    def zeros(cls, num_classes: int) -> "ConfusionMatrix":
        """Empty matrix."""
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64))

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise ValueError(f"Cannot add {self.counts.shape} and {other.counts.shape}.")
        return ConfusionMatrix(self.counts + other.counts, self.missed + other.missed)

    def __eq__(self, other):
        if not isinstance(other, ConfusionMatrix):
            return NotImplemented
        return np.array_equal(self.counts, other.counts) and np.array_equal(
            self.missed, other.missed
        )

    @property
    def num_classes(self) -> int:
        """Number of rows and columns."""
        return len(self.counts)

    @property
    def tp(self) -> np.ndarray:
        """True positives per class."""
        return np.diag(self.counts)

    @property
    def fp(self) -> np.ndarray:
        """False positives per class."""
        return self.counts.sum(axis=0) - self.tp

    @property
    def fn(self) -> np.ndarray:
        """False negatives per class, including missed predictions."""
        return self.counts.sum(axis=1) - self.tp + self.missed

    @property
    def support(self) -> np.ndarray:
        """Ground truth count per class."""
        return self.counts.sum(axis=1) + self.missed


def _check_indices(values: np.ndarray, num_classes: int, what: str):
    bad = (values >= num_classes) & (values != IGNORE)
    if bad.any():
        found, counts = np.unique(values[bad], return_counts=True)
        found = dict(zip(found.tolist(), counts.tolist()))
        raise UnknownClassIndexError(f"Unknown {what} class indices {found}.", found)


def accumulate_confusion(
    gt: np.ndarray,
    pred: np.ndarray,
    existing: ConfusionMatrix = None,
    num_classes: int = None,
) -> ConfusionMatrix:
    """Adds pairs of ground truth and predicted classes to a confusion matrix.

    Pairs with IGNORE ground truth are skipped, IGNORE predictions count as missed."""
    gt, pred = np.asarray(gt).reshape(-1), np.asarray(pred).reshape(-1)
    if len(gt) != len(pred):
        raise LengthMismatchError(f"{len(gt)} ground truth but {len(pred)} predicted labels.")

    if existing is not None:
        num_classes = existing.num_classes
    elif num_classes is None:
        num_classes = ONTOLOGY.num_classes

    if np.any(gt < 0) or np.any(pred < 0):
        raise UnknownClassIndexError("Class indices must not be negative.")

    _check_indices(gt, num_classes, "ground truth")
    _check_indices(pred, num_classes, "predicted")

    gt, pred = gt.astype(np.int64), pred.astype(np.int64)
    valid = gt != IGNORE
    predicted = valid & (pred != IGNORE)

    flat = np.bincount(
        gt[predicted] * num_classes + pred[predicted], minlength=num_classes * num_classes
    )
    missed = np.bincount(gt[valid & ~predicted], minlength=num_classes)

    matrix = ConfusionMatrix(flat.reshape(num_classes, num_classes), missed)
    return matrix if existing is None else existing + matrix


def iou_per_class(cm: ConfusionMatrix) -> np.ndarray:
    """TP / (TP + FP + FN) per class, NaN where the denominator is zero."""
    union = cm.tp + cm.fp + cm.fn
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(union > 0, cm.tp / np.maximum(union, 1), np.nan)


def miou(cm: ConfusionMatrix, classes=None, undefined: str = "zero") -> float:
    """Mean IoU over `classes` (indices, all by default).

    Undefined IoUs count as 0 with `zero` and are left out with `skip`."""
    iou = iou_per_class(cm)
    if classes is not None:
        iou = iou[np.asarray(classes, dtype=np.int64)]

    if undefined == "zero":
        return float(np.nan_to_num(iou, nan=0.0).mean()) if len(iou) else float("nan")
    if undefined == "skip":
        defined = iou[np.isfinite(iou)]
        return float(defined.mean()) if len(defined) else float("nan")

    raise ValueError(f"Unknown policy `{undefined}` for undefined IoUs.")


@dataclass(frozen=True, eq=False)
class CooccurrenceMatrix:
    """Row a holds the mean label composition of points whose mode is a."""

    matrix: np.ndarray
    support: np.ndarray
    class_names: tuple[str, ...] = field(default=ONTOLOGY.eval2d)

    @property
    def purity(self) -> np.ndarray:
        """Diagonal, NaN for rows without support."""
        return np.where(self.support > 0, np.diag(self.matrix), np.nan)

    def diagonal_mean(self) -> float:
        """Mean purity over supported rows."""
        return diagonal_mean(self)


def cooccurrence(
    histograms: np.ndarray,
    modes: np.ndarray = None,
    mass_weighted: bool = False,
    class_names=ONTOLOGY.eval2d,
) -> CooccurrenceMatrix:
    """Aggregates label histograms by the mode of each point.

    By default every point contributes its normalized histogram once, with `mass_weighted`
    points contribute proportionally to their number of observations. Rows are divided by
    their total weight, so every supported row sums to one."""
    histograms = np.asarray(histograms, dtype=np.int64)
    if histograms.ndim != 2 or not len(histograms):
        raise ZeroHistogramError("Co-occurrence needs at least one histogram.")

    totals = histograms.sum(axis=1)
    if len(empty := np.flatnonzero(totals <= 0)):
        raise ZeroHistogramError(f"{len(empty)} histograms without observations, e.g. #{empty[0]}.")

    expected = modes_from_histograms(histograms)
    if modes is not None and not np.array_equal(np.asarray(modes).reshape(-1), expected):
        raise DataFormatError("Modes do not match the histograms.")

    num_classes = histograms.shape[1]
    weights = np.ones(len(histograms)) if not mass_weighted else totals.astype(np.float64)
    rows = expected.astype(np.int64)

    accumulated = np.zeros((num_classes, num_classes), dtype=np.float64)
    mass = np.zeros(num_classes, dtype=np.float64)
    np.add.at(accumulated, rows, histograms / totals[:, None] * weights[:, None])
    np.add.at(mass, rows, weights)

    support = np.bincount(rows, minlength=num_classes)
    with np.errstate(divide="ignore", invalid="ignore"):
        matrix = np.where(mass[:, None] > 0, accumulated / mass[:, None], 0.0)

    return CooccurrenceMatrix(matrix, support, tuple(class_names)[:num_classes])


def diagonal_mean(matrix: CooccurrenceMatrix | np.ndarray) -> float:
    """Mean diagonal value over supported rows, rows summing to zero are unsupported."""
    if isinstance(matrix, CooccurrenceMatrix):
        supported = matrix.support > 0
        matrix = matrix.matrix
    else:
        matrix = np.asarray(matrix, dtype=np.float64)
        supported = matrix.sum(axis=1) > 0

    if not supported.any():
        return float("nan")
    return float(np.diag(matrix)[supported].mean())


def write_iou_csv(path: str, cm: ConfusionMatrix, classes, class_names=ONTOLOGY.eval2d):
    """Writes one row with IoU and counts per evaluated class."""
    iou = iou_per_class(cm)
    try:
        with open(path, "w", newline="", encoding="utf-8") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(["class", "iou", "tp", "fp", "fn"])
            for c in classes:
                value = "" if np.isnan(iou[c]) else repr(float(iou[c]))
                writer.writerow([class_names[c], value, cm.tp[c], cm.fp[c], cm.fn[c]])
    except OSError as e:
        raise DataReadError(f"Cannot write {path}: {e.strerror or e}") from e


def write_cooccurrence_csv(path: str, matrix: CooccurrenceMatrix):
    """Writes the matrix with the mode class and the support in front of each row."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(["mode", "support", *matrix.class_names])
            for name, support, row in zip(matrix.class_names, matrix.support, matrix.matrix):
                writer.writerow([name, int(support), *(repr(float(v)) for v in row)])
    except OSError as e:
        raise DataReadError(f"Cannot write {path}: {e.strerror or e}") from e


def _pairs(gt: str, pred: str, suffix: str) -> list[tuple[str, str, str]]:
    """Matching (name, ground truth, prediction) files of two files or directories."""
    if not os.path.isdir(gt):
        return [(os.path.basename(gt), gt, pred)]

    names = sorted(f for f in os.listdir(gt) if f.endswith(suffix))
    return [(n.removesuffix(suffix), os.path.join(gt, n), os.path.join(pred, n)) for n in names]


class EvaluationStage(AbstractStage):
    """Common parameters of the mIoU stages."""

    suffix: str = None
    benchmark: tuple[str, ...] = ONTOLOGY.eval2d

    @classmethod
    def params_schema(cls) -> dict:
        """
        :gt: Ground truth file or directory.
        :pred: Prediction file or directory with the same file names.
        :exclude: Class names left out of the mean IoU.
        :undefined: Undefined IoUs count as `zero` or are skipped with `skip`.
        :output: CSV file for the per-class IoU table.
        """
        # pylint: disable=E1120
        return {
            "gt": All(EnvironmentVar(), PathExists()),
            "pred": All(EnvironmentVar(), PathExists()),
            Optional("exclude", default=[]): AlwaysList(str),
            Optional("undefined", default="zero"): Any("zero", "skip"),
            Optional("output", default=None): Maybe(EnvironmentVar()),
        }

    def load(self, gt_path: str, pred_path: str) -> tuple[np.ndarray, np.ndarray]:
        """Ground truth and predicted evaluation indices of one file pair."""
        raise NotImplementedError

    @property
    def classes(self) -> list[int]:
        """Indices of the evaluated classes."""
        excluded = set(self.params["exclude"])
        if unknown := excluded - set(self.benchmark):
            self.logger.warning("Excluded classes %s are not evaluated anyway.", sorted(unknown))
        return [ONTOLOGY.index(c) for c in self.benchmark if c not in excluded]

    def __call__(self, report) -> bool:
        pairs = _pairs(self.params["gt"], self.params["pred"], self.suffix)
        if not pairs:
            self.logger.error("No ground truth files found in %s.", self.params["gt"])
            return False

        loaded = self.executor.map(lambda p: self.load(p[1], p[2]), pairs)
        cm = ConfusionMatrix.zeros(ONTOLOGY.num_classes)

        for (name, *_), (gt, pred) in zip(pairs, loaded):
            try:
                cm = accumulate_confusion(gt, pred, cm)
            except LengthMismatchError as e:
                raise LengthMismatchError(f"{name}: {e}") from e

        classes = self.classes
        iou = iou_per_class(cm)
        value = miou(cm, classes, self.params["undefined"])
        self.logger.info("mIoU over %d classes: %.4f", len(classes), value)

        if self.params["output"]:
            write_iou_csv(self.params["output"], cm, classes)

        report["files"] = len(pairs)
        report["miou"] = value
        report["classes"] = [ONTOLOGY.eval2d[c] for c in classes]
        report["iou"] = {ONTOLOGY.eval2d[c]: iou[c] for c in classes}
        report["support"] = {ONTOLOGY.eval2d[c]: cm.support[c] for c in classes}
        return True


@Importable
class Eval2D(EvaluationStage):
    """Evaluates predicted index label images against ground truth."""

    command = "eval-2d"
    suffix = ".png"

    def load(self, gt_path, pred_path):
        gt = read_index_label_png(gt_path).data
        if not os.path.exists(pred_path):
            self.logger.warning("No prediction for %s, counting it as missed.", gt_path)
            return gt, np.full_like(gt, IGNORE)

        pred = read_index_label_png(pred_path).data
        if gt.shape != pred.shape:
            raise LengthMismatchError(f"Image sizes {gt.shape} and {pred.shape} differ.")
        return gt, pred


@Importable
class Eval3D(EvaluationStage):
    """Evaluates predicted `.label` files against ground truth on the 3D classes."""

    command = "eval-3d"
    suffix = ".label"
    benchmark = ONTOLOGY.eval3d

    def load(self, gt_path, pred_path):
        gt = ONTOLOGY.merge_raw(read_label_file(gt_path))
        gt[np.isin(gt, ONTOLOGY.indices(sorted(ONTOLOGY.excluded_3d)))] = IGNORE
        if not os.path.exists(pred_path):
            self.logger.warning("No prediction for %s, counting it as missed.", gt_path)
            return gt, np.full_like(gt, IGNORE)

        pred = ONTOLOGY.merge_raw(read_label_file(pred_path))
        if len(gt) != len(pred):
            raise LengthMismatchError(f"{len(gt)} ground truth but {len(pred)} predicted points.")
        return gt, pred


@Importable
class Cooccurrence(AbstractStage):
    """Computes the label co-occurrence matrix of transferred label histograms."""

    @classmethod
    def params_schema(cls) -> dict:
        """
        :hists: Histogram CSV file or directory of them.
        :mass_weighted: Weights every point by its number of observations.
        :exclude: Class names left out of the diagonal mean.
        :output: CSV file for the matrix.
        """
        # pylint: disable=E1120
        return {
            "hists": All(EnvironmentVar(), PathExists()),
            Optional("mass_weighted", default=False): Boolean(),
            Optional("exclude", default=[]): AlwaysList(str),
            Optional("output", default=None): Maybe(EnvironmentVar()),
        }

    def __call__(self, report) -> bool:
        files = [p for _, p, _ in _pairs(self.params["hists"], self.params["hists"], ".csv")]
        parts = list(self.executor.map(read_histogram_csv, files))
        histograms = np.concatenate(parts) if parts else np.zeros((0, ONTOLOGY.num_classes))

        observed = histograms.sum(axis=1) > 0
        if skipped := int((~observed).sum()):
            self.logger.warning("Skipping %d points without observations.", skipped)

        matrix = cooccurrence(histograms[observed], mass_weighted=self.params["mass_weighted"])

        excluded = set(ONTOLOGY.indices(self.params["exclude"]))
        supported = [c for c in np.flatnonzero(matrix.support > 0) if c not in excluded]
        value = float(np.diag(matrix.matrix)[supported].mean()) if supported else float("nan")
        self.logger.info("Mean diagonal of the co-occurrence matrix: %.4f", value)

        if self.params["output"]:
            write_cooccurrence_csv(self.params["output"], matrix)

        report["files"] = len(files)
        report["points"] = int(observed.sum())
        report["diagonal_mean"] = value
        report["mass_weighted"] = self.params["mass_weighted"]
        report["support"] = dict(zip(ONTOLOGY.eval2d, matrix.support.tolist()))
        report["purity"] = dict(zip(ONTOLOGY.eval2d, matrix.purity.tolist()))
        return True
