"""Exceptions raised by LabelCloud modules."""

__all__ = [
    "LabelCloudError",
    "DataFormatError",
    "DataReadError",
    "MalformedBinError",
    "MalformedLabelError",
    "UnknownClassIndexError",
    "DuplicateTimestampError",
    "NonFiniteValueError",
    "MissingColumnError",
    "MissingFieldError",
    "NonPositiveFocalError",
    "RowLengthMismatchError",
    "GeometryError",
    "NoPoseAtTimeError",
    "OutOfRangeError",
    "InsufficientPointsError",
    "MissingTimestampsError",
    "TransferError",
    "NoFramesError",
    "FrameWithoutPoseError",
    "ShapeMismatchError",
    "SplitError",
    "TooFewSamplesError",
    "EmptySetError",
    "SingletonSetError",
    "NoValidCandidatesError",
    "EmptyAfterFilterError",
    "EvaluationError",
    "LengthMismatchError",
    "ZeroHistogramError",
]


class LabelCloudError(Exception):
    """Base class of all errors raised by LabelCloud."""


# --- Files and formats


class DataFormatError(LabelCloudError, ValueError):
    """A file or value does not follow its declared format."""


class DataReadError(LabelCloudError, OSError):
    """A file could not be read or written."""


class MalformedBinError(DataFormatError):
    """Cloud file length is not a multiple of the record size."""


class MalformedLabelError(DataFormatError):
    """Label file length is not a multiple of 4 bytes."""


class UnknownClassIndexError(DataFormatError):
    """A class index is outside of the ontology."""

    def __init__(self, message: str, values: dict[int, int] = None):
        super().__init__(message)
        self.values = values or {}


class DuplicateTimestampError(DataFormatError):
    """Two poses share one timestamp."""


class NonFiniteValueError(DataFormatError):
    """A numeric field holds NaN or infinity."""


class MissingColumnError(DataFormatError):
    """A CSV file lacks a required column."""


class MissingFieldError(DataFormatError):
    """A YAML document lacks a required field."""


class NonPositiveFocalError(DataFormatError):
    """Camera focal length is zero or negative."""


class RowLengthMismatchError(DataFormatError):
    """A CSV row does not have the expected number of columns."""


# --- Geometry


class GeometryError(LabelCloudError):
    """Base class for pose and point cloud errors."""


class NoPoseAtTimeError(GeometryError):
    """No pose exists within the synchronisation tolerance."""


class OutOfRangeError(GeometryError):
    """A timestamp lies outside of the trajectory span."""


class InsufficientPointsError(GeometryError):
    """The cloud has fewer points than the operation requires."""


class MissingTimestampsError(GeometryError):
    """Per-point observation times are required but absent."""


# --- Label transfer


class TransferError(LabelCloudError):
    """Base class for label transfer errors."""


class NoFramesError(TransferError):
    """No camera frames were given."""


class FrameWithoutPoseError(TransferError):
    """A camera frame has no pose."""


class ShapeMismatchError(TransferError):
    """Histogram arrays of different shapes cannot be merged."""


# --- Split generation


class SplitError(LabelCloudError):
    """Base class for split generation errors."""


class TooFewSamplesError(SplitError):
    """Fewer samples than clusters."""


class EmptySetError(SplitError):
    """A train, val or test set has no samples."""


class SingletonSetError(SplitError):
    """A set has less than two samples, the silhouette is undefined."""


class NoValidCandidatesError(SplitError):
    """Every candidate split was rejected."""


class EmptyAfterFilterError(SplitError):
    """A sub-split filter removed all samples of one side."""


# --- Evaluation


class EvaluationError(LabelCloudError):
    """Base class for evaluation errors."""


class LengthMismatchError(EvaluationError, ValueError):
    """Ground truth and prediction differ in length."""


class ZeroHistogramError(EvaluationError, ValueError):
    """A label histogram without any observation."""
