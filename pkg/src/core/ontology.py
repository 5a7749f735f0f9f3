"""Class ontology: raw annotation classes, merge rules and evaluation indices."""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from core.errors import UnknownClassIndexError

__all__ = ["IGNORE", "ClassOntology", "ONTOLOGY"]

IGNORE = 255

RAW_CLASSES = (
    "asphalt",
    "bush",
    "dirt",
    "fence",
    "grass",
    "gravel",
    "log",
    "mud",
    "other-object",
    "other-terrain",
    "pole",
    "rock",
    "sky",
    "structure",
    "tree-foliage",
    "tree-trunk",
    "vehicle",
    "water",
)


@dataclass(frozen=True, eq=False)
class ClassOntology:
    """Raw classes as annotated and the merged class sets used for evaluation.

    Evaluation indices are assigned by sorting the merged class names alphabetically,
    raw indices follow the order of `raw_classes`."""

    raw_classes: tuple[str, ...] = RAW_CLASSES
    merge_map: dict[str, str] = field(
        default_factory=lambda: {"pole": "other-object", "asphalt": "other-terrain"}
    )
    excluded: frozenset[str] = frozenset({"vehicle"})
    excluded_3d: frozenset[str] = frozenset({"sky", "water", "other-terrain"})

    def __post_init__(self):
        if len(set(self.raw_classes)) != len(self.raw_classes):
            raise ValueError("Raw class names must be unique.")

        if unknown := set(self.merge_map) - set(self.raw_classes):
            raise ValueError(f"Merge sources {sorted(unknown)} are not raw classes.")

        if unknown := set(self.merge_map.values()) - set(self.eval2d):
            raise ValueError(f"Merge targets {sorted(unknown)} are not evaluation classes.")

        if overlap := set(self.excluded) & set(self.eval2d):
            raise ValueError(f"Excluded classes {sorted(overlap)} are evaluated.")

        if unknown := set(self.excluded_3d) - set(self.eval2d):
            raise ValueError(f"3D exclusions {sorted(unknown)} are not evaluation classes.")

    @cached_property
    def eval2d(self) -> tuple[str, ...]:
        """Alphabetically sorted classes of the 2D benchmark."""
        merged = {self.merge_map.get(c, c) for c in self.raw_classes if c not in self.excluded}
        return tuple(sorted(merged))

    @cached_property
    def eval3d(self) -> tuple[str, ...]:
        """Classes of the 3D benchmark, a subset of `eval2d` keeping its indices."""
        return tuple(c for c in self.eval2d if c not in self.excluded_3d)

    @property
    def num_classes(self) -> int:
        """Number of histogram and confusion matrix columns."""
        return len(self.eval2d)

    @cached_property
    def eval3d_indices(self) -> np.ndarray:
        """`eval2d` indices of the 3D benchmark classes."""
        return np.array([self.index(c) for c in self.eval3d], dtype=np.int64)

    def index(self, name: str) -> int:
        """Returns the evaluation index of a class name, merged names are resolved."""
        name = self.merge_map.get(name, name)
        try:
            return self.eval2d.index(name)
        except ValueError as e:
            raise UnknownClassIndexError(f"Class `{name}` is not evaluated.") from e

    def indices(self, names: list[str]) -> list[int]:
        """Evaluation indices of several class names."""
        return [self.index(n) for n in names]

    @cached_property
    def raw_lookup(self) -> np.ndarray:
        """Maps raw indices to evaluation indices, excluded classes map to IGNORE."""
        lookup = np.full(len(self.raw_classes), IGNORE, dtype=np.uint8)
        for i, name in enumerate(self.raw_classes):
            if name not in self.excluded:
                lookup[i] = self.index(name)
        return lookup

    @cached_property
    def eval_lookup(self) -> np.ndarray:
        """Maps evaluation indices to the raw index of the class with the same name."""
        return np.array([self.raw_classes.index(c) for c in self.eval2d], dtype=np.uint32)

    def merge_raw(self, raw: np.ndarray) -> np.ndarray:
        """Applies merging and exclusion to raw class indices."""
        raw = np.asarray(raw)
        if len(invalid := raw[(raw < 0) | (raw >= len(self.raw_classes))]):
            values, counts = np.unique(invalid, return_counts=True)
            found = dict(zip(values.tolist(), counts.tolist()))
            raise UnknownClassIndexError(f"Unknown raw class indices {found}.", found)

        return self.raw_lookup[raw.astype(np.int64)]

    def to_raw(self, indices: np.ndarray) -> np.ndarray:
        """Converts evaluation indices to raw indices for `.label` files."""
        indices = self.validate(indices, allow_ignore=False)
        return self.eval_lookup[indices.astype(np.int64)]

    def validate(self, indices: np.ndarray, allow_ignore: bool = True) -> np.ndarray:
        """Ensures all values are evaluation indices or, if allowed, IGNORE."""
        indices = np.asarray(indices)
        bad = (indices < 0) | (indices >= self.num_classes)
        if allow_ignore:
            bad &= indices != IGNORE

        if len(invalid := indices[bad]):
            values, counts = np.unique(invalid, return_counts=True)
            found = dict(zip(values.tolist(), counts.tolist()))
            raise UnknownClassIndexError(f"Unknown class indices (value: count) {found}.", found)

        return indices


ONTOLOGY = ClassOntology()
