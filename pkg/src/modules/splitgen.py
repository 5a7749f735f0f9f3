"""Train, val and test split generation with geographic buffers.

Samples are clustered into chunks by their map position, chunks are randomly assigned to
the sets and samples too close to another set are moved into a buffer. Out of many such
candidates the one whose sets best match the global class distribution while staying
geographically compact is selected."""

import csv
import os
from collections.abc import Mapping
from concurrent.futures import Executor
from dataclasses import dataclass, field

import numpy as np
import simplejson as json
from scipy.spatial import cKDTree
from sklearn.cluster import KMeans
from sklearn.metrics import silhouette_score
from voluptuous import All, Any, Boolean, Coerce, Invalid, IsFile, Maybe, Optional, Range

from core.abstract import AbstractSequenceStage, AbstractStage
from core.errors import (
    DataFormatError,
    DataReadError,
    EmptyAfterFilterError,
    EmptySetError,
    MissingColumnError,
    NonFiniteValueError,
    NoPoseAtTimeError,
    NoValidCandidatesError,
    OutOfRangeError,
    RowLengthMismatchError,
    SingletonSetError,
    TooFewSamplesError,
)
from core.logger import get_logger
from core.ontology import IGNORE, ONTOLOGY, ClassOntology
from core.settings import Settings
from core.stages import Importable
from core.validation import EnvironmentVar, NonNegative, Ratios

from modules.dataio import SequenceLayout, read_index_label_png

logger = get_logger("splitgen")

__all__ = [
    "SampleSet",
    "SplitConfig",
    "SplitAssignment",
    "DomainFilter",
    "SubSplit",
    "DOMAIN_PRESETS",
    "read_samples",
    "write_samples_csv",
    "collect_samples",
    "kmeans_chunks",
    "apply_buffer",
    "generate_candidate",
    "set_counts",
    "metric_ld",
    "metric_if",
    "metric_kl",
    "metric_sc",
    "split_metrics",
    "score_candidates",
    "generate_split",
    "domain_subsplit",
    "write_split",
    "read_split_json",
]

SETS = ("train", "val", "test")
SET_NAMES = (*SETS, "buffer")
TRAIN, VAL, TEST, BUFFER = range(4)

METRICS = ("LD", "IF", "KL", "SC")
DEFAULT_WEIGHTS = {"LD": 1.0, "IF": 1.0, "KL": 1.0, "SC": 2.0}

SIGMA_GUARD = 1e-12
KL_EPSILON = 1e-9
MAX_ITERATIONS = 300
ATTEMPT_FACTOR = 50

TAGS = ("sequence", "season", "environment")


# --- Samples


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Split samples: map position, class counts and domain tags per sample."""

    ids: tuple[str, ...]
    xy: np.ndarray
    counts: np.ndarray
    sequence: tuple[str, ...] = None
    season: tuple[str, ...] = None
    environment: tuple[str, ...] = None
    class_names: tuple[str, ...] = ONTOLOGY.eval2d

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        n, classes = len(ids), tuple(self.class_names)

        if len(set(ids)) != n:
            raise DataFormatError("Sample ids must be unique.")

        xy = np.asarray(self.xy, dtype=np.float64).reshape(-1, 2)
        counts = np.asarray(self.counts, dtype=np.int64)

        if len(xy) != n or counts.shape != (n, len(classes)):
            raise RowLengthMismatchError(
                f"{n} samples with {len(xy)} positions and counts of shape {counts.shape}."
            )
        if not np.isfinite(xy).all():
            raise NonFiniteValueError("Sample positions must be finite.")
        if np.any(counts < 0):
            raise DataFormatError("Class counts must not be negative.")
        if len(empty := np.flatnonzero(counts.sum(axis=1) == 0)):
            raise DataFormatError(f"Sample `{ids[empty[0]]}` has no class counts.")

        for tag in TAGS:
            values = getattr(self, tag)
            values = ("",) * n if values is None else tuple(str(v) for v in values)
            if len(values) != n:
                raise RowLengthMismatchError(f"{len(values)} {tag} tags for {n} samples.")
            object.__setattr__(self, tag, values)

        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "xy", xy)
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_names", classes)

    def __len__(self):
        return len(self.ids)

    def __repr__(self):
        return f"SampleSet(n={len(self)}, classes={len(self.class_names)})"

    @property
    def present(self) -> np.ndarray:
        """Indices of the classes observed in any sample."""
        return np.flatnonzero(self.counts.sum(axis=0) > 0)

    def tags(self, tag: str) -> np.ndarray:
        """Lower case tag values of all samples."""
        if tag not in TAGS:
            raise ValueError(f"Unknown tag `{tag}`, expected one of {TAGS}.")
        return np.array([v.lower() for v in getattr(self, tag)], dtype=object)

    def subset(self, index) -> "SampleSet":
        """Samples selected by a mask or index array."""
        index = np.arange(len(self))[index]
        pick = lambda values: [values[i] for i in index]  # pylint: disable=C3001
        return SampleSet(
            pick(self.ids),
            self.xy[index],
            self.counts[index],
            *(pick(getattr(self, tag)) for tag in TAGS),
            class_names=self.class_names,
        )

    @classmethod
    def concatenate(cls, parts: list["SampleSet"]) -> "SampleSet":
        """Joins sample sets sharing their classes."""
        if len({p.class_names for p in parts}) > 1:
            raise MissingColumnError("Sample sets have different classes.")
        return cls(
            [i for p in parts for i in p.ids],
            np.concatenate([p.xy for p in parts]),
            np.concatenate([p.counts for p in parts]),
            *([v for p in parts for v in getattr(p, tag)] for tag in TAGS),
            class_names=parts[0].class_names,
        )


def _read_samples_csv(path: str, class_names=None) -> SampleSet:
    with open(path, "r", newline="", encoding="utf-8") as file:
        reader = csv.reader(file)
        header = [h.strip() for h in next(reader, [])]

        if missing := [c for c in ("id", "x", "y") if c not in header]:
            raise MissingColumnError(f"{path}: missing columns {missing}.")

        names = [h for h in header if h not in ("id", "x", "y", *TAGS)]
        if class_names is not None and tuple(names) != tuple(class_names):
            raise MissingColumnError(f"{path}: class columns {names} do not match.")

        rows = []
        for line, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(header):
                raise RowLengthMismatchError(f"{path}:{line}: expected {len(header)} values.")
            rows.append(dict(zip(header, row)))

    try:
        return SampleSet(
            [r["id"] for r in rows],
            [(float(r["x"]), float(r["y"])) for r in rows],
            np.array([[int(r[c]) for c in names] for r in rows], dtype=np.int64).reshape(
                -1, len(names)
            ),
            *([r.get(tag, "") for r in rows] for tag in TAGS),
            class_names=tuple(names),
        )
    except DataFormatError:
        raise
    except ValueError as e:
        raise DataFormatError(f"{path}: {e}") from e


def _read_samples_json(path: str, class_names=None) -> SampleSet:
    with open(path, "r", encoding="utf-8") as file:
        try:
            document = json.load(file)
        except json.JSONDecodeError as e:
            raise DataFormatError(f"{path}: invalid JSON: {e}") from e

    if isinstance(document, list):
        document = {"samples": document}

    names = tuple(document.get("classes") or class_names or ONTOLOGY.eval2d)
    records = document.get("samples", [])

    def counts(record):
        value = record.get("counts", {})
        if isinstance(value, Mapping):
            if unknown := set(value) - set(names):
                raise MissingColumnError(f"{path}: unknown classes {sorted(unknown)}.")
            return [int(value.get(c, 0)) for c in names]
        return [int(v) for v in value]

    try:
        return SampleSet(
            [r["id"] for r in records],
            [(float(r["x"]), float(r["y"])) for r in records],
            np.array([counts(r) for r in records], dtype=np.int64).reshape(-1, len(names)),
            *([r.get(tag, "") for r in records] for tag in TAGS),
            class_names=names,
        )
    except KeyError as e:
        raise MissingColumnError(f"{path}: sample without `{e.args[0]}`.") from e
    except DataFormatError:
        raise
    except (TypeError, ValueError) as e:
        raise DataFormatError(f"{path}: {e}") from e


def read_samples(path: str, class_names=None) -> SampleSet:
    """Reads samples from a CSV or, by extension, a JSON file."""
    try:
        if path.lower().endswith(".json"):
            return _read_samples_json(path, class_names)
        return _read_samples_csv(path, class_names)
    except OSError as e:
        raise DataReadError(f"Cannot read {path}: {e.strerror or e}") from e


def write_samples_csv(path: str, samples: SampleSet):
    """Writes samples with id, position, tags and one column per class."""
    try:
        with open(path, "w", newline="", encoding="utf-8") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(["id", "x", "y", *TAGS, *samples.class_names])

            for i, sample_id in enumerate(samples.ids):
                tags = [getattr(samples, tag)[i] for tag in TAGS]
                x, y = (repr(float(v)) for v in samples.xy[i])
                writer.writerow([sample_id, x, y, *tags, *samples.counts[i].tolist()])
    except OSError as e:
        raise DataReadError(f"Cannot write {path}: {e.strerror or e}") from e


def collect_samples(
    layout: SequenceLayout,
    tag: str,
    season: str = "",
    environment: str = "",
    pose_mode: str = "exact",
    ontology: ClassOntology = ONTOLOGY,
) -> SampleSet:
    """One sample per index label image, positioned at the sensor position of the image."""
    trajectory = layout.trajectory
    ids, xy, counts = [], [], []

    for stem in layout.stems(SequenceLayout.INDEX_LABELS):
        try:
            pose = trajectory.pose_at(layout.timestamp(stem), pose_mode)
        except (NoPoseAtTimeError, OutOfRangeError) as e:
            logger.warning("Skipping image %s: %s", stem, e)
            continue

        data = read_index_label_png(layout.path(SequenceLayout.INDEX_LABELS, stem), ontology).data
        histogram = np.bincount(data[data != IGNORE].ravel(), minlength=ontology.num_classes)

        if not histogram.sum():
            logger.warning("Skipping image %s without labelled pixels.", stem)
            continue

        ids.append(f"{tag}/{stem}")
        xy.append(pose.position[:2])
        counts.append(histogram)

    n = len(ids)
    return SampleSet(
        ids,
        np.array(xy, dtype=np.float64).reshape(-1, 2),
        np.array(counts, dtype=np.int64).reshape(n, ontology.num_classes),
        [tag] * n,
        [season] * n,
        [environment] * n,
        class_names=ontology.eval2d,
    )


# --- Splits


@dataclass(frozen=True)
class SplitConfig:
    """Parameters of the split generation."""

    ratios: tuple[float, float, float] = (0.70, 0.05, 0.25)
    buffer_dist: float = 45.0
    k: int = 50
    num_candidates: int = 1000
    weights: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    seed: int = 0

    def __post_init__(self):
        try:
            object.__setattr__(self, "ratios", tuple(Ratios(3)(self.ratios)))
        except Invalid as e:
            raise ValueError(f"Invalid split ratios: {e}") from e

        if set(self.weights) != set(METRICS) or any(w < 0 for w in self.weights.values()):
            raise ValueError(f"Weights must be non-negative values for {METRICS}.")
        if self.k < 3:
            raise ValueError(f"At least 3 chunks are required, got {self.k}.")
        if self.num_candidates < 1:
            raise ValueError("At least one candidate is required.")
        if not self.buffer_dist >= 0:
            raise ValueError(f"Buffer distance must not be negative, got {self.buffer_dist}.")
        if self.seed < 0:
            raise ValueError(f"Seed must not be negative, got {self.seed}.")


@dataclass(frozen=True, eq=False)
class SplitAssignment:
    """Set of every sample (train, val, test or buffer) with the scores of the split."""

    sets: np.ndarray
    scores: dict[str, float] = field(default_factory=dict)
    seed: int = 0
    k: int = 0
    num_candidates: int = 0

    def __post_init__(self):
        sets = np.asarray(self.sets, dtype=np.int8).reshape(-1)
        if np.any((sets < TRAIN) | (sets > BUFFER)):
            raise ValueError("Set codes must be in [0, 3].")
        object.__setattr__(self, "sets", sets)

    def __len__(self):
        return len(self.sets)

    def members(self, name: str) -> np.ndarray:
        """Indices of the samples in one set."""
        return np.flatnonzero(self.sets == SET_NAMES.index(name))

    def sizes(self) -> dict[str, int]:
        """Number of samples per set."""
        return {name: int(np.sum(self.sets == i)) for i, name in enumerate(SET_NAMES)}

    def ratios(self) -> dict[str, float]:
        """Share of all samples per set."""
        return {k: v / max(len(self), 1) for k, v in self.sizes().items()}

    def labels(self) -> list[str]:
        """Set name per sample."""
        return [SET_NAMES[s] for s in self.sets]


def _codes(split: SplitAssignment | np.ndarray) -> np.ndarray:
    return split.sets if isinstance(split, SplitAssignment) else np.asarray(split)


def kmeans_chunks(samples: SampleSet | np.ndarray, k: int, seed: int = 0) -> np.ndarray:
    """Clusters samples by map position with k-means++ seeded Lloyd iterations."""
    xy = np.asarray(samples.xy if isinstance(samples, SampleSet) else samples, dtype=np.float64)
    xy = xy.reshape(-1, 2)

    if k < 1:
        raise ValueError(f"At least one cluster is required, got k={k}.")
    if len(xy) < k:
        raise TooFewSamplesError(f"{len(xy)} samples cannot form {k} chunks.")

    model = KMeans(
        n_clusters=k,
        init="k-means++",
        n_init=1,
        max_iter=MAX_ITERATIONS,
        tol=0,
        random_state=seed % 2**32,
        algorithm="lloyd",
    )
    return model.fit_predict(xy).astype(np.int64)


def apply_buffer(xy: np.ndarray, sets: np.ndarray, buffer_dist: float) -> np.ndarray:
    """Moves samples closer than `buffer_dist` to a sample of another set into the buffer."""
    sets = np.array(sets, dtype=np.int8)
    if buffer_dist <= 0 or len(sets) < 2:
        return sets

    xy = np.asarray(xy, dtype=np.float64)
    pairs = cKDTree(xy).query_pairs(buffer_dist, output_type="ndarray")
    pairs = pairs[np.linalg.norm(xy[pairs[:, 0]] - xy[pairs[:, 1]], axis=1) < buffer_dist]

    while True:
        a, b = sets[pairs[:, 0]], sets[pairs[:, 1]]
        conflict = (a != b) & (a != BUFFER) & (b != BUFFER)
        if not conflict.any():
            return sets
        sets[pairs[conflict].ravel()] = BUFFER


def set_counts(split: SplitAssignment | np.ndarray, samples: SampleSet) -> np.ndarray:
    """Summed class counts of train, val and test (3 x C)."""
    sets = _codes(split)
    return np.stack([samples.counts[sets == s].sum(axis=0) for s in (TRAIN, VAL, TEST)])


def generate_candidate(
    samples: SampleSet,
    chunks: np.ndarray,
    cfg: SplitConfig,
    rng: np.random.Generator,
    classes: np.ndarray = None,
) -> SplitAssignment | None:
    """Randomly assigns chunks to sets and buffers the set borders.

    Chunks are visited in random order, each is drawn into a set with a probability
    proportional to how many samples the set still misses of its target share. Returns
    None if a set ends up without an instance of one of the `classes`."""
    labels, inverse, sizes = np.unique(chunks, return_inverse=True, return_counts=True)
    targets = np.asarray(cfg.ratios) * len(samples)
    assigned = np.zeros(len(SETS))
    chunk_sets = np.empty(len(labels), dtype=np.int8)

    for chunk in rng.permutation(len(labels)):
        deficit = np.clip(targets - assigned, 0, None)
        p = deficit / deficit.sum() if deficit.sum() > 0 else np.asarray(cfg.ratios)
        chunk_sets[chunk] = rng.choice(len(SETS), p=p)
        assigned[chunk_sets[chunk]] += sizes[chunk]

    sets = apply_buffer(samples.xy, chunk_sets[inverse.reshape(-1)], cfg.buffer_dist)

    classes = samples.present if classes is None else np.asarray(classes)
    counts = set_counts(sets, samples)[:, classes]

    if not all(np.any(sets == s) for s in (TRAIN, VAL, TEST)) or np.any(counts == 0):
        return None

    return SplitAssignment(sets, seed=cfg.seed, k=len(labels))


def _distributions(split, samples: SampleSet) -> tuple[np.ndarray, np.ndarray]:
    """Class distribution of each set and of all sets together."""
    sets = _codes(split)
    for s in (TRAIN, VAL, TEST):
        if not np.any(sets == s):
            raise EmptySetError(f"Set {SETS[s]} is empty.")

    counts = set_counts(sets, samples).astype(np.float64)
    return counts / counts.sum(axis=1, keepdims=True), counts.sum(axis=0) / counts.sum()


def metric_ld(split, samples: SampleSet) -> float:
    """Summed total variation distance between each set and the global distribution."""
    p, q = _distributions(split, samples)
    return float(0.5 * np.abs(p - q).sum())


def metric_if(split, samples: SampleSet) -> float:
    """Like `metric_ld` with every class weighted by its inverse global frequency."""
    p, q = _distributions(split, samples)
    present = q > 0
    return float(0.5 * (np.abs(p - q)[:, present] / q[present]).sum())


def metric_kl(split, samples: SampleSet) -> float:
    """Summed KL divergence of each set from the global distribution."""
    p, q = _distributions(split, samples)
    q = np.where(q > 0, q, KL_EPSILON)

    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log(p / q), 0.0)
    return float(terms.sum())


def metric_sc(split, samples: SampleSet) -> float:
    """Silhouette coefficient of the non-buffer samples with sets as clusters."""
    sets = _codes(split)
    keep = np.flatnonzero(sets != BUFFER)
    labels = sets[keep]

    present, sizes = np.unique(labels, return_counts=True)
    if len(present) < 2:
        raise EmptySetError("The silhouette needs samples in at least two sets.")
    if np.any(sizes < 2):
        raise SingletonSetError(f"Set {SET_NAMES[present[np.argmin(sizes)]]} has one sample.")

    return float(silhouette_score(samples.xy[keep], labels, metric="euclidean"))


def split_metrics(split, samples: SampleSet) -> dict[str, float]:
    """All split metrics by name."""
    return {
        "LD": metric_ld(split, samples),
        "IF": metric_if(split, samples),
        "KL": metric_kl(split, samples),
        "SC": metric_sc(split, samples),
    }


def score_candidates(
    candidates: list, weights: Mapping[str, float] = None
) -> tuple[np.ndarray, int]:
    """Weighted sum of z-normalized metrics per candidate and the index of the best one.

    Candidates are metric mappings or rows in the order LD, IF, KL, SC; None marks a
    rejected candidate and scores NaN. The silhouette is subtracted, as higher is better."""
    weights = DEFAULT_WEIGHTS if weights is None else weights
    valid = [i for i, c in enumerate(candidates) if c is not None]
    if not valid:
        raise NoValidCandidatesError("All candidate splits were rejected.")

    rows = [candidates[i] for i in valid]
    metrics = np.array(
        [[c[m] for m in METRICS] if isinstance(c, Mapping) else list(c) for c in rows],
        dtype=np.float64,
    ).reshape(-1, len(METRICS))

    mean, sigma = metrics.mean(axis=0), np.maximum(metrics.std(axis=0), SIGMA_GUARD)
    z = np.where(np.ptp(metrics, axis=0) == 0, 0.0, (metrics - mean) / sigma)

    signs = np.array([1.0, 1.0, 1.0, -1.0])
    scores = z @ (np.array([weights[m] for m in METRICS], dtype=np.float64) * signs)

    result = np.full(len(candidates), np.nan)
    result[valid] = scores
    return result, valid[int(np.argmin(scores))]


def generate_split(
    samples: SampleSet,
    cfg: SplitConfig = SplitConfig(),
    executor: Executor = None,
    classes: np.ndarray = None,
) -> tuple[SplitAssignment, dict]:
    """Generates candidates until `num_candidates` are accepted and returns the best one.

    Attempt i draws from its own generator seeded with (seed, i), attempts are evaluated in
    batches and consumed in order, so the result does not depend on the executor. At most
    `ATTEMPT_FACTOR * num_candidates` attempts are made. Returns the split and statistics."""
    chunks = kmeans_chunks(samples, cfg.k, cfg.seed)

    def attempt(i: int):
        candidate = generate_candidate(
            samples, chunks, cfg, np.random.default_rng([cfg.seed, i]), classes
        )
        if candidate is None:
            return None
        try:
            return candidate, split_metrics(candidate, samples)
        except (EmptySetError, SingletonSetError) as e:
            logger.debug("Rejecting attempt %d: %s", i, e)
            return None

    accepted, limit, start = [], ATTEMPT_FACTOR * cfg.num_candidates, 0

    while len(accepted) < cfg.num_candidates and start < limit:
        batch = range(start, min(start + cfg.num_candidates - len(accepted), limit))
        results = map(attempt, batch) if executor is None else executor.map(attempt, batch)
        accepted.extend((i, *r) for i, r in zip(batch, results) if r is not None)
        start = batch.stop

    if len(accepted) < cfg.num_candidates:
        logger.warning("Only %d of %d candidates accepted.", len(accepted), cfg.num_candidates)

    scores, best = score_candidates([m for _, _, m in accepted], cfg.weights)
    index, winner, metrics = accepted[best]

    split = SplitAssignment(
        winner.sets,
        scores=metrics | {"S": float(scores[best])},
        seed=cfg.seed,
        k=cfg.k,
        num_candidates=len(accepted),
    )
    stats = {"accepted": len(accepted), "attempts": start, "winner": index}
    logger.info("Selected attempt %d out of %d accepted candidates.", index, len(accepted))
    return split, stats


# --- Domain sub-splits


@dataclass(frozen=True)
class DomainFilter:
    """Keeps train samples tagged `train` and test samples tagged `test` on one tag."""

    tag: str
    train: str
    test: str


DOMAIN_PRESETS = {
    "summer-summer": DomainFilter("season", "summer", "summer"),
    "winter-summer": DomainFilter("season", "winter", "summer"),
    "karawatha-karawatha": DomainFilter("environment", "karawatha", "karawatha"),
    "venman-karawatha": DomainFilter("environment", "venman", "karawatha"),
}


@dataclass(frozen=True, eq=False)
class SubSplit:
    """Restricted split and the classes too rare on one side to be evaluated."""

    split: SplitAssignment
    excluded: tuple[str, ...]
    domain: DomainFilter


def domain_subsplit(
    split: SplitAssignment,
    samples: SampleSet,
    domain: DomainFilter | str,
    floor: float = 1e-3,
) -> SubSplit:
    """Restricts train and test of a split to one domain each, val stays unchanged.

    Removed samples are marked as buffer. Classes whose share in train or test is below
    `floor` are returned for exclusion from evaluation."""
    if isinstance(domain, str):
        if domain not in DOMAIN_PRESETS:
            raise ValueError(f"Unknown domain preset `{domain}`.")
        domain = DOMAIN_PRESETS[domain]

    tags = samples.tags(domain.tag)
    sets = split.sets.copy()

    sets[(sets == TRAIN) & (tags != domain.train.lower())] = BUFFER
    sets[(sets == TEST) & (tags != domain.test.lower())] = BUFFER

    for s in (TRAIN, TEST):
        if not np.any(sets == s):
            raise EmptyAfterFilterError(f"No {SETS[s]} samples left for {domain}.")

    counts = set_counts(sets, samples)[[TRAIN, TEST]].astype(np.float64)
    shares = counts / counts.sum(axis=1, keepdims=True)

    rare = np.zeros(len(samples.class_names), dtype=bool)
    rare[samples.present] = True
    rare &= np.any(shares < floor, axis=0)

    excluded = tuple(samples.class_names[c] for c in np.flatnonzero(rare))
    if excluded:
        logger.warning("Classes %s are too rare in %s, exclude them.", list(excluded), domain)

    restricted = SplitAssignment(
        sets, seed=split.seed, k=split.k, num_candidates=split.num_candidates
    )
    return SubSplit(restricted, excluded, domain)


# --- Split files


def write_split(directory: str, name: str, split: SplitAssignment, samples, extra=None) -> str:
    """Writes `<name>.json` and one id list per set, returns the JSON path."""
    os.makedirs(directory, exist_ok=True)
    document = {
        "sets": dict(zip(samples.ids, split.labels())),
        "scores": split.scores,
        "seed": split.seed,
        "k": split.k,
        "num_candidates": split.num_candidates,
        "sizes": split.sizes(),
        "ratios": split.ratios(),
    } | (extra or {})

    path = os.path.join(directory, f"{name}.json")
    try:
        with open(path, "w", encoding="utf-8") as file:
            json.dump(document, file, indent=2, sort_keys=True, ignore_nan=True)

        for i, set_name in enumerate(SET_NAMES):
            list_path = os.path.join(directory, f"{name}.{set_name}.txt")
            with open(list_path, "w", encoding="utf-8") as f:
                f.writelines(f"{samples.ids[j]}\n" for j in np.flatnonzero(split.sets == i))
    except OSError as e:
        raise DataReadError(f"Cannot write split {path}: {e.strerror or e}") from e

    return path


def read_split_json(path: str, samples: SampleSet) -> SplitAssignment:
    """Reads a split written by `write_split` for the given samples."""
    try:
        with open(path, "r", encoding="utf-8") as file:
            document = json.load(file)
    except OSError as e:
        raise DataReadError(f"Cannot read {path}: {e.strerror or e}") from e
    except json.JSONDecodeError as e:
        raise DataFormatError(f"{path}: invalid JSON: {e}") from e

    sets = document.get("sets", {})
    if missing := [i for i in samples.ids if i not in sets]:
        raise MissingColumnError(f"{path}: {len(missing)} samples without set, e.g. {missing[0]}.")

    try:
        codes = [SET_NAMES.index(sets[i]) for i in samples.ids]
    except ValueError as e:
        raise DataFormatError(f"{path}: unknown set name: {e}") from e

    return SplitAssignment(
        codes,
        scores=document.get("scores", {}),
        seed=document.get("seed", 0),
        k=document.get("k", 0),
        num_candidates=document.get("num_candidates", 0),
    )


# --- Stages


@Importable
class CollectSamples(AbstractSequenceStage):
    """Collects split samples, one per labelled image, from a sequence."""

    default_output = "."

    @classmethod
    def params_schema(cls) -> dict:
        """
        :tag: Sequence tag of the samples, defaults to the directory name.
        :season: Season tag of the sequence, e.g. summer.
        :environment: Environment tag of the sequence, e.g. Venman.
        :pose_mode: Pose lookup at image timestamps, `exact` or `interpolate`.
        :samples: File name of the samples CSV in the output directory.
        :append: Appends to an existing samples file instead of replacing it.
        """
        return super().params_schema() | {
            Optional("tag", default=None): Maybe(str),
            Optional("season", default=""): str,
            Optional("environment", default=""): str,
            Optional("pose_mode", default="exact"): Any("exact", "interpolate"),
            Optional("samples", default="samples.csv"): str,
            Optional("append", default=False): Boolean(),
        }

    def __call__(self, report) -> bool:
        layout = SequenceLayout(self.params["sequence"])
        tag = self.params["tag"] or os.path.basename(os.path.normpath(layout.root))

        samples = collect_samples(
            layout,
            tag,
            self.params["season"],
            self.params["environment"],
            self.params["pose_mode"],
        )

        path = os.path.join(self.output_dir, self.params["samples"])
        if self.params["append"] and os.path.exists(path):
            samples = SampleSet.concatenate([read_samples(path, samples.class_names), samples])

        write_samples_csv(path, samples)
        self.logger.info("Wrote %d samples to %s.", len(samples), path)

        report["samples"] = len(samples)
        report["output"] = path
        return True


class SplitStage(AbstractStage):
    """Common parameters of the split stages."""

    @classmethod
    def params_schema(cls) -> dict:
        """
        :samples: Samples CSV or JSON file.
        :output: Directory of the split files.
        """
        # pylint: disable=E1120
        return {
            "samples": All(EnvironmentVar(), IsFile()),
            Optional("output", default="split"): EnvironmentVar(),
        }


@Importable
class GenSplit(SplitStage):
    """Generates a geographically buffered train, val and test split."""

    @classmethod
    def params_schema(cls) -> dict:
        """
        :ratios: Target shares of train, val and test, e.g. 0.7,0.05,0.25.
        :buffer: Minimum distance in meters between samples of different sets.
        :k: Number of position chunks assigned to the sets.
        :candidates: Number of accepted candidate splits to select from.
        :w_ld: Weight of the label distribution metric.
        :w_if: Weight of the inverse frequency weighted label distribution metric.
        :w_kl: Weight of the label KL divergence metric.
        :w_sc: Weight of the silhouette coefficient.
        :seed: Random seed, defaults to the seed setting.
        :name: Base name of the written split files.
        """
        return super().params_schema() | {
            Optional("ratios", default=[0.70, 0.05, 0.25]): Ratios(3),
            Optional("buffer", default=45.0): NonNegative(),
            Optional("k", default=50): All(Coerce(int), Range(min=3)),
            Optional("candidates", default=1000): All(Coerce(int), Range(min=1)),
            Optional("w_ld", default=1.0): NonNegative(),
            Optional("w_if", default=1.0): NonNegative(),
            Optional("w_kl", default=1.0): NonNegative(),
            Optional("w_sc", default=2.0): NonNegative(),
            Optional("seed", default=None): Maybe(All(Coerce(int), Range(min=0))),
            Optional("name", default="split"): str,
        }

    @property
    def config(self) -> SplitConfig:
        """Split configuration from the parameters."""
        seed = self.params["seed"] if self.params["seed"] is not None else Settings.seed
        return SplitConfig(
            ratios=tuple(self.params["ratios"]),
            buffer_dist=self.params["buffer"],
            k=self.params["k"],
            num_candidates=self.params["candidates"],
            weights={m: self.params[f"w_{m.lower()}"] for m in METRICS},
            seed=seed,
        )

    def __call__(self, report) -> bool:
        cfg = self.config
        samples = read_samples(self.params["samples"])
        self.logger.info("Generating split of %d samples with seed %d.", len(samples), cfg.seed)

        split, stats = generate_split(samples, cfg, self.executor)
        weights = {f"w_{m}": w for m, w in cfg.weights.items()}

        config = {
            "ratios": list(cfg.ratios),
            "buffer": cfg.buffer_dist,
            "k": cfg.k,
            "candidates": cfg.num_candidates,
            "weights": weights,
            "seed": cfg.seed,
        }
        extra = {"config": config}
        path = write_split(self.params["output"], self.params["name"], split, samples, extra)

        report["weights"] = weights
        report["seed"] = cfg.seed
        report["scores"] = split.scores
        report["ratios.target"] = dict(zip(SETS, cfg.ratios))
        report["ratios.achieved"] = split.ratios()
        report["sizes"] = split.sizes()
        report["candidates"] = stats
        report["output"] = path
        return True


@Importable
class DomainSplit(SplitStage):
    """Restricts a generated split to a season or environment transfer setting."""

    @classmethod
    def params_schema(cls) -> dict:
        """
        :split: Split JSON written by gen-split.
        :preset: One of summer-summer, winter-summer, karawatha-karawatha, venman-karawatha.
        :floor: Classes below this share in train or test are flagged for exclusion.
        """
        # pylint: disable=E1120
        return super().params_schema() | {
            "split": All(EnvironmentVar(), IsFile()),
            "preset": Any(*DOMAIN_PRESETS),
            Optional("floor", default=1e-3): All(Coerce(float), Range(min=0, max=1)),
        }

    def __call__(self, report) -> bool:
        samples = read_samples(self.params["samples"])
        split = read_split_json(self.params["split"], samples)

        sub = domain_subsplit(split, samples, self.params["preset"], self.params["floor"])
        extra = {"preset": self.params["preset"], "excluded": list(sub.excluded)}
        path = write_split(self.params["output"], self.params["preset"], sub.split, samples, extra)

        report["preset"] = self.params["preset"]
        report["excluded"] = list(sub.excluded)
        report["sizes"] = sub.split.sizes()
        report["output"] = path
        return True
