"""Data sources, pilot sampling, mixture composition, and label handling.

A :class:`Dataset` is a point cloud with optional integer labels. Sources
expose only a pilot subset of their full data; :func:`compose` builds the
mixed training set ``D(N, p)`` from per-source pilot data by deterministic
largest-remainder apportionment of the budget ``N`` across the mixing ratio
``p``, followed by seeded subsampling without replacement.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .errors import (
    DimensionMismatchError,
    EmptySampleError,
    InsufficientDataError,
    ModeError,
    SizeError,
    ValidationError,
)

SIMPLEX_TOL = 1e-9


@dataclass(frozen=True)
class MixingRatio:
    """Point on the probability simplex assigning each source its share."""

    p: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(x) for x in self.p)
        object.__setattr__(self, "p", vals)
        if len(vals) == 0:
            raise ValidationError("mixing ratio needs at least one entry")
        if any(x < 0.0 or x > 1.0 for x in vals):
            raise ValidationError(f"mixing ratio entries must lie in [0, 1], got {vals}")
        if abs(sum(vals) - 1.0) > SIMPLEX_TOL:
            raise ValidationError(f"mixing ratio must sum to 1 within {SIMPLEX_TOL}, got sum {sum(vals)!r}")

    @property
    def m(self) -> int:
        return len(self.p)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.p, dtype=float)

    @staticmethod
    def uniform(m: int) -> "MixingRatio":
        if m < 1:
            raise ValidationError("m must be positive")
        return MixingRatio(tuple(1.0 / m for _ in range(m)))

    @staticmethod
    def normalized(values: Sequence[float]) -> "MixingRatio":
        """Clip negatives to zero and rescale so the entries sum to one."""
        v = np.clip(np.asarray(values, dtype=float), 0.0, None)
        total = v.sum()
        if total <= 0.0:
            raise ValidationError("cannot normalize an all-nonpositive vector onto the simplex")
        return MixingRatio(tuple(v / total))


@dataclass(frozen=True, eq=False)
class Dataset:
    """Labeled or unlabeled point cloud.

    ``source_index`` and ``ratio`` are composition metadata attached by
    :func:`compose`; they record which source each point came from and the
    mixing ratio that produced the dataset.
    """

    features: np.ndarray
    labels: np.ndarray | None = None
    id: str = ""
    source_index: np.ndarray | None = None
    ratio: MixingRatio | None = None

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        if feats.ndim != 2:
            raise ValidationError(f"features must be a 2-D matrix, got shape {feats.shape}")
        if feats.shape[0] < 1:
            raise ValidationError("dataset must contain at least one point")
        object.__setattr__(self, "features", feats)
        if self.labels is not None:
            labels = np.asarray(self.labels, dtype=np.int64)
            if labels.shape != (feats.shape[0],):
                raise ValidationError(
                    f"labels must be a vector of length {feats.shape[0]}, got shape {labels.shape}"
                )
            if labels.min() < 0:
                raise ValidationError("labels must be non-negative class indices")
            object.__setattr__(self, "labels", labels)
        if self.source_index is not None:
            src = np.asarray(self.source_index, dtype=np.int64)
            if src.shape != (feats.shape[0],):
                raise ValidationError("source_index must have one entry per point")
            object.__setattr__(self, "source_index", src)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def is_labeled(self) -> bool:
        return self.labels is not None

    @property
    def num_classes(self) -> int:
        if self.labels is None:
            raise ModeError("unlabeled dataset has no classes")
        return int(self.labels.max()) + 1

    def subset(self, indices: np.ndarray, id_suffix: str = "") -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=None if self.labels is None else self.labels[idx],
            id=self.id + id_suffix,
            source_index=None if self.source_index is None else self.source_index[idx],
            ratio=self.ratio,
        )


@dataclass(frozen=True)
class DataSource:
    """A provider's full (hidden) dataset plus its public pilot size."""

    full: Dataset
    pilot_size: int

    def __post_init__(self):
        if self.pilot_size < 1:
            raise ValidationError("pilot_size must be positive")
        if self.pilot_size > self.full.n:
            raise SizeError(
                f"pilot_size {self.pilot_size} exceeds the full dataset size {self.full.n}"
            )


@dataclass(frozen=True)
class Permutation:
    """Take the first ``pilot_size`` entries of a seeded uniform permutation."""


@dataclass(frozen=True)
class Bernoulli:
    """Include each point independently with probability ``rate``."""

    rate: float

    def __post_init__(self):
        if not (0.0 < self.rate <= 1.0):
            raise ValidationError(f"Bernoulli rate must lie in (0, 1], got {self.rate}")


SamplingProtocol = Union[Permutation, Bernoulli]


@dataclass(frozen=True)
class MixtureSpec:
    """Budget, mixing ratio, and seed for one composition ``D(N, p)``."""

    budget: int
    ratio: MixingRatio
    seed: int

    def __post_init__(self):
        if self.budget < 1:
            raise ValidationError("budget must be a positive integer")
        if self.seed < 0:
            raise ValidationError("seed must be a non-negative integer")


def apportion(budget: int, ratio: MixingRatio) -> np.ndarray:
    """Split ``budget`` across sources by largest-remainder rounding of ``budget * p_i``.

    The integer counts sum to ``budget`` exactly. Ties on fractional parts
    are broken by lowest source index.
    """
    if budget < 1:
        raise ValidationError("budget must be positive")
    quotas = budget * ratio.array
    floors = np.floor(quotas + 1e-9).astype(np.int64)
    remainder = budget - int(floors.sum())
    counts = floors.copy()
    if remainder > 0:
        fractions = np.clip(quotas - floors, 0.0, None)
        order = sorted(range(ratio.m), key=lambda i: (-fractions[i], i))
        for i in order[:remainder]:
            counts[i] += 1
    return counts


def sample_pilot(source: DataSource, protocol: SamplingProtocol, seed: int) -> Dataset:
    """Draw the public pilot dataset from a source under a sampling protocol.

    Deterministic given ``seed``. Permutation returns exactly
    ``source.pilot_size`` points; Bernoulli returns a random-size subset and
    raises :class:`EmptySampleError` if no point is included.
    """
    full = source.full
    rng = np.random.default_rng(seed)
    if isinstance(protocol, Permutation):
        if source.pilot_size > full.n:
            raise SizeError(
                f"pilot_size {source.pilot_size} exceeds dataset size {full.n}"
            )
        idx = rng.permutation(full.n)[: source.pilot_size]
        return full.subset(idx, id_suffix="#pilot")
    if isinstance(protocol, Bernoulli):
        mask = rng.random(full.n) < protocol.rate
        if not mask.any():
            raise EmptySampleError(
                f"Bernoulli sampling at rate {protocol.rate} selected no points from {full.n}"
            )
        return full.subset(np.flatnonzero(mask), id_suffix="#pilot")
    raise ValidationError(f"unknown sampling protocol {protocol!r}")


def compose(sources: Sequence[Dataset], spec: MixtureSpec) -> Dataset:
    """Build the mixed dataset ``D(N, p)`` from per-source data.

    Each source contributes a seeded uniform subsample without replacement of
    the apportioned size; the result carries ``source_index`` per point and
    the mixing ratio as metadata. Labels are kept only when every
    contributing source is labeled.
    """
    m = spec.ratio.m
    if len(sources) != m:
        raise DimensionMismatchError(
            f"got {len(sources)} sources but the mixing ratio has {m} entries"
        )
    counts = apportion(spec.budget, spec.ratio)
    parts: list[Dataset] = []
    part_sources: list[np.ndarray] = []
    for i, (src, k) in enumerate(zip(sources, counts)):
        if k == 0:
            continue
        if k > src.n:
            raise InsufficientDataError(
                f"source {i} ({src.id or 'unnamed'}) holds {src.n} points "
                f"but the composition needs {k}",
                source_index=i,
            )
        rng = np.random.default_rng([spec.seed, i])
        idx = rng.permutation(src.n)[:k]
        parts.append(src.subset(idx))
        part_sources.append(np.full(k, i, dtype=np.int64))
    features = np.concatenate([p.features for p in parts], axis=0)
    labeled = all(p.is_labeled for p in parts)
    labels = np.concatenate([p.labels for p in parts]) if labeled else None
    return Dataset(
        features=features,
        labels=labels,
        id=f"mix(N={spec.budget})",
        source_index=np.concatenate(part_sources),
        ratio=spec.ratio,
    )


def corrupt_labels(data: Dataset, fraction: float, num_classes: int, seed: int) -> Dataset:
    """Flip the labels of ``round(fraction * n)`` seeded-uniform points.

    Each corrupted point receives a uniformly random class different from its
    original one. Features are preserved exactly.
    """
    if data.labels is None:
        raise ModeError("cannot corrupt labels of an unlabeled dataset")
    if not (0.0 <= fraction <= 1.0):
        raise ValidationError(f"fraction must lie in [0, 1], got {fraction}")
    if num_classes < 2:
        raise ValidationError("need at least 2 classes to relabel points")
    if int(data.labels.max()) >= num_classes:
        raise ValidationError("existing labels exceed num_classes")
    k = int(round(fraction * data.n))
    if k == 0:
        return data
    rng = np.random.default_rng(seed)
    idx = rng.permutation(data.n)[:k]
    labels = data.labels.copy()
    offsets = rng.integers(1, num_classes, size=k)
    labels[idx] = (labels[idx] + offsets) % num_classes
    return Dataset(
        features=data.features,
        labels=labels,
        id=data.id + "#noisy",
        source_index=data.source_index,
        ratio=data.ratio,
    )


def strip_labels(data: Dataset) -> Dataset:
    """Drop the label vector, keeping features and composition metadata."""
    if data.labels is None:
        return data
    return Dataset(
        features=data.features,
        labels=None,
        id=data.id,
        source_index=data.source_index,
        ratio=data.ratio,
    )


def write_dataset_csv(data: Dataset, path: str | Path) -> None:
    """Write ``label,f0,...,f{d-1}`` rows; the label column is ``NA`` when unlabeled."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label"] + [f"f{j}" for j in range(data.dim)])
        for i in range(data.n):
            label = "NA" if data.labels is None else str(int(data.labels[i]))
            writer.writerow([label] + [repr(float(v)) for v in data.features[i]])


def read_dataset_csv(path: str | Path) -> Dataset:
    """Read a dataset written by :func:`write_dataset_csv`; rejects ragged rows."""
    path = Path(path)
    with path.open("r", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: empty file") from None
        if len(header) < 2 or header[0] != "label":
            raise ValidationError(f"{path}: header must start with 'label' and one feature column")
        d = len(header) - 1
        feats: list[list[float]] = []
        labels: list[int] = []
        unlabeled = False
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ValidationError(
                    f"{path}: line {lineno} has {len(row)} fields, expected {d + 1}"
                )
            if row[0] == "NA":
                unlabeled = True
            else:
                labels.append(int(row[0]))
            feats.append([float(v) for v in row[1:]])
    if unlabeled and labels:
        raise ValidationError(f"{path}: mixes labeled and unlabeled rows")
    return Dataset(
        features=np.asarray(feats, dtype=float),
        labels=None if unlabeled else np.asarray(labels, dtype=np.int64),
        id=path.stem,
    )
