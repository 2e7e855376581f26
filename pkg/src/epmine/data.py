"""Datasets: synthetic multimodal classes, feature files, class splits and the
group-structured batch sampler.
"""
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigError,
    DataError,
    DimensionMismatch,
    EmptyDataset,
    GenerationFailure,
    NoPositivePair,
    ParseError,
    TooFewClasses,
)

EMB1_MAGIC = b"EMB1"
MAX_PLACEMENT_ATTEMPTS = 1000


@dataclass(frozen=True)
class SyntheticSpec:
    num_classes: int = 16
    modes_per_class: int = 2
    samples_per_class: int = 32
    input_dim: int = 16
    mode_separation: float = 4.0
    class_separation: float = 2.0
    noise_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        for name in ("num_classes", "modes_per_class", "samples_per_class", "input_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.samples_per_class < self.modes_per_class:
            raise ConfigError("samples_per_class must be >= modes_per_class")
        if self.mode_separation <= 0 or self.class_separation <= 0:
            raise ConfigError("separations must be > 0")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be >= 0")


@dataclass
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    class_index: dict = field(default=None)

    def __post_init__(self):
        self.features = np.asarray(self.features)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DimensionMismatch(f"features must be 2-D, got {self.features.shape}")
        if len(self.labels) != len(self.features):
            raise DimensionMismatch(
                f"{len(self.labels)} labels for {len(self.features)} feature rows"
            )
        if self.class_index is None:
            self.class_index = build_class_index(self.labels)

    def __len__(self):
        return len(self.labels)

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def classes(self):
        return sorted(self.class_index)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=np.int64)
        return LabeledDataset(self.features[indices], self.labels[indices])


def build_class_index(labels):
    index = {}
    for i, c in enumerate(np.asarray(labels).tolist()):
        index.setdefault(int(c), []).append(i)
    return index


def _place_centers(rng, count, dim, min_dist, scale, origin=None, radius=None):
    """Rejection-sample ``count`` points that are pairwise >= ``min_dist`` apart.

    With ``radius`` set, points lie on the sphere of that radius around
    ``origin``; otherwise they are Gaussian with std ``scale``.
    """
    centers = []
    for _ in range(count):
        for _attempt in range(MAX_PLACEMENT_ATTEMPTS):
            if radius is None:
                cand = rng.normal(0.0, scale, size=dim)
            else:
                direction = rng.normal(size=dim)
                n = np.linalg.norm(direction)
                if n == 0:
                    continue
                cand = origin + radius * direction / n
            if all(np.linalg.norm(cand - c) >= min_dist for c in centers):
                centers.append(cand)
                break
        else:
            raise GenerationFailure(
                f"could not place {count} centers {min_dist} apart in "
                f"{MAX_PLACEMENT_ATTEMPTS} attempts"
            )
    return np.array(centers)


def generate_synthetic(spec):
    """Gaussian-blob dataset where every class is a union of separated modes.

    Class centers are pairwise at least ``class_separation`` apart.  Each
    class's mode centers sit on a sphere of radius ``mode_separation`` around
    the class center and are pairwise at least ``mode_separation`` apart, so
    modes of neighbouring classes can interleave.  Sample ``i`` of a class is
    drawn from mode ``i % modes_per_class``.
    """
    rng = np.random.default_rng(spec.seed)
    dim = spec.input_dim
    scale = spec.class_separation * max(1.0, spec.num_classes ** (1.0 / dim))
    class_centers = _place_centers(rng, spec.num_classes, dim, spec.class_separation, scale)

    features = np.empty((spec.num_classes * spec.samples_per_class, dim))
    labels = np.repeat(np.arange(spec.num_classes), spec.samples_per_class)
    row = 0
    for c in range(spec.num_classes):
        if spec.modes_per_class == 1:
            modes = class_centers[c : c + 1]
        else:
            modes = _place_centers(
                rng, spec.modes_per_class, dim, spec.mode_separation, None,
                origin=class_centers[c], radius=spec.mode_separation,
            )
        which = np.arange(spec.samples_per_class) % spec.modes_per_class
        noise = rng.normal(0.0, spec.noise_std, size=(spec.samples_per_class, dim))
        features[row : row + spec.samples_per_class] = modes[which] + noise
        row += spec.samples_per_class
    return LabeledDataset(features, labels)


def mode_assignment(spec):
    """Mode id of every item produced by :func:`generate_synthetic`."""
    per_class = np.arange(spec.samples_per_class) % spec.modes_per_class
    return np.tile(per_class, spec.num_classes)


# ---------------------------------------------------------------- file formats


def load_features(path, format=None):
    """Read a CSV (``label,f1,f2,...``) or EMB1 binary feature file."""
    path = Path(path)
    if format is None:
        format = "emb1" if path.suffix.lower() == ".emb1" else "csv"
    if format == "csv":
        return _load_csv(path)
    if format == "emb1":
        return _load_emb1(path)
    raise ConfigError(f"unknown feature format {format!r}")


def _load_csv(path):
    labels, rows = [], []
    dim = None
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            try:
                label = int(fields[0])
                values = [float(v) for v in fields[1:]]
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            if not values:
                raise ParseError("row has no feature values", line=lineno)
            if dim is None:
                dim = len(values)
            elif len(values) != dim:
                raise DimensionMismatch(
                    f"line {lineno}: expected {dim} features, got {len(values)}"
                )
            labels.append(label)
            rows.append(values)
    if not rows:
        raise EmptyDataset(f"{path} contains no rows")
    return LabeledDataset(np.array(rows, dtype=np.float64), np.array(labels))


def _load_emb1(path):
    blob = Path(path).read_bytes()
    if blob[:4] != EMB1_MAGIC:
        raise ParseError("bad magic, expected EMB1", offset=0)
    if len(blob) < 12:
        raise ParseError("truncated header", offset=len(blob))
    count, dim = struct.unpack_from("<II", blob, 4)
    if count == 0:
        raise EmptyDataset(f"{path} declares zero items")
    expected = 12 + 4 * count + 4 * count * dim
    if len(blob) != expected:
        raise ParseError(
            f"size {len(blob)} does not match header (expected {expected})",
            offset=min(len(blob), expected),
        )
    labels = np.frombuffer(blob, dtype="<u4", count=count, offset=12).astype(np.int64)
    feats = np.frombuffer(blob, dtype="<f4", count=count * dim, offset=12 + 4 * count)
    return LabeledDataset(feats.reshape(count, dim).astype(np.float64), labels)


def write_features(path, features, labels, format=None):
    features = np.asarray(features)
    labels = np.asarray(labels)
    if features.ndim != 2 or features.shape[0] == 0:
        raise EmptyDataset("refusing to write an empty matrix")
    if len(labels) != len(features):
        raise DimensionMismatch("labels and features differ in length")
    path = Path(path)
    if format is None:
        format = "emb1" if path.suffix.lower() == ".emb1" else "csv"
    if format == "csv":
        with open(path, "w", newline="\n") as fh:
            for lab, row in zip(labels.tolist(), features.tolist()):
                fh.write(str(int(lab)) + "," + ",".join(format_float(v) for v in row) + "\n")
    elif format == "emb1":
        if np.any(labels < 0):
            raise DataError("EMB1 stores labels as u32; negative labels cannot be written")
        count, dim = features.shape
        with open(path, "wb") as fh:
            fh.write(EMB1_MAGIC)
            fh.write(struct.pack("<II", count, dim))
            fh.write(labels.astype("<u4").tobytes())
            fh.write(np.ascontiguousarray(features, dtype="<f4").tobytes())
    else:
        raise ConfigError(f"unknown feature format {format!r}")
    return path


def format_float(v):
    return "%.9g" % v


# ---------------------------------------------------------------- splitting


def split_by_class(ds, train_fraction, seed=0):
    """Partition the classes (not the items) into train and test sets.

    The train side gets ``floor(train_fraction * num_classes)`` classes, kept
    at least 1 and at most ``num_classes - 1``.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigError("train_fraction must lie in (0, 1)")
    classes = np.array(ds.classes)
    if len(classes) < 2:
        raise TooFewClasses(f"need >= 2 classes to split, got {len(classes)}")
    n_train = int(math.floor(train_fraction * len(classes)))
    n_train = min(max(n_train, 1), len(classes) - 1)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(classes))
    train_classes = set(classes[order[:n_train]].tolist())
    in_train = np.array([c in train_classes for c in ds.labels.tolist()])
    return ds.subset(np.flatnonzero(in_train)), ds.subset(np.flatnonzero(~in_train))


# ---------------------------------------------------------------- sampling


@dataclass(frozen=True)
class SamplerConfig:
    batch_size: int = 128
    group_size: int = 4
    seed: int = 0

    def __post_init__(self):
        if not 2 <= self.group_size <= self.batch_size:
            raise ConfigError(
                f"need 2 <= group_size <= batch_size, got {self.group_size}, {self.batch_size}"
            )


@dataclass(frozen=True)
class GroupBatch:
    indices: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.indices)

    def group_sizes(self):
        _, counts = np.unique(self.labels, return_counts=True)
        return counts


def sample_group_batch(ds, cfg, rng):
    """Fill a batch with up to ``group_size`` items from each of a sequence of
    randomly ordered classes.

    A class smaller than ``group_size`` contributes all of its items; the last
    class is truncated to whatever room is left.  The batch stops early when
    every class has been used.
    """
    if len(ds) == 0:
        raise EmptyDataset("cannot sample from an empty dataset")
    classes = ds.classes
    indices = []
    for ci in rng.permutation(len(classes)):
        room = cfg.batch_size - len(indices)
        if room <= 0:
            break
        members = ds.class_index[classes[ci]]
        take = min(cfg.group_size, len(members), room)
        chosen = rng.choice(len(members), size=take, replace=False)
        indices.extend(members[j] for j in chosen)
    indices = np.array(indices, dtype=np.int64)
    batch = GroupBatch(indices, ds.labels[indices])
    counts = batch.group_sizes()
    if len(counts) < 2 or counts.max() < 2:
        raise NoPositivePair(
            f"batch of {len(batch)} items over {len(counts)} classes has no usable "
            "anchor-positive pair with a negative"
        )
    return batch


def batches_per_epoch(ds, cfg):
    return max(1, math.ceil(len(ds) / cfg.batch_size))
