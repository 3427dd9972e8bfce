"""Datasets: MNIST IDX files, synthetic Gaussian blobs, seeded splits."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import rng as rng_mod
from .errors import ConfigError, ParseError

IMAGES_MAGIC = 0x00000803
LABELS_MAGIC = 0x00000801
SPLIT_NAMES = ("train", "validation", "test")


class IdxMagicError(ParseError):
    pass


class IdxTruncatedError(ParseError):
    pass


class IdxCountMismatchError(ParseError):
    pass


class EmptyDatasetError(ParseError):
    pass


@dataclass
class Dataset:
    """Feature matrix and integer labels, optionally tagged with split names."""

    features: np.ndarray
    labels: np.ndarray
    split_tags: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ConfigError(f"features must be N x D, got shape {self.features.shape}")
        n = self.features.shape[0]
        if n == 0:
            raise EmptyDatasetError("dataset has no examples")
        if self.labels.shape != (n,):
            raise ConfigError(f"{n} feature rows but labels of shape {self.labels.shape}")
        if self.labels.min() < 0:
            raise ConfigError("labels must be non-negative")
        if not np.all(np.isfinite(self.features)):
            raise ConfigError("features contain non-finite values")
        if self.split_tags is not None:
            self.split_tags = np.asarray(self.split_tags, dtype=object)
            if self.split_tags.shape != (n,):
                raise ConfigError("one split tag per example required")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def class_count(self) -> int:
        return int(self.labels.max()) + 1

    def indices(self, name: str) -> np.ndarray:
        if self.split_tags is None:
            raise ConfigError("dataset has not been split")
        return np.flatnonzero(self.split_tags == name)

    def subset(self, name: str) -> "Dataset":
        idx = self.indices(name)
        if idx.size == 0:
            raise ConfigError(f"split {name!r} is empty")
        return Dataset(self.features[idx], self.labels[idx])

    def select_classes(self, classes) -> "Dataset":
        keep = np.isin(self.labels, list(classes))
        if not keep.any():
            raise ConfigError(f"no examples with labels in {sorted(classes)}")
        tags = None if self.split_tags is None else self.split_tags[keep]
        return Dataset(self.features[keep], self.labels[keep], tags)


@dataclass(frozen=True)
class SplitSpec:
    fractions: tuple = (0.8, 0.1, 0.1)
    seed: int = 0

    def __post_init__(self):
        if len(self.fractions) != 3 or any(f <= 0 for f in self.fractions):
            raise ConfigError(f"split fractions must be three positive numbers, got {self.fractions}")
        if abs(sum(self.fractions) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must sum to 1, got {sum(self.fractions)}")


def split(dataset: Dataset, spec: SplitSpec) -> Dataset:
    """Seeded shuffle, then contiguous train/validation/test blocks.

    Validation and test sizes are ``floor(fraction * N)``; the remainder goes
    to train.
    """
    n = len(dataset)
    if n < 3:
        raise ConfigError(f"need at least 3 examples to split, got {n}")
    n_val = math.floor(spec.fractions[1] * n + 1e-9)
    n_test = math.floor(spec.fractions[2] * n + 1e-9)
    n_train = n - n_val - n_test
    sizes = dict(zip(SPLIT_NAMES, (n_train, n_val, n_test)))
    for name, size in sizes.items():
        if size <= 0:
            raise ConfigError(f"split fractions {spec.fractions} leave {name} empty for N={n}")
    order = rng_mod.stream(spec.seed, "split").permutation(n)
    tags = np.empty(n, dtype=object)
    tags[order[:n_train]] = "train"
    tags[order[n_train:n_train + n_val]] = "validation"
    tags[order[n_train + n_val:]] = "test"
    return Dataset(dataset.features, dataset.labels, tags)


def synth_blobs(class_count: int, per_class: int, dim: int, spread: float, seed: int) -> Dataset:
    """Isotropic Gaussian clusters of standard deviation ``spread``.

    Class means are seed-derived points on the sphere of radius 3, so small
    ``spread`` gives separable classes and large ``spread`` overlapping ones.
    Rows are grouped by class.
    """
    if class_count < 2 or per_class < 1 or dim < 1:
        raise ConfigError("blobs need class_count >= 2, per_class >= 1, dim >= 1")
    if not spread > 0:
        raise ConfigError(f"spread must be positive, got {spread}")
    directions = rng_mod.stream(seed, "blobs/means").standard_normal((class_count, dim))
    means = 3.0 * directions / np.linalg.norm(directions, axis=1, keepdims=True)
    noise = rng_mod.stream(seed, "blobs/noise").standard_normal((class_count * per_class, dim))
    labels = np.repeat(np.arange(class_count), per_class)
    return Dataset(means[labels] + spread * noise, labels)


def _read_header(blob: bytes, path, magic: int, n_dims: int):
    need = 4 * (1 + n_dims)
    if len(blob) < need:
        raise IdxTruncatedError(f"{path}: header truncated")
    fields = struct.unpack(f">{1 + n_dims}I", blob[:need])
    if fields[0] != magic:
        raise IdxMagicError(f"{path}: magic 0x{fields[0]:08x}, expected 0x{magic:08x}")
    return fields[1:], need


def load_idx(images_path, labels_path) -> Dataset:
    """Read an MNIST-style IDX image/label pair; pixels are scaled by 1/255."""
    images = Path(images_path).read_bytes()
    labels = Path(labels_path).read_bytes()
    (count, rows, cols), off = _read_header(images, images_path, IMAGES_MAGIC, 3)
    (n_labels,), loff = _read_header(labels, labels_path, LABELS_MAGIC, 1)
    if count == 0 or n_labels == 0:
        raise EmptyDatasetError(f"{images_path}: zero images")
    if count != n_labels:
        raise IdxCountMismatchError(f"{count} images but {n_labels} labels")
    if len(images) - off < count * rows * cols:
        raise IdxTruncatedError(f"{images_path}: pixel data truncated")
    if len(labels) - loff < n_labels:
        raise IdxTruncatedError(f"{labels_path}: label data truncated")
    pixels = np.frombuffer(images, dtype=np.uint8, count=count * rows * cols, offset=off)
    y = np.frombuffer(labels, dtype=np.uint8, count=n_labels, offset=loff)
    return Dataset(pixels.reshape(count, rows * cols) / 255.0, y.astype(np.int64))


def write_idx(dataset: Dataset, images_path, labels_path, shape=None) -> None:
    """Write features (expected in [0, 1]) as quantized IDX bytes."""
    n, d = dataset.features.shape
    rows, cols = shape if shape is not None else (1, d)
    if rows * cols != d:
        raise ConfigError(f"image shape {shape} does not hold {d} features")
    if dataset.labels.max() > 255:
        raise ConfigError("IDX labels are single bytes")
    pixels = np.clip(np.rint(dataset.features * 255.0), 0, 255).astype(np.uint8)
    Path(images_path).write_bytes(struct.pack(">4I", IMAGES_MAGIC, n, rows, cols) + pixels.tobytes())
    Path(labels_path).write_bytes(struct.pack(">2I", LABELS_MAGIC, n)
                                  + dataset.labels.astype(np.uint8).tobytes())


def _parse_classes(text: str) -> list:
    if "-" in text:
        lo, hi = (int(t) for t in text.split("-", 1))
        return list(range(lo, hi + 1))
    return [int(t) for t in text.split("+")]


def parse_descriptor(descriptor: str) -> Dataset:
    """Load a dataset from ``idx:<images>,<labels>`` or ``blobs:K,n,D,spread,seed``.

    A blobs descriptor may end in ``:lo-hi`` or ``:a+b+c`` to keep only those
    classes (labels are not renumbered).
    """
    kind, _, rest = descriptor.partition(":")
    if kind == "idx":
        paths = rest.split(",")
        if len(paths) != 2:
            raise ConfigError(f"idx descriptor needs two paths: {descriptor!r}")
        try:
            return load_idx(*paths)
        except OSError as exc:
            raise ParseError(str(exc)) from exc
    if kind == "blobs":
        body, _, classes = rest.partition(":")
        parts = body.split(",")
        if len(parts) != 5:
            raise ConfigError(f"blobs descriptor needs K,n,D,spread,seed: {descriptor!r}")
        try:
            k, n, d = (int(p) for p in parts[:3])
            spread, seed = float(parts[3]), int(parts[4])
        except ValueError as exc:
            raise ConfigError(f"bad blobs descriptor {descriptor!r}: {exc}") from exc
        data = synth_blobs(k, n, d, spread, seed)
        return data.select_classes(_parse_classes(classes)) if classes else data
    raise ConfigError(f"unknown dataset kind {kind!r} in {descriptor!r}")
