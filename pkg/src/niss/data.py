"""Datasets: IDX loading, synthetic Gaussian blobs, IID / label-shard partitioning."""

from __future__ import annotations

import csv
import gzip
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, FormatError, ParameterError, ShapeError
from .numerics import RngLike, as_generator

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels, dtype=np.int64)
        if x.ndim != 2:
            raise ShapeError(f"features must be 2-D, got shape {x.shape}")
        if y.shape != (x.shape[0],):
            raise ShapeError(f"{x.shape[0]} feature rows but labels have shape {y.shape}")
        if not np.all(np.isfinite(x)):
            raise ParameterError("features contain NaN or Inf")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise ParameterError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", x)
        object.__setattr__(self, "labels", y)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def input_dim(self) -> int:
        return self.features.shape[1]

    def subset(self, index) -> "Dataset":
        index = np.asarray(index, dtype=np.int64)
        return Dataset(self.features[index], self.labels[index], self.num_classes)


def _open(path):
    path = Path(path)
    return gzip.open(path, "rb") if path.suffix == ".gz" else open(path, "rb")


def _read_idx(path, expected_magic: int, ndim: int, what: str) -> np.ndarray:
    with _open(path) as f:
        raw = f.read()
    header_len = 4 + 4 * ndim
    if len(raw) < header_len:
        raise FormatError(f"{what} file {path}: truncated header ({len(raw)} bytes)")
    (magic,) = struct.unpack(">I", raw[:4])
    if magic != expected_magic:
        raise FormatError(f"{what} file {path}: bad magic 0x{magic:08x}, expected 0x{expected_magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:header_len])
    expected = math.prod(dims)
    body = raw[header_len:]
    if len(body) < expected:
        raise FormatError(f"{what} file {path}: truncated data, header declares {expected} bytes, found {len(body)}")
    return np.frombuffer(body, dtype=np.uint8, count=expected).reshape(dims)


def load_idx(images_path, labels_path, num_classes: int = 10) -> Dataset:
    """Read an IDX image/label pair (e.g. MNIST); pixels are scaled to [0, 1]."""
    images = _read_idx(images_path, IDX_IMAGES_MAGIC, 3, "images")
    labels = _read_idx(labels_path, IDX_LABELS_MAGIC, 1, "labels")
    if images.shape[0] != labels.shape[0]:
        raise FormatError(f"count mismatch: images declare {images.shape[0]} items, labels declare {labels.shape[0]}")
    if labels.size and labels.max() >= num_classes:
        raise FormatError(f"labels: value {labels.max()} outside [0, {num_classes})")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features, labels.astype(np.int64), num_classes)


def write_idx(images: np.ndarray, labels: np.ndarray, images_path, labels_path) -> None:
    """Inverse of :func:`load_idx` for uint8 data (used to build fixtures)."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IDX_IMAGES_MAGIC, *images.shape))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", IDX_LABELS_MAGIC, labels.shape[0]))
        f.write(labels.tobytes())


def _blob_centers(num_classes: int, input_dim: int, separation: float, gen) -> np.ndarray:
    if input_dim >= num_classes:
        # scaled basis vectors: every pair of centers is exactly `separation` apart
        centers = np.zeros((num_classes, input_dim))
        centers[np.arange(num_classes), np.arange(num_classes)] = separation / math.sqrt(2.0)
        return centers
    centers = gen.standard_normal((num_classes, input_dim))
    gaps = np.linalg.norm(centers[:, None, :] - centers[None, :, :], axis=2)
    closest = gaps[np.triu_indices(num_classes, 1)].min()
    return centers * (separation / closest)


def synth_dataset(num_classes: int, input_dim: int, n: int, separation: float, rng: RngLike,
                  blob_std: float = 1.0) -> Dataset:
    """Isotropic Gaussian class blobs, balanced across classes.

    With ``input_dim >= num_classes`` all class centers are pairwise
    ``separation`` apart; otherwise the closest pair is.
    """
    if n < num_classes:
        raise ParameterError(f"n ({n}) must be at least num_classes ({num_classes})")
    if not separation > 0:
        raise ParameterError(f"separation must be positive, got {separation}")
    gen = as_generator(rng)
    centers = _blob_centers(num_classes, input_dim, separation, gen)
    labels = gen.permutation(np.arange(n) % num_classes)
    features = centers[labels] + blob_std * gen.standard_normal((n, input_dim))
    return Dataset(features, labels, num_classes)


def synth_train_test(num_classes: int, input_dim: int, n_train: int, n_test: int, separation: float,
                     rng: RngLike, blob_std: float = 1.0) -> tuple[Dataset, Dataset]:
    """Train and test sets drawn from the same blobs."""
    full = synth_dataset(num_classes, input_dim, n_train + n_test, separation, rng, blob_std)
    return full.subset(np.arange(n_train)), full.subset(np.arange(n_train, n_train + n_test))


def partition(ds: Dataset, k: int, scheme: str, shards_per_client: int, rng: RngLike) -> list[Dataset]:
    """Split ``ds`` across ``k`` clients.

    ``iid``: shuffle, then equal slices with the remainder on the last client.
    ``non-iid``: sort by label, cut ``k * shards_per_client`` contiguous shards
    and deal ``shards_per_client`` random shards to each client.
    """
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    if k > len(ds):
        raise ConfigError(f"cannot split {len(ds)} examples across {k} clients")
    gen = as_generator(rng)
    if scheme == "iid":
        order = gen.permutation(len(ds))
        size = len(ds) // k
        bounds = [i * size for i in range(k)] + [len(ds)]
        return [ds.subset(order[bounds[i]:bounds[i + 1]]) for i in range(k)]
    if scheme == "non-iid":
        if shards_per_client < 1:
            raise ConfigError(f"shards_per_client must be >= 1, got {shards_per_client}")
        n_shards = k * shards_per_client
        if n_shards > len(ds):
            raise ConfigError(f"{n_shards} shards requested from only {len(ds)} examples")
        order = np.argsort(ds.labels, kind="stable")
        shards = np.array_split(order, n_shards)
        dealt = gen.permutation(n_shards).reshape(k, shards_per_client)
        return [ds.subset(np.concatenate([shards[s] for s in row])) for row in dealt]
    raise ConfigError(f"unknown partition scheme {scheme!r}; expected 'iid' or 'non-iid'")


def dump_csv(ds: Dataset, path) -> None:
    """Write ``label,f0,...,f{d-1}`` rows; floats use the round-trip repr."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["label"] + [f"f{i}" for i in range(ds.input_dim)])
        for label, row in zip(ds.labels, ds.features):
            w.writerow([int(label)] + [repr(float(v)) for v in row])


def load_csv(path, num_classes: int) -> Dataset:
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = next(r)
        if not header or header[0] != "label":
            raise FormatError(f"{path}: first column must be 'label'")
        rows = list(r)
    labels = np.array([int(row[0]) for row in rows], dtype=np.int64)
    features = np.array([[float(v) for v in row[1:]] for row in rows], dtype=np.float64)
    return Dataset(features.reshape(len(rows), len(header) - 1), labels, num_classes)
