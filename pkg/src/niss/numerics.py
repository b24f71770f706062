"""Vector arithmetic, labelled RNG streams, Gaussian sampling and L2 clipping.

Model vectors are plain 1-D ``float64`` numpy arrays. Every random draw in
the package goes through an :class:`RngStream`, whose seed is a keyed hash of
``(master_seed, label)`` so that results do not depend on the order in which
clients happen to be processed.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ParameterError, ShapeError

ModelVector = np.ndarray

_SEED_KEY = b"niss-rng-v1"


def derive_seed(master_seed: int, label: tuple) -> int:
    """Map ``(master_seed, label)`` to a 128-bit child seed."""
    text = repr((int(master_seed),) + tuple(label)).encode("utf-8")
    digest = hashlib.blake2b(text, digest_size=16, key=_SEED_KEY).digest()
    return int.from_bytes(digest, "little")


@dataclass(frozen=True)
class RngStream:
    """A reproducible random stream identified by a master seed and a label.

    The label is conventionally ``(purpose, client_id, round_index)`` but any
    tuple of ints/strings works. Each call to :meth:`generator` returns a
    fresh generator positioned at the start of the stream.
    """

    master_seed: int
    label: tuple = ()

    def __post_init__(self):
        if not 0 <= int(self.master_seed) < 2**64:
            raise ParameterError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        object.__setattr__(self, "label", tuple(self.label))

    @property
    def seed(self) -> int:
        return derive_seed(self.master_seed, self.label)

    def generator(self) -> np.random.Generator:
        return np.random.Generator(np.random.PCG64(self.seed))

    def child(self, *parts) -> "RngStream":
        return RngStream(self.master_seed, self.label + tuple(parts))


RngLike = Union[RngStream, np.random.Generator]


def as_generator(rng: RngLike) -> np.random.Generator:
    """Accept either a stream or an already-running generator."""
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    raise TypeError(f"expected RngStream or numpy Generator, got {type(rng).__name__}")


def as_vector(values) -> ModelVector:
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"model vectors are 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise ParameterError("model vector contains NaN or Inf")
    return v


def sample_gaussian(dim: int, mean: float, variance: float, rng: RngLike) -> ModelVector:
    """Draw ``dim`` i.i.d. samples from N(mean, variance)."""
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    if not variance >= 0:
        raise ParameterError(f"variance must be nonnegative, got {variance}")
    if variance == 0:
        return np.full(dim, float(mean))
    gen = as_generator(rng)
    return mean + np.sqrt(variance) * gen.standard_normal(dim)


def clip_l2(v, threshold: float) -> ModelVector:
    """Scale ``v`` down so that its L2 norm is at most ``threshold``."""
    if not threshold > 0:
        raise ParameterError(f"clipping threshold must be positive, got {threshold}")
    v = np.asarray(v, dtype=np.float64)
    norm = float(np.linalg.norm(v))
    if norm <= threshold:
        return v
    return v * (threshold / norm)


def _check_same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"length mismatch: {a.shape} vs {b.shape}")


def vec_add(a, b) -> ModelVector:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _check_same_shape(a, b)
    return a + b


def vec_scale(a, factor: float) -> ModelVector:
    return np.asarray(a, dtype=np.float64) * float(factor)


def vec_negate(a) -> ModelVector:
    return -np.asarray(a, dtype=np.float64)
