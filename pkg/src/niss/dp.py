"""Gaussian-mechanism calibration.

The noise scale is the smallest admissible one,
``sigma = c * sensitivity / epsilon`` with ``c = sqrt(2 ln(1.25 / delta))``.
The classical guarantee is stated for ``epsilon < 1``; larger budgets are
accepted because federated experiments routinely use them (e.g. ``epsilon =
10``), but the formal (epsilon, delta) claim only covers ``epsilon < 1``.

No accounting across rounds is done: each round's noise is calibrated on its
own.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .numerics import ModelVector, RngLike, as_generator, sample_gaussian


@dataclass(frozen=True)
class PrivacySpec:
    epsilon: float
    delta: float
    sensitivity: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ParameterError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.delta < 1:
            raise ParameterError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.sensitivity > 0:
            raise ParameterError(f"sensitivity must be positive, got {self.sensitivity}")


@dataclass(frozen=True)
class NoiseScale:
    """Per-coordinate standard deviation of the DP noise."""

    sigma: float

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ParameterError(f"sigma must be nonnegative, got {self.sigma}")

    @property
    def sigma_sq(self) -> float:
        return self.sigma * self.sigma

    @classmethod
    def from_variance(cls, sigma_sq: float) -> "NoiseScale":
        if not sigma_sq >= 0:
            raise ParameterError(f"variance must be nonnegative, got {sigma_sq}")
        return cls(math.sqrt(sigma_sq))


def compute_c(delta: float) -> float:
    """Calibration constant ``sqrt(2 ln(1.25 / delta))`` (boundary value)."""
    if not 0 < delta < 1:
        raise ParameterError(f"delta must lie in (0, 1), got {delta}")
    return math.sqrt(2.0 * math.log(1.25 / delta))


def compute_sigma(spec: PrivacySpec) -> NoiseScale:
    return NoiseScale(compute_c(spec.delta) * spec.sensitivity / spec.epsilon)


def generate_dp_noise(scale: NoiseScale, dim: int, rng: RngLike) -> ModelVector:
    """I.i.d. N(0, sigma^2) noise for an h-dimensional update."""
    return sample_gaussian(dim, 0.0, scale.sigma_sq, rng)


def sum_of_gaussians(count: int, scale: NoiseScale, dim: int, rng: RngLike) -> ModelVector:
    """Sum of ``count`` independent noise draws; its variance is count * sigma^2."""
    if count < 1:
        raise ParameterError(f"count must be >= 1, got {count}")
    gen = as_generator(rng)
    return np.sum([generate_dp_noise(scale, dim, gen) for _ in range(count)], axis=0)
