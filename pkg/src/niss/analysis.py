"""Closed-form noise calculators and the Monte Carlo harnesses that check them.

Two quantities are covered:

* the variance of the summed perturbation seen by the server,
  ``sum_k sigma_k^2 tau_k^2``, checked by running many share exchanges with a
  zero model and measuring the sum directly;
* the variance of one client's upload noise as seen by a server that colludes
  with a fraction ``rho`` of that client's neighbours,
  ``(1 - rho)(tau^2 + 2) sigma_k^2 + tau^2 rho sigma_k^2``.

Colluding neighbours reveal both the share they received (the target's own
``n_i``) and the negated share they sent (``r_i``), so only the target's
distortion factor ``s_i`` stays random for those positions. The collusion
residual is the upload noise minus everything the attacker can predict.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterError, ShapeError
from .numerics import RngStream
from .protocol import (
    ShareConfig,
    distort_shares,
    generate_shares,
    run_exchange,
)


def theoretical_aggregate_variance(sigmas_sq: Sequence[float], taus_sq: Sequence[float]) -> float:
    """Per-coordinate variance of the server-side noise sum, ``sum sigma_k^2 tau_k^2``."""
    sigmas_sq = np.asarray(sigmas_sq, dtype=np.float64)
    taus_sq = np.asarray(taus_sq, dtype=np.float64)
    if sigmas_sq.shape != taus_sq.shape:
        raise ShapeError(f"{sigmas_sq.size} variances but {taus_sq.size} distortion levels")
    return float(np.sum(sigmas_sq * taus_sq))


def pooled_variance(samples: np.ndarray) -> float:
    samples = np.asarray(samples, dtype=np.float64).ravel()
    if samples.size < 2:
        raise ParameterError("need at least two samples for a variance")
    return float(np.var(samples, ddof=1))


@dataclass(frozen=True)
class VarianceSetup:
    """Share-exchange parameters for the aggregate-noise harness.

    ``client_sigma_sq`` and ``tau_sq`` hold one entry per client; a scalar
    ``tau_sq`` is broadcast.
    """

    unit_sigma_sq: float
    client_sigma_sq: tuple
    tau_sq: tuple
    dim: int = 8
    topology: str = "tracker"
    per_dimension: bool = False

    def __post_init__(self):
        sig = tuple(float(x) for x in self.client_sigma_sq)
        tau = self.tau_sq
        if np.isscalar(tau):
            tau = (float(tau),) * len(sig)
        tau = tuple(float(x) for x in tau)
        if len(tau) != len(sig):
            raise ShapeError(f"{len(sig)} clients but {len(tau)} tau_sq values")
        object.__setattr__(self, "client_sigma_sq", sig)
        object.__setattr__(self, "tau_sq", tau)

    def share_configs(self) -> dict[int, ShareConfig]:
        return {
            k: ShareConfig(self.unit_sigma_sq, t, s, self.per_dimension)
            for k, (s, t) in enumerate(zip(self.client_sigma_sq, self.tau_sq))
        }

    def effective_sigma_sq(self) -> list[float]:
        return [cfg.effective_sigma_sq for cfg in self.share_configs().values()]

    def theoretical(self) -> float:
        return theoretical_aggregate_variance(self.effective_sigma_sq(), self.tau_sq)


def aggregate_noise_samples(setup: VarianceSetup, trials: int, master_seed: int) -> np.ndarray:
    """Server-side summed perturbation for each trial, shape ``(trials, dim)``."""
    configs = setup.share_configs()
    out = np.empty((trials, setup.dim))
    for t in range(trials):
        ex = run_exchange(configs, setup.dim, t, master_seed, setup.topology)
        out[t] = ex.total
    return out


def empirical_aggregate_variance(setup: VarianceSetup, trials: int, master_seed: int) -> float:
    """Pooled per-coordinate variance of the summed perturbation over ``trials`` exchanges."""
    if trials < 1000:
        raise ParameterError(f"trials must be >= 1000, got {trials}")
    return pooled_variance(aggregate_noise_samples(setup, trials, master_seed))


def min_tau_sq(rho: float) -> float:
    """Smallest distortion variance that keeps the attacker-view variance >= sigma_k^2."""
    if not 0 <= rho <= 1:
        raise ParameterError(f"rho must lie in [0, 1], got {rho}")
    return max(2.0 * rho - 1.0, 0.0)


@dataclass(frozen=True)
class CollusionScenario:
    rho: float
    tau_sq: float
    client_sigma_sq: float

    def __post_init__(self):
        if not 0 <= self.rho <= 1:
            raise ParameterError(f"rho must lie in [0, 1], got {self.rho}")
        if not self.tau_sq >= 0:
            raise ParameterError(f"tau_sq must be nonnegative, got {self.tau_sq}")
        if not self.client_sigma_sq > 0:
            raise ParameterError(f"client_sigma_sq must be positive, got {self.client_sigma_sq}")


def attacker_effective_variance(sc: CollusionScenario) -> float:
    return ((1.0 - sc.rho) * (sc.tau_sq + 2.0) + sc.tau_sq * sc.rho) * sc.client_sigma_sq


@dataclass(frozen=True)
class CollusionSetup:
    """A target client exchanging ``v`` shares pairwise with ``v`` neighbours."""

    v: int
    unit_sigma_sq: float
    tau_sq: float
    dim: int = 8
    per_dimension: bool = False

    @property
    def client_sigma_sq(self) -> float:
        return self.v * self.unit_sigma_sq

    def share_config(self) -> ShareConfig:
        return ShareConfig(self.unit_sigma_sq, self.tau_sq, self.client_sigma_sq, self.per_dimension)


@dataclass
class CollusionResult:
    empirical: float
    theoretical: float
    colluders: int
    residuals: np.ndarray = field(repr=False)


def collusion_residuals(setup: CollusionSetup, rho: float, trials: int, master_seed: int) -> np.ndarray:
    """Attacker-view residual of the target's upload noise, shape ``(trials, dim)``."""
    if not 0 <= rho <= 1:
        raise ParameterError(f"rho must lie in [0, 1], got {rho}")
    cfg = setup.share_config()
    v, dim = setup.v, setup.dim
    n_colluding = int(round(rho * v))
    out = np.empty((trials, dim))
    for t in range(trials):
        own = generate_shares(v, cfg, dim, RngStream(master_seed, ("shares", 0, t)))
        # share i of the target goes to neighbour i, which answers with its own negated share
        received = -generate_shares(v, cfg, dim, RngStream(master_seed, ("neighbour-shares", 0, t)))
        distorted, _ = distort_shares(received, setup.tau_sq, RngStream(master_seed, ("distort", 0, t)),
                                      setup.per_dimension)
        pick = RngStream(master_seed, ("colluders", 0, t)).generator()
        colluding = np.zeros(v, dtype=bool)
        colluding[pick.choice(v, size=n_colluding, replace=False)] = True
        upload_noise = own.sum(axis=0) + distorted.sum(axis=0)
        known = own[colluding].sum(axis=0) + received[colluding].sum(axis=0)
        out[t] = upload_noise - known
    return out


def simulate_collusion(setup: CollusionSetup, rho: float, trials: int, master_seed: int) -> CollusionResult:
    if trials < 1000:
        raise ParameterError(f"trials must be >= 1000, got {trials}")
    residuals = collusion_residuals(setup, rho, trials, master_seed)
    theory = attacker_effective_variance(CollusionScenario(rho, setup.tau_sq, setup.client_sigma_sq))
    return CollusionResult(pooled_variance(residuals), theory, int(round(rho * setup.v)), residuals)


def pair_residual_samples(unit_sigma_sq: float, tau_sq: float, trials: int, master_seed: int) -> np.ndarray:
    """``n - s n`` for ``trials`` independent shares, each meeting its distorted negation."""
    cfg = ShareConfig(unit_sigma_sq, tau_sq, unit_sigma_sq)
    n = generate_shares(trials, cfg, 1, RngStream(master_seed, ("pair-shares", float(tau_sq))))
    distorted, _ = distort_shares(-n, tau_sq, RngStream(master_seed, ("pair-distort", float(tau_sq))))
    return (n + distorted)[:, 0]
