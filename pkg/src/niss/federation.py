"""Federated rounds: participant sampling, local SGD, noise attachment, aggregation.

Three modes share one code path:

* ``plain-fedavg`` uploads ``p_k * w``;
* ``dp-fedavg`` adds i.i.d. N(0, sigma_k^2) noise to the upload;
* ``niss`` adds the perturbation assembled from the round's share exchange.

Clients clip the parameter delta ``w - w_t`` to the clipping threshold before
weighting. Training randomness is drawn from streams labelled by client and
round only, so two runs in different modes with the same seed see identical
batches and participants.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .analysis import theoretical_aggregate_variance
from .data import Dataset
from .dp import NoiseScale, PrivacySpec, compute_sigma, generate_dp_noise
from .errors import ConfigError, ProtocolError, RoundFailure, ShapeError
from .models import ModelSpec, evaluate, forward_loss_grad, init_params
from .numerics import ModelVector, RngLike, RngStream, as_generator, clip_l2
from .protocol import TOPOLOGIES, ShareConfig, run_exchange

MODES = ("plain-fedavg", "dp-fedavg", "niss")

LossGrad = Callable[[np.ndarray, tuple], tuple]


@dataclass(frozen=True)
class FederationConfig:
    k: int
    c: float
    local_epochs: int
    batch_size: int
    learning_rate: float
    rounds: int
    mode: str = "plain-fedavg"
    clip_threshold: float = 3.0
    unit_sigma_sq: float = 0.01
    topology: str = "tracker"
    per_dimension: bool = False
    workers: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if not 0 < self.c <= 1:
            raise ConfigError(f"c must lie in (0, 1], got {self.c}")
        if self.local_epochs < 1 or self.batch_size < 1:
            raise ConfigError("local_epochs and batch_size must be >= 1")
        if not self.learning_rate >= 0:
            raise ConfigError(f"learning_rate must be nonnegative, got {self.learning_rate}")
        if self.rounds < 0:
            raise ConfigError(f"rounds must be >= 0, got {self.rounds}")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if not self.clip_threshold > 0:
            raise ConfigError(f"clip_threshold must be positive, got {self.clip_threshold}")
        if self.topology not in TOPOLOGIES:
            raise ConfigError(f"unknown topology {self.topology!r}")

    @property
    def participants_per_round(self) -> int:
        return participant_count(self.k, self.c)


@dataclass(frozen=True)
class ClientProfile:
    id: int
    data: Dataset
    privacy: PrivacySpec
    tau_sq: float = 0.0

    @property
    def d_k(self) -> int:
        return len(self.data)

    @property
    def noise_scale(self) -> NoiseScale:
        return compute_sigma(self.privacy)

    def share_config(self, unit_sigma_sq: float, per_dimension: bool = False) -> ShareConfig:
        return ShareConfig(unit_sigma_sq, self.tau_sq, self.noise_scale.sigma_sq, per_dimension)


@dataclass
class RoundReport:
    round: int
    participants: tuple
    params: np.ndarray = field(repr=False)
    noise_var_empirical: float
    noise_var_theoretical: float
    test_accuracy: float
    wall_ms: float
    weights: dict = field(default_factory=dict, repr=False)


def participant_count(k: int, c: float) -> int:
    # round half up; C*K = 30.000000000000004 for (100, 0.3) still gives 30
    return max(int(math.floor(c * k + 0.5)), 1)


def select_participants(k: int, c: float, rng: RngLike) -> tuple[int, ...]:
    if not 0 < c <= 1:
        raise ConfigError(f"c must lie in (0, 1], got {c}")
    m = participant_count(k, c)
    gen = as_generator(rng)
    return tuple(sorted(int(i) for i in gen.choice(k, size=m, replace=False)))


def aggregation_weight(d_k: int, participant_counts: Sequence[int]) -> float:
    if len(participant_counts) == 0:
        raise ProtocolError("no participants to weight")
    total = sum(participant_counts)
    if d_k <= 0 or min(participant_counts) <= 0:
        raise ProtocolError("sample counts must be positive")
    return d_k / total


def aggregation_weights(counts: Mapping[int, int]) -> dict[int, float]:
    values = list(counts.values())
    return {k: aggregation_weight(d, values) for k, d in counts.items()}


def local_train(spec: ModelSpec, w_t: ModelVector, data: Dataset, epochs: int, batch_size: int,
                learning_rate: float, rng: RngLike, loss_grad: LossGrad | None = None) -> ModelVector:
    """``epochs`` passes of mini-batch SGD over one fixed shuffled batching.

    The last short batch is kept. ``loss_grad(params, (features, labels))``
    replaces the model's cross-entropy when given.
    """
    if len(data) == 0:
        raise ConfigError("client dataset is empty")
    w = np.array(w_t, dtype=np.float64)
    if learning_rate == 0:
        return w
    order = as_generator(rng).permutation(len(data))
    batches = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    for _ in range(epochs):
        for b in batches:
            batch = (data.features[b], data.labels[b])
            _, grad = loss_grad(w, batch) if loss_grad is not None else forward_loss_grad(spec, w, batch)
            w -= learning_rate * grad
    return w


def _stream(master_seed: int, purpose: str, client: int, round_index: int) -> RngStream:
    return RngStream(master_seed, (purpose, int(client), int(round_index)))


def clipped_weighted_update(profile: ClientProfile, spec: ModelSpec, w_t: ModelVector, p_k: float,
                            cfg: FederationConfig, round_index: int, master_seed: int) -> ModelVector:
    """``p_k * (w_t + clip(w - w_t))`` after local training; no noise."""
    w = local_train(spec, w_t, profile.data, cfg.local_epochs, cfg.batch_size, cfg.learning_rate,
                    _stream(master_seed, "train", profile.id, round_index))
    return p_k * (w_t + clip_l2(w - w_t, cfg.clip_threshold))


def client_noise(profile: ClientProfile, cfg: FederationConfig, dim: int, round_index: int,
                 master_seed: int) -> ModelVector | None:
    """The DP-FedAvg noise draw for a client, or None in other modes."""
    if cfg.mode != "dp-fedavg":
        return None
    return generate_dp_noise(profile.noise_scale, dim, _stream(master_seed, "dp-noise", profile.id, round_index))


def client_update(profile: ClientProfile, spec: ModelSpec, w_t: ModelVector, p_k: float,
                  cfg: FederationConfig, round_index: int, master_seed: int,
                  perturbation: ModelVector | None = None) -> ModelVector:
    """One participant's upload for the round.

    In ``niss`` mode the caller supplies ``perturbation`` from the share
    exchange, since it depends on every participant's shares.
    """
    w_t = np.asarray(w_t, dtype=np.float64)
    if w_t.shape != (spec.num_params,):
        raise ShapeError(f"w_t has shape {w_t.shape}, model expects ({spec.num_params},)")
    update = clipped_weighted_update(profile, spec, w_t, p_k, cfg, round_index, master_seed)
    if cfg.mode == "dp-fedavg":
        return update + client_noise(profile, cfg, w_t.size, round_index, master_seed)
    if cfg.mode == "niss":
        if perturbation is None:
            raise ProtocolError("niss mode needs the perturbation assembled from the share exchange")
        return update + perturbation
    return update


def aggregate(updates: Sequence[ModelVector]) -> ModelVector:
    """Element-wise sum; weights were already applied by the clients."""
    if len(updates) == 0:
        raise ProtocolError("nothing to aggregate")
    arr = [np.asarray(u, dtype=np.float64) for u in updates]
    shape = arr[0].shape
    for u in arr[1:]:
        if u.shape != shape:
            raise ShapeError(f"update shapes differ: {shape} vs {u.shape}")
    return np.sum(arr, axis=0)


def _theoretical_noise(cfg: FederationConfig, profiles: Sequence[ClientProfile]) -> float:
    if cfg.mode == "plain-fedavg":
        return 0.0
    if cfg.mode == "dp-fedavg":
        return float(sum(p.noise_scale.sigma_sq for p in profiles))
    share_cfgs = [p.share_config(cfg.unit_sigma_sq, cfg.per_dimension) for p in profiles]
    return theoretical_aggregate_variance([s.effective_sigma_sq for s in share_cfgs], [p.tau_sq for p in profiles])


def run_round(cfg: FederationConfig, profiles: Sequence[ClientProfile], spec: ModelSpec, w_t: ModelVector,
              round_index: int, master_seed: int, test: Dataset | None = None) -> RoundReport:
    start = time.perf_counter()
    by_id = {p.id: p for p in profiles}
    ids = select_participants(cfg.k, cfg.c, RngStream(master_seed, ("participants", int(round_index))))
    chosen = [by_id[i] for i in ids]
    weights = aggregation_weights({p.id: p.d_k for p in chosen})
    dim = spec.num_params

    noises: dict[int, np.ndarray | None] = {}
    if cfg.mode == "niss":
        if len(chosen) < 2:
            raise ProtocolError("niss needs at least two participants per round")
        share_cfgs = {p.id: p.share_config(cfg.unit_sigma_sq, cfg.per_dimension) for p in chosen}
        noises = run_exchange(share_cfgs, dim, round_index, master_seed, cfg.topology).perturbations
    else:
        noises = {p.id: client_noise(p, cfg, dim, round_index, master_seed) for p in chosen}

    def work(p: ClientProfile) -> ModelVector:
        return clipped_weighted_update(p, spec, w_t, weights[p.id], cfg, round_index, master_seed)

    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            weighted = list(pool.map(work, chosen))
    else:
        weighted = [work(p) for p in chosen]

    uploads = [u if noises[p.id] is None else u + noises[p.id] for p, u in zip(chosen, weighted)]
    w_next = aggregate(uploads)

    if cfg.mode == "plain-fedavg":
        emp = 0.0
    else:
        total_noise = aggregate([noises[p.id] for p in chosen])
        emp = float(np.var(total_noise, ddof=1)) if dim > 1 else float(total_noise[0] ** 2)
    acc = evaluate(spec, w_next, test) if test is not None and len(test) else float("nan")
    return RoundReport(
        round=round_index,
        participants=ids,
        params=w_next,
        noise_var_empirical=emp,
        noise_var_theoretical=_theoretical_noise(cfg, chosen),
        test_accuracy=acc,
        wall_ms=(time.perf_counter() - start) * 1000.0,
        weights=weights,
    )


def run_training(cfg: FederationConfig, profiles: Sequence[ClientProfile], spec: ModelSpec, master_seed: int,
                 test: Dataset | None = None, init: ModelVector | None = None,
                 on_round: Callable[[RoundReport], None] | None = None) -> list[RoundReport]:
    """Run ``cfg.rounds`` global rounds (numbered from 1) and return one report each."""
    if len(profiles) != cfg.k:
        raise ConfigError(f"config declares k={cfg.k} but {len(profiles)} client profiles were given")
    if sorted(p.id for p in profiles) != list(range(cfg.k)):
        raise ConfigError("client ids must be 0..k-1")
    for p in profiles:
        if len(p.data) == 0:
            raise ConfigError(f"client {p.id} has an empty dataset")
    w = init_params(spec, RngStream(master_seed, ("init",))) if init is None else np.array(init, dtype=np.float64)
    reports: list[RoundReport] = []
    for t in range(1, cfg.rounds + 1):
        try:
            report = run_round(cfg, profiles, spec, w, t, master_seed, test)
        except Exception as exc:
            raise RoundFailure(t, exc) from exc
        reports.append(report)
        if on_round is not None:
            on_round(report)
        w = report.params
    return reports
