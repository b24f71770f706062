"""Noise-share exchange between clients.

Each client with DP noise variance ``sigma_k^2`` emits ``v`` shares drawn from
the common unit variance ``sigma^2``, with ``v = ceil(sigma_k^2 / sigma^2)``.
The negation of every share is handed to a peer chosen through the tracker.
A receiver multiplies each incoming share by a scalar ``s ~ N(1, tau^2)`` and
uploads ``sum(own shares) + sum(s * received)`` as its perturbation. With
``tau^2 = 0`` every share meets its exact negation at the server.

By default one ``s`` is drawn per received share and applied to the whole
vector, so the coordinates of ``s * r`` are correlated across dimensions even
though each coordinate has the right marginal variance. Pass
``per_dimension=True`` for an independent ``s`` per coordinate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ParameterError, ProtocolError, ShapeError
from .numerics import ModelVector, RngLike, RngStream, as_generator

# float slack when the variance ratio is an integer up to rounding (0.07 / 0.01)
_RATIO_RTOL = 1e-9

TOPOLOGIES = ("tracker", "balanced")


@dataclass(frozen=True)
class ShareConfig:
    unit_sigma_sq: float
    tau_sq: float
    client_sigma_sq: float
    per_dimension: bool = False

    def __post_init__(self):
        if not self.unit_sigma_sq > 0:
            raise ParameterError(f"unit_sigma_sq must be positive, got {self.unit_sigma_sq}")
        if not self.client_sigma_sq > 0:
            raise ParameterError(f"client_sigma_sq must be positive, got {self.client_sigma_sq}")
        if self.unit_sigma_sq > self.client_sigma_sq * (1 + _RATIO_RTOL):
            raise ParameterError(
                f"unit_sigma_sq ({self.unit_sigma_sq}) exceeds client_sigma_sq ({self.client_sigma_sq})"
            )
        if not self.tau_sq >= 0:
            raise ParameterError(f"tau_sq must be nonnegative, got {self.tau_sq}")

    @property
    def effective_sigma_sq(self) -> float:
        """Own-noise variance actually emitted, ``v * unit_sigma_sq``."""
        return share_count(self) * self.unit_sigma_sq


@dataclass(frozen=True)
class NoiseShare:
    sender: int
    receiver: int
    round: int
    payload: np.ndarray
    negated: bool = True

    def __post_init__(self):
        if self.sender == self.receiver:
            raise ProtocolError(f"client {self.sender} cannot send a share to itself")


def share_count(cfg: ShareConfig) -> int:
    ratio = cfg.client_sigma_sq / cfg.unit_sigma_sq
    return max(1, math.ceil(ratio * (1 - _RATIO_RTOL)))


def generate_shares(v: int, cfg: ShareConfig, dim: int, rng: RngLike) -> np.ndarray:
    """``v`` independent N(0, unit_sigma_sq) vectors, stacked as rows."""
    if v < 1:
        raise ParameterError(f"share count must be >= 1, got {v}")
    if dim < 1:
        raise ParameterError(f"dim must be >= 1, got {dim}")
    gen = as_generator(rng)
    return math.sqrt(cfg.unit_sigma_sq) * gen.standard_normal((v, dim))


class Tracker:
    """In-process registry of the clients live in the current round.

    It only ever hands out client ids; no noise or parameters pass through it.
    """

    def __init__(self, clients: Iterable[int] = ()):
        self._live: tuple[int, ...] = ()
        self.register(clients)

    def register(self, clients: Iterable[int]) -> None:
        self._live = tuple(sorted(set(int(c) for c in clients)))

    @property
    def live_clients(self) -> frozenset:
        return frozenset(self._live)

    def peers_of(self, requester: int) -> np.ndarray:
        return np.array([c for c in self._live if c != requester], dtype=np.int64)

    def select_neighbors(self, requester: int, v: int, rng: RngLike) -> np.ndarray:
        return select_neighbors(self, requester, v, rng)


def select_neighbors(tracker: Tracker, requester: int, v: int, rng: RngLike) -> np.ndarray:
    """Draw ``v`` peers uniformly, without replacement when enough exist."""
    if v < 1:
        raise ParameterError(f"v must be >= 1, got {v}")
    peers = tracker.peers_of(requester)
    if peers.size == 0:
        raise ProtocolError(f"client {requester} has no live peer to share with")
    gen = as_generator(rng)
    return gen.choice(peers, size=v, replace=v > peers.size)


def draw_distortion(count: int, tau_sq: float, rng: RngLike, dim: int | None = None) -> np.ndarray:
    """Scalars ``s ~ N(1, tau_sq)``; shape ``(count,)`` or ``(count, dim)``."""
    if not tau_sq >= 0:
        raise ParameterError(f"tau_sq must be nonnegative, got {tau_sq}")
    shape = (count,) if dim is None else (count, dim)
    if tau_sq == 0:
        return np.ones(shape)
    gen = as_generator(rng)
    return 1.0 + math.sqrt(tau_sq) * gen.standard_normal(shape)


def distort_shares(payloads: np.ndarray, tau_sq: float, rng: RngLike,
                   per_dimension: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Multiply each row of ``payloads`` by its own draw of ``s``.

    Returns ``(distorted, s)``.
    """
    payloads = np.asarray(payloads, dtype=np.float64)
    if payloads.ndim != 2:
        raise ShapeError(f"expected a (count, dim) array, got shape {payloads.shape}")
    count, dim = payloads.shape
    if per_dimension:
        s = draw_distortion(count, tau_sq, rng, dim)
        return s * payloads, s
    s = draw_distortion(count, tau_sq, rng)
    return s[:, None] * payloads, s


def distort_share(r: NoiseShare, tau_sq: float, rng: RngLike, per_dimension: bool = False) -> ModelVector:
    if not r.negated:
        raise ProtocolError("only received (negated) shares are distorted")
    distorted, _ = distort_shares(np.asarray(r.payload)[None, :], tau_sq, rng, per_dimension)
    return distorted[0]


def assemble_perturbation(own_shares: Sequence, distorted_received: Sequence) -> ModelVector:
    own = np.asarray(own_shares, dtype=np.float64)
    if own.ndim != 2 or own.shape[0] == 0:
        raise ShapeError("own_shares must be a nonempty sequence of vectors")
    total = own.sum(axis=0)
    received = np.asarray(distorted_received, dtype=np.float64)
    if received.size == 0:
        return total
    if received.ndim != 2 or received.shape[1] != own.shape[1]:
        raise ShapeError(f"received shares have shape {received.shape}, expected (*, {own.shape[1]})")
    return total + received.sum(axis=0)


def local_perturbation_variance(cfg: ShareConfig) -> float:
    """Per-coordinate variance of one client's upload noise.

    Own shares contribute ``v * sigma^2``; ``v`` received shares scaled by
    ``s`` contribute ``v * sigma^2 * (1 + tau^2)``.
    """
    return share_count(cfg) * cfg.unit_sigma_sq * (2.0 + cfg.tau_sq)


def balanced_receivers(counts: Mapping[int, int], rng: RngLike) -> dict[int, np.ndarray]:
    """Random routing in which every client receives exactly as many shares as it sends.

    Out-stubs are matched to a shuffled list of in-stubs; self-loops are
    removed by swapping with another position. This is the topology under
    which each client's ``tau^2`` is applied to exactly ``v_k`` shares.
    """
    ids = sorted(counts)
    total = sum(counts[c] for c in ids)
    for c in ids:
        if counts[c] > total - counts[c]:
            raise ProtocolError(
                f"client {c} sends {counts[c]} shares but its peers can only receive "
                f"{total - counts[c]}; balanced routing is impossible"
            )
    gen = as_generator(rng)
    senders = np.repeat(ids, [counts[c] for c in ids])
    receivers = gen.permutation(senders)
    for _ in range(64):
        bad = np.flatnonzero(senders == receivers)
        if bad.size == 0:
            break
        for i in bad:
            if senders[i] != receivers[i]:
                continue
            # a swap partner j must not create a self-loop at either position
            ok = np.flatnonzero((receivers != senders[i]) & (senders != receivers[i]))
            if ok.size == 0:
                continue
            j = ok[gen.integers(ok.size)]
            receivers[i], receivers[j] = receivers[j], receivers[i]
    else:
        raise ProtocolError("could not remove self-deliveries from balanced routing")
    out: dict[int, np.ndarray] = {}
    offset = 0
    for c in ids:
        out[c] = receivers[offset:offset + counts[c]].astype(np.int64)
        offset += counts[c]
    return out


@dataclass
class ExchangeResult:
    """Outcome of one round of share exchange.

    ``senders[i]``, ``receivers[i]`` and ``scalars[i]`` describe the i-th
    delivered share, in the order receivers consumed them. In per-dimension
    mode ``scalars[i]`` is the mean of that share's distortion factors.
    The exchange is reliable, so ``undelivered`` stays empty unless a caller
    drops shares on purpose.
    """

    round: int
    perturbations: dict[int, np.ndarray]
    share_counts: dict[int, int]
    senders: np.ndarray
    receivers: np.ndarray
    scalars: np.ndarray
    undelivered: list = field(default_factory=list)

    @property
    def total(self) -> np.ndarray:
        ids = sorted(self.perturbations)
        return np.sum([self.perturbations[c] for c in ids], axis=0)

    def received_counts(self) -> dict[int, int]:
        return {c: int(np.count_nonzero(self.receivers == c)) for c in self.perturbations}


def share_stream(master_seed: int, purpose: str, client: int, round_index: int) -> RngStream:
    return RngStream(master_seed, (purpose, int(client), int(round_index)))


def run_exchange(configs: Mapping[int, ShareConfig], dim: int, round_index: int,
                 master_seed: int, topology: str = "tracker") -> ExchangeResult:
    """Run the full share exchange for one round among ``configs``' clients.

    Phase one generates and routes every share; phase two (after the barrier)
    has each receiver distort what it got and assemble its perturbation.
    """
    if topology not in TOPOLOGIES:
        raise ParameterError(f"unknown topology {topology!r}; expected one of {TOPOLOGIES}")
    ids = sorted(int(c) for c in configs)
    if len(ids) < 2:
        raise ProtocolError("a share exchange needs at least two participants")
    counts = {c: share_count(configs[c]) for c in ids}

    tracker = Tracker(ids)
    if topology == "balanced":
        routes = balanced_receivers(counts, RngStream(master_seed, ("topology", int(round_index))))
    else:
        routes = {
            c: select_neighbors(tracker, c, counts[c], share_stream(master_seed, "neighbors", c, round_index))
            for c in ids
        }

    own: dict[int, np.ndarray] = {}
    outgoing, targets, origins = [], [], []
    for c in ids:
        shares = generate_shares(counts[c], configs[c], dim, share_stream(master_seed, "shares", c, round_index))
        own[c] = shares
        outgoing.append(-shares)
        targets.append(routes[c])
        origins.append(np.full(counts[c], c, dtype=np.int64))
    outgoing = np.concatenate(outgoing)
    targets = np.concatenate(targets)
    origins = np.concatenate(origins)
    if np.any(targets == origins):
        raise ProtocolError("a share was routed back to its sender")

    # barrier: every share is deposited before anyone assembles
    perturbations: dict[int, np.ndarray] = {}
    order, scalars = [], []
    for c in ids:
        inbox = np.flatnonzero(targets == c)
        cfg = configs[c]
        if inbox.size:
            distorted, s = distort_shares(outgoing[inbox], cfg.tau_sq,
                                          share_stream(master_seed, "distort", c, round_index),
                                          cfg.per_dimension)
            perturbations[c] = assemble_perturbation(own[c], distorted)
        else:
            perturbations[c] = assemble_perturbation(own[c], ())
            s = np.empty((0,) if not cfg.per_dimension else (0, dim))
        order.append(inbox)
        scalars.append(s if s.ndim == 1 else s.mean(axis=1))
    order = np.concatenate(order)
    return ExchangeResult(
        round=int(round_index),
        perturbations=perturbations,
        share_counts=counts,
        senders=origins[order],
        receivers=targets[order],
        scalars=np.concatenate(scalars),
    )
