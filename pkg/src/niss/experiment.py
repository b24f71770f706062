"""Scenario matrix runner and the two verification harnesses behind the CLI."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import CollusionSetup, VarianceSetup, empirical_aggregate_variance, min_tau_sq, simulate_collusion
from .config import ExperimentConfig
from .data import Dataset, load_idx, partition, synth_train_test
from .dp import PrivacySpec, compute_sigma
from .errors import ConfigError, NissError, RoundFailure
from .federation import ClientProfile, FederationConfig, run_training
from .models import ModelSpec
from .numerics import RngStream, derive_seed
from .report import CollusionRow, RoundRow, SummaryRow, VarianceRow, write_rows

log = logging.getLogger(__name__)

ROUNDS_FILE = "rounds.csv"
SUMMARY_FILE = "summary.csv"
VARIANCE_FILE = "variance.csv"
COLLUSION_FILE = "collusion.csv"


class ScenarioFailure(NissError, RuntimeError):
    def __init__(self, scenario_id: str, cause: BaseException):
        where = f"round {cause.round}" if isinstance(cause, RoundFailure) else "setup"
        detail = cause.cause if isinstance(cause, RoundFailure) else cause
        super().__init__(f"scenario {scenario_id}, {where}: {detail}")
        self.scenario_id = scenario_id
        self.cause = cause


@dataclass(frozen=True)
class Scenario:
    model: str
    partition: str
    mode: str
    tau_sq: tuple | None

    @property
    def scenario_id(self) -> str:
        base = f"{self.model}/{self.partition}/{self.mode}"
        if self.tau_sq is None:
            return base
        if len(self.tau_sq) == 1:
            return f"{base}/tau_sq={self.tau_sq[0]!r}"
        return f"{base}/tau_sq=per-client"

    @property
    def tau_label(self) -> float | None:
        return None if self.tau_sq is None else float(np.mean(self.tau_sq))


def scenarios(cfg: ExperimentConfig) -> list[Scenario]:
    levels = [(t,) for t in cfg.tau_sq_sweep] if cfg.tau_sq_sweep else [cfg.tau_sq]
    out = []
    for model in cfg.model:
        for part in cfg.partition:
            for mode in cfg.mode:
                if mode == "niss":
                    out.extend(Scenario(model, part, mode, tuple(t)) for t in levels)
                else:
                    out.append(Scenario(model, part, mode, None))
    return out


def load_data(cfg: ExperimentConfig) -> tuple[Dataset, Dataset]:
    if cfg.dataset == "idx":
        train = load_idx(cfg.train_images, cfg.train_labels, cfg.num_classes)
        test = load_idx(cfg.test_images, cfg.test_labels, cfg.num_classes)
        return train, test
    return synth_train_test(cfg.num_classes, cfg.input_dim, cfg.train_size, cfg.test_size, cfg.separation,
                            RngStream(cfg.seed, ("data",)), cfg.blob_std)


def _per_client(values: tuple, k: int) -> list[float]:
    return [values[i] if len(values) == k else values[0] for i in range(k)]


def build_profiles(cfg: ExperimentConfig, train: Dataset, scheme: str, tau_sq: tuple | None) -> list[ClientProfile]:
    parts = partition(train, cfg.k, scheme, cfg.shards_per_client, RngStream(cfg.seed, ("partition", scheme)))
    eps = _per_client(cfg.epsilon, cfg.k)
    taus = _per_client(tau_sq if tau_sq is not None else (0.0,), cfg.k)
    return [
        ClientProfile(i, parts[i], PrivacySpec(eps[i], cfg.delta, cfg.effective_sensitivity), taus[i])
        for i in range(cfg.k)
    ]


def federation_config(cfg: ExperimentConfig, mode: str) -> FederationConfig:
    return FederationConfig(
        k=cfg.k, c=cfg.c, local_epochs=cfg.local_epochs, batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate, rounds=cfg.rounds, mode=mode, clip_threshold=cfg.clip_threshold,
        unit_sigma_sq=cfg.unit_sigma_sq, topology=cfg.topology,
        per_dimension=cfg.per_dimension_distortion, workers=cfg.workers,
    )


def run_scenario(cfg: ExperimentConfig, sc: Scenario, train: Dataset, test: Dataset) -> list[RoundRow]:
    try:
        profiles = build_profiles(cfg, train, sc.partition, sc.tau_sq)
        spec = ModelSpec(sc.model, train.input_dim, cfg.num_classes)
        reports = run_training(federation_config(cfg, sc.mode), profiles, spec, cfg.seed, test)
    except ConfigError as exc:
        raise ConfigError(f"scenario {sc.scenario_id}: {exc}") from exc
    except NissError as exc:
        raise ScenarioFailure(sc.scenario_id, exc) from exc
    return [
        RoundRow(
            scenario_id=sc.scenario_id, round=r.round, mode=sc.mode, tau_sq=sc.tau_label, partition=sc.partition,
            test_accuracy=r.test_accuracy, aggregate_noise_var_empirical=r.noise_var_empirical,
            aggregate_noise_var_theoretical=r.noise_var_theoretical,
            wall_ms=round(r.wall_ms, 3) if cfg.timing else None,
        )
        for r in reports
    ]


def run_experiment(cfg: ExperimentConfig) -> list[SummaryRow]:
    """Run every scenario, write ``rounds.csv`` and ``summary.csv`` under ``out_dir``."""
    train, test = load_data(cfg)
    all_rows: list[RoundRow] = []
    summary: list[SummaryRow] = []
    digest = cfg.config_hash()
    for sc in scenarios(cfg):
        log.info("running %s", sc.scenario_id)
        rows = run_scenario(cfg, sc, train, test)
        all_rows.extend(rows)
        if rows:
            summary.append(SummaryRow(
                scenario_id=sc.scenario_id,
                final_accuracy=rows[-1].test_accuracy,
                mean_noise_var=float(np.mean([r.aggregate_noise_var_empirical for r in rows])),
                config_hash=digest,
            ))
    out = Path(cfg.out_dir)
    write_rows(out / ROUNDS_FILE, all_rows, RoundRow)
    write_rows(out / SUMMARY_FILE, summary, SummaryRow)
    return summary


def _cell_seed(seed: int, *label) -> int:
    return derive_seed(seed, label) % 2**64


def variance_client_sigmas(cfg: ExperimentConfig, k: int) -> list[float]:
    """Per-client noise variances for the harness, cycled to length ``k``."""
    if cfg.client_sigma_sq:
        values = list(cfg.client_sigma_sq)
    else:
        values = [compute_sigma(PrivacySpec(e, cfg.delta, cfg.effective_sensitivity)).sigma_sq for e in cfg.epsilon]
    return [values[i % len(values)] for i in range(k)]


def run_variance(cfg: ExperimentConfig) -> list[VarianceRow]:
    """Aggregate-noise harness over ``variance_k x variance_tau_sq``; writes ``variance.csv``."""
    rows = []
    for k in cfg.variance_k:
        sigmas = variance_client_sigmas(cfg, k)
        for tau in cfg.variance_tau_sq:
            setup = VarianceSetup(cfg.unit_sigma_sq, sigmas, tau, cfg.dim, cfg.topology, cfg.per_dimension_distortion)
            theory = setup.theoretical()
            emp = empirical_aggregate_variance(setup, cfg.trials, _cell_seed(cfg.seed, "variance", k, tau))
            rows.append(VarianceRow(k, float(tau), cfg.trials, cfg.dim, theory, emp,
                                    abs(emp - theory) / theory if theory > 0 else None))
    write_rows(Path(cfg.out_dir) / VARIANCE_FILE, rows, VarianceRow)
    return rows


def run_collusion(cfg: ExperimentConfig) -> list[CollusionRow]:
    """Attacker-view harness for each ``rho``; writes ``collusion.csv``."""
    rows = []
    for i, rho in enumerate(cfg.rho):
        if cfg.collusion_tau_sq is None:
            tau = min_tau_sq(rho)
        else:
            tau = cfg.collusion_tau_sq[i] if len(cfg.collusion_tau_sq) > 1 else cfg.collusion_tau_sq[0]
        setup = CollusionSetup(cfg.collusion_v, cfg.unit_sigma_sq, tau, cfg.dim, cfg.per_dimension_distortion)
        res = simulate_collusion(setup, rho, cfg.trials, _cell_seed(cfg.seed, "collusion", rho, tau))
        rows.append(CollusionRow(float(rho), float(tau), cfg.collusion_v, cfg.unit_sigma_sq, res.theoretical,
                                 res.empirical, abs(res.empirical - res.theoretical) / res.theoretical))
    write_rows(Path(cfg.out_dir) / COLLUSION_FILE, rows, CollusionRow)
    return rows
