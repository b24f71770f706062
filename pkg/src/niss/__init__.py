"""Federated learning with noise-share offsetting of client DP noise."""

from .analysis import (
    CollusionScenario,
    CollusionSetup,
    VarianceSetup,
    attacker_effective_variance,
    empirical_aggregate_variance,
    min_tau_sq,
    simulate_collusion,
    theoretical_aggregate_variance,
)
from .data import Dataset, load_idx, partition, synth_dataset
from .dp import NoiseScale, PrivacySpec, compute_c, compute_sigma, generate_dp_noise
from .errors import (
    ConfigError,
    FormatError,
    NissError,
    ParameterError,
    ProtocolError,
    RoundFailure,
    ShapeError,
)
from .federation import ClientProfile, FederationConfig, RoundReport, run_training
from .models import ModelSpec, evaluate, forward_loss_grad
from .numerics import RngStream, clip_l2, sample_gaussian
from .protocol import (
    NoiseShare,
    ShareConfig,
    Tracker,
    assemble_perturbation,
    distort_share,
    generate_shares,
    local_perturbation_variance,
    run_exchange,
    select_neighbors,
    share_count,
)

__version__ = "0.1.0"
