"""Command-line entry point.

    niss train     --config run.cfg [--seed N]
    niss variance  --config run.cfg [--seed N]
    niss collusion --config run.cfg [--seed N]
    niss calibrate [--config run.cfg] [--epsilon E --delta D --sensitivity S --unit-sigma-sq U]

Exit status: 0 on success, 1 on a configuration error, 2 on a runtime error.
"""

from __future__ import annotations

import argparse
import logging
import sys

from .config import ExperimentConfig, load_config
from .dp import PrivacySpec, compute_c, compute_sigma
from .errors import ConfigError, NissError, ParameterError
from .experiment import run_collusion, run_experiment, run_variance
from .protocol import ShareConfig, share_count

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="niss", description="Noise-share federated learning simulator.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("train", "run the federated scenario matrix"),
        ("variance", "Monte Carlo check of the aggregate noise variance"),
        ("collusion", "Monte Carlo check of the attacker-view variance"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--seed", type=_u64, help="override the config's master seed")
        p.add_argument("--out-dir", help="override the config's out_dir")

    cal = sub.add_parser("calibrate", help="print the Gaussian-mechanism noise scale")
    cal.add_argument("--config", help="take epsilon, delta, sensitivity from this config")
    cal.add_argument("--seed", type=_u64, help=argparse.SUPPRESS)
    cal.add_argument("--epsilon", type=float)
    cal.add_argument("--delta", type=float)
    cal.add_argument("--sensitivity", type=float)
    cal.add_argument("--unit-sigma-sq", type=float, help="also report the share count v")
    return parser


def _load(args) -> ExperimentConfig:
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    changes = {}
    if getattr(args, "seed", None) is not None:
        changes["seed"] = args.seed
    if getattr(args, "out_dir", None):
        changes["out_dir"] = args.out_dir
    return cfg.with_overrides(**changes) if changes else cfg


def _calibrate(args, cfg: ExperimentConfig) -> None:
    epsilon = args.epsilon if args.epsilon is not None else cfg.epsilon[0]
    delta = args.delta if args.delta is not None else cfg.delta
    sensitivity = args.sensitivity if args.sensitivity is not None else cfg.effective_sensitivity
    unit = args.unit_sigma_sq if args.unit_sigma_sq is not None else cfg.unit_sigma_sq
    try:
        spec = PrivacySpec(epsilon, delta, sensitivity)
        scale = compute_sigma(spec)
    except ParameterError as exc:
        raise ConfigError(str(exc)) from None
    print(f"epsilon={epsilon!r} delta={delta!r} sensitivity={sensitivity!r}")
    print(f"c={compute_c(delta)!r}")
    print(f"sigma={scale.sigma!r}")
    print(f"sigma_sq={scale.sigma_sq!r}")
    if unit <= scale.sigma_sq:
        v = share_count(ShareConfig(unit, 0.0, scale.sigma_sq))
        print(f"unit_sigma_sq={unit!r} shares={v} effective_sigma_sq={v * unit!r}")


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "train":
            for row in run_experiment(cfg):
                print(f"{row.scenario_id}\tfinal_accuracy={row.final_accuracy:.4f}\tmean_noise_var={row.mean_noise_var:.6g}")
        elif args.command == "variance":
            for row in run_variance(cfg):
                print(f"k={row.k}\ttau_sq={row.tau_sq}\ttheoretical={row.theoretical:.6g}\tempirical={row.empirical:.6g}")
        elif args.command == "collusion":
            for row in run_collusion(cfg):
                print(f"rho={row.rho}\ttau_sq={row.tau_sq}\ttheoretical={row.theoretical:.6g}\tempirical={row.empirical:.6g}")
        else:
            _calibrate(args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NissError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
