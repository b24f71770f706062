"""Flat ``key = value`` experiment configuration.

Blank lines and ``#`` comments are ignored. List-valued keys take
comma-separated values. Unknown keys, malformed values and inconsistent
combinations raise :class:`~niss.errors.ConfigError` naming the line or key.

Relative dataset paths are resolved against the config file's directory.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .errors import ConfigError
from .federation import MODES
from .models import MODEL_KINDS
from .protocol import TOPOLOGIES

PARTITIONS = ("iid", "non-iid")
DATASETS = ("synthetic", "idx")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def _strs(text: str) -> tuple:
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _optional_float(text: str):
    return None if text.strip().lower() in ("", "none", "auto") else float(text)


def _tau_collusion(text: str):
    return None if text.strip().lower() == "auto" else _floats(text)


@dataclass(frozen=True)
class ExperimentConfig:
    # federation
    k: int = 100
    c: float = 0.3
    rounds: int = 50
    local_epochs: int = 5
    batch_size: int = 10
    learning_rate: float = 0.01
    mode: tuple = ("niss",)
    topology: str = "tracker"
    per_dimension_distortion: bool = False
    workers: int = 1
    # privacy and shares
    unit_sigma_sq: float = 0.01
    epsilon: tuple = (10.0,)
    delta: float = 1e-4
    clip_threshold: float = 3.0
    sensitivity: float | None = None
    tau_sq: tuple = (0.0,)
    tau_sq_sweep: tuple = ()
    # model and data
    model: tuple = ("softmax-regression",)
    dataset: str = "synthetic"
    partition: tuple = ("iid",)
    shards_per_client: int = 2
    num_classes: int = 10
    input_dim: int = 20
    train_size: int = 2000
    test_size: int = 2000
    separation: float = 5.0
    blob_std: float = 1.0
    train_images: str = ""
    train_labels: str = ""
    test_images: str = ""
    test_labels: str = ""
    # harnesses
    trials: int = 10000
    dim: int = 8
    variance_k: tuple = (2, 5, 10)
    variance_tau_sq: tuple = (0.0, 0.3, 0.6, 1.0)
    client_sigma_sq: tuple = ()
    rho: tuple = (0.0, 0.25, 0.5, 0.75, 1.0)
    collusion_v: int = 100
    collusion_tau_sq: tuple | None = None
    # run control
    seed: int = 0
    out_dir: str = "out"
    timing: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def effective_sensitivity(self) -> float:
        return self.clip_threshold if self.sensitivity is None else self.sensitivity

    def validate(self) -> None:
        def need(cond, key, msg):
            if not cond:
                raise ConfigError(f"{key}: {msg}")

        need(self.k >= 1, "k", "must be >= 1")
        need(0 < self.c <= 1, "c", "must lie in (0, 1]")
        need(self.rounds >= 0, "rounds", "must be >= 0")
        need(self.local_epochs >= 1, "local_epochs", "must be >= 1")
        need(self.batch_size >= 1, "batch_size", "must be >= 1")
        need(self.learning_rate >= 0, "learning_rate", "must be >= 0")
        need(len(self.mode) > 0 and all(m in MODES for m in self.mode), "mode", f"values must be in {MODES}")
        need(self.topology in TOPOLOGIES, "topology", f"must be one of {TOPOLOGIES}")
        need(self.unit_sigma_sq > 0, "unit_sigma_sq", "must be positive")
        need(len(self.epsilon) in (1, self.k) and all(e > 0 for e in self.epsilon), "epsilon",
             "must be one positive value or one per client")
        need(0 < self.delta < 1, "delta", "must lie in (0, 1)")
        need(self.clip_threshold > 0, "clip_threshold", "must be positive")
        need(self.sensitivity is None or self.sensitivity > 0, "sensitivity", "must be positive")
        need(len(self.tau_sq) in (1, self.k) and all(t >= 0 for t in self.tau_sq), "tau_sq",
             "must be one nonnegative value or one per client")
        need(all(t >= 0 for t in self.tau_sq_sweep), "tau_sq_sweep", "values must be nonnegative")
        need(len(self.model) > 0 and all(m in MODEL_KINDS for m in self.model), "model",
             f"values must be in {MODEL_KINDS}")
        need(self.dataset in DATASETS, "dataset", f"must be one of {DATASETS}")
        need(len(self.partition) > 0 and all(p in PARTITIONS for p in self.partition), "partition",
             f"values must be in {PARTITIONS}")
        need(self.shards_per_client >= 1, "shards_per_client", "must be >= 1")
        need(self.num_classes >= 2, "num_classes", "must be >= 2")
        need(self.input_dim >= 1, "input_dim", "must be >= 1")
        need(self.train_size >= self.k, "train_size", "must be at least k")
        need(self.test_size >= 1, "test_size", "must be >= 1")
        need(self.separation > 0, "separation", "must be positive")
        if self.dataset == "idx":
            for key in ("train_images", "train_labels", "test_images", "test_labels"):
                need(bool(getattr(self, key)), key, "required when dataset = idx")
        need(self.trials >= 1000, "trials", "must be >= 1000")
        need(self.dim >= 1, "dim", "must be >= 1")
        need(all(k >= 2 for k in self.variance_k), "variance_k", "values must be >= 2")
        need(all(t >= 0 for t in self.variance_tau_sq), "variance_tau_sq", "values must be nonnegative")
        need(all(s > 0 for s in self.client_sigma_sq), "client_sigma_sq", "values must be positive")
        need(all(0 <= r <= 1 for r in self.rho), "rho", "values must lie in [0, 1]")
        need(self.collusion_v >= 1, "collusion_v", "must be >= 1")
        need(self.collusion_tau_sq is None or len(self.collusion_tau_sq) in (1, len(self.rho)), "collusion_tau_sq",
             "must be 'auto', one value, or one per rho")
        need(0 <= self.seed < 2**64, "seed", "must fit in an unsigned 64-bit integer")
        need(self.workers >= 1, "workers", "must be >= 1")

    def canonical(self) -> str:
        """Stable text form of every setting except the output location."""
        lines = []
        for f in fields(self):
            if f.name == "out_dir":
                continue
            lines.append(f"{f.name}={_render(getattr(self, f.name))}")
        return "\n".join(lines)

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical().encode("utf-8")).hexdigest()[:16]

    def with_overrides(self, **changes) -> "ExperimentConfig":
        return replace(self, **changes)


def _render(value) -> str:
    if isinstance(value, tuple):
        return ",".join(_render(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    if value is None:
        return "auto"
    return str(value)


_PARSERS = {
    "k": int, "c": float, "rounds": int, "local_epochs": int, "batch_size": int, "learning_rate": float,
    "mode": _strs, "topology": str.strip, "per_dimension_distortion": _bool, "workers": int,
    "unit_sigma_sq": float, "epsilon": _floats, "delta": float, "clip_threshold": float,
    "sensitivity": _optional_float, "tau_sq": _floats, "tau_sq_sweep": _floats,
    "model": _strs, "dataset": str.strip, "partition": _strs, "shards_per_client": int,
    "num_classes": int, "input_dim": int, "train_size": int, "test_size": int,
    "separation": float, "blob_std": float,
    "train_images": str.strip, "train_labels": str.strip, "test_images": str.strip, "test_labels": str.strip,
    "trials": int, "dim": int, "variance_k": _ints, "variance_tau_sq": _floats, "client_sigma_sq": _floats,
    "rho": _floats, "collusion_v": int, "collusion_tau_sq": _tau_collusion,
    "seed": int, "out_dir": str.strip, "timing": _bool,
}

# alternative spellings accepted on input
_ALIASES = {"e": "local_epochs", "b": "batch_size", "eta": "learning_rate", "zeta": "clip_threshold"}

_PATH_KEYS = ("train_images", "train_labels", "test_images", "test_labels")


def parse_config_text(text: str, base_dir: Path | None = None, source: str = "<config>") -> ExperimentConfig:
    values: dict = {}
    seen_line: dict = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = _ALIASES.get(key.lower(), key.lower())
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first set on line {seen_line[key]})")
        try:
            values[key] = _PARSERS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
        seen_line[key] = lineno
    if base_dir is not None:
        for key in _PATH_KEYS:
            if values.get(key) and not Path(values[key]).is_absolute():
                values[key] = str(base_dir / values[key])
    try:
        return ExperimentConfig(**values)
    except ConfigError as exc:
        key = str(exc).split(":", 1)[0]
        where = f"{source}:{seen_line[key]}" if key in seen_line else source
        raise ConfigError(f"{where}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, base_dir=path.parent, source=str(path))


def render_config(cfg: ExperimentConfig) -> str:
    """Inverse of :func:`parse_config_text` (paths are written as stored)."""
    out = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple) and not value:
            continue
        if f.name == "sensitivity" and value is None:
            continue
        out.append(f"{f.name} = {_render(value)}")
    return "\n".join(out) + "\n"
