"""CSV schemas for experiment output.

Floats are written with ``repr`` so they parse back bit-exactly. An empty
cell means "not applicable" and reads back as ``None`` (``tau_sq`` for the
non-NISS modes, ``wall_ms`` when timing is off).
"""

from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields
from pathlib import Path
from typing import Iterable, Type, TypeVar

ROUND_COLUMNS = (
    "scenario_id", "round", "mode", "tau_sq", "partition", "test_accuracy",
    "aggregate_noise_var_empirical", "aggregate_noise_var_theoretical", "wall_ms",
)
SUMMARY_COLUMNS = ("scenario_id", "final_accuracy", "mean_noise_var", "config_hash")
VARIANCE_COLUMNS = ("k", "tau_sq", "trials", "dim", "theoretical", "empirical", "rel_error")
COLLUSION_COLUMNS = ("rho", "tau_sq", "v", "unit_sigma_sq", "theoretical", "empirical", "rel_error")


@dataclass(frozen=True)
class RoundRow:
    scenario_id: str
    round: int
    mode: str
    tau_sq: float | None
    partition: str
    test_accuracy: float
    aggregate_noise_var_empirical: float
    aggregate_noise_var_theoretical: float
    wall_ms: float | None


@dataclass(frozen=True)
class SummaryRow:
    scenario_id: str
    final_accuracy: float
    mean_noise_var: float
    config_hash: str


@dataclass(frozen=True)
class VarianceRow:
    k: int
    tau_sq: float
    trials: int
    dim: int
    theoretical: float
    empirical: float
    rel_error: float | None


@dataclass(frozen=True)
class CollusionRow:
    rho: float
    tau_sq: float
    v: int
    unit_sigma_sq: float
    theoretical: float
    empirical: float
    rel_error: float | None


_SCHEMAS = {
    RoundRow: ROUND_COLUMNS,
    SummaryRow: SUMMARY_COLUMNS,
    VarianceRow: VARIANCE_COLUMNS,
    CollusionRow: COLLUSION_COLUMNS,
}

Row = TypeVar("Row")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _parse(text: str, kind: str):
    if text == "":
        return None
    if kind == "int":
        return int(text)
    if kind.startswith("float"):
        return float(text)
    return text


def _kinds(row_type) -> list[str]:
    out = []
    for f in fields(row_type):
        t = str(f.type)
        out.append("int" if t == "int" else "float" if t.startswith("float") else "str")
    return out


def write_rows(path, rows: Iterable, row_type: Type[Row]) -> None:
    columns = _SCHEMAS[row_type]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_cell(v) for v in astuple(row)])


def read_rows(path, row_type: Type[Row]) -> list[Row]:
    columns = _SCHEMAS[row_type]
    kinds = _kinds(row_type)
    with open(path, newline="") as f:
        r = csv.reader(f)
        header = tuple(next(r))
        if header != columns:
            raise ValueError(f"{path}: unexpected columns {header}, expected {columns}")
        return [row_type(*(_parse(cell, kind) for cell, kind in zip(line, kinds))) for line in r]
