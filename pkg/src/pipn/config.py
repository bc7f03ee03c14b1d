"""Experiment configuration: JSON in, fully-resolved JSON back out.

The resolved config is copied into every run directory so a run can be
reproduced from its outputs alone.  All randomness fans out from the
single ``seed`` here (model init, per-epoch shuffles, per-geometry cloud
sampling).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from pipn.training import TrainConfig, WeightSchedule


@dataclass(frozen=True)
class OracleConfig:
    """Finite-element resolution; the default is convergence-verified."""

    n_ring: int = 128
    n_layers: int = 32


@dataclass(frozen=True)
class DatasetConfig:
    filter_expr: str = "side=2.0,omega=1|31"
    n_points: int = 400
    n_outer_boundary: int = 70
    n_cavity_boundary: int = 30
    n_sensors: int = 49
    nu: float = 0.3
    alpha: float = 1.0
    oracle: OracleConfig = field(default_factory=OracleConfig)


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 0
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    checkpoint_every: int = 500
    threads: int | None = None

    def resolved_train(self) -> TrainConfig:
        """Training config with the experiment seed and filter folded in."""
        return replace(self.train, seed=self.seed, dataset_filter=self.dataset.filter_expr)


def config_to_dict(config: ExperimentConfig) -> dict:
    return asdict(config)


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    dataset = dict(data.get("dataset", {}))
    if "oracle" in dataset:
        dataset["oracle"] = OracleConfig(**dataset["oracle"])
    train = dict(data.get("train", {}))
    if "schedule" in train:
        train["schedule"] = WeightSchedule(**train["schedule"])
    return ExperimentConfig(
        seed=int(data.get("seed", 0)),
        dataset=DatasetConfig(**dataset),
        train=TrainConfig(**train),
        checkpoint_every=int(data.get("checkpoint_every", 500)),
        threads=data.get("threads"),
    )


def load_config(path: Path) -> ExperimentConfig:
    return config_from_dict(json.loads(Path(path).read_text()))


def save_config(path: Path, config: ExperimentConfig) -> None:
    Path(path).write_text(json.dumps(config_to_dict(config), sort_keys=True, indent=1) + "\n")
