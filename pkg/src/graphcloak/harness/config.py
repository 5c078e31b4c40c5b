"""Experiment configuration files (YAML or JSON)."""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from ..cloak.budget import DEFAULT_BETA
from ..cloak.features import PGDConfig
from ..cloak.minmin import N_STEP_LARGE
from ..cloak.poison import METHODS
from ..engine.training import TrainConfig

DEFAULT_SEEDS = (0, 402, 6178)
DATA_ENV = "GRAPHCLOAK_DATA"
# fields that locate things on disk without changing any result
NON_SEMANTIC = ("output_dir", "data_root")


def default_data_root() -> str:
    return os.environ.get(DATA_ENV, str(Path(__file__).resolve().parents[3] / "data"))


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    dataset: str
    data_root: str = field(default_factory=default_data_root)
    feature_policy: str = "node-labels"
    victims: list[str] = field(default_factory=lambda: ["GCN"])
    surrogate: str = "GCN"
    methods: list[str] = field(default_factory=lambda: ["SubInj"])
    seeds: list[int] = field(default_factory=lambda: list(DEFAULT_SEEDS))
    beta: float = DEFAULT_BETA
    poison_rates: list[float] = field(default_factory=lambda: [1.0])
    n_steps: int = N_STEP_LARGE
    train: TrainConfig = field(default_factory=TrainConfig)
    pgd: PGDConfig = field(default_factory=PGDConfig)
    split: tuple[float, float, float] = (0.8, 0.1, 0.1)
    final_pass: bool = False
    temperature: float = 1.0
    transfer_sources: list[str] = field(default_factory=list)
    output_dir: str = "runs"

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")
        if not self.victims:
            raise ConfigError("victims must be non-empty")
        if not self.poison_rates:
            raise ConfigError("poison_rates must be non-empty")
        for r in self.poison_rates:
            if not 0.0 <= r <= 1.0:
                raise ConfigError(f"poison rate {r} outside [0, 1]")
        for m in self.methods:
            if m != "Clean" and m not in METHODS:
                raise ConfigError(f"unknown method {m!r}")
        self.split = tuple(float(f) for f in self.split)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split"] = list(self.split)
        return d

    def semantic_dict(self) -> dict:
        d = self.to_dict()
        for k in NON_SEMANTIC:
            d.pop(k)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "dataset" not in d:
            raise ConfigError("config needs a dataset name")
        if isinstance(d.get("train"), dict):
            d["train"] = TrainConfig(**d["train"])
        if isinstance(d.get("pgd"), dict):
            d["pgd"] = PGDConfig(**d["pgd"])
        if "split" in d:
            d["split"] = tuple(d["split"])
        return cls(**d)


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        if path.suffix == ".json":
            raw = json.load(fh)
        else:
            raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ConfigError(f"{path} does not hold a mapping")
    return ExperimentConfig.from_dict(raw)
