"""Countermeasures an attacker may try against cloaked data."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloak.budget import DEFAULT_BETA, compute_budget
from .cloak.features import PGDConfig, pgd_features
from .cloak.structure import structural_steps
from .engine.model import Batch, EngineError, GnnModel, init_model
from .engine.training import History, TrainConfig, train
from .graph import Graph, GraphDataset
from .softmedian import soft_median_aggregate, soft_median_weights

ATTACK_SPACES = {"EMinS": "structure", "EMaxS": "structure", "Random": "structure",
                 "EMinF": "features", "SubInj": "structure", "structure": "structure",
                 "features": "features"}


def robust_model(in_dim: int, num_classes: int, seed: int = 0, temperature: float = 1.0,
                 **kwargs) -> GnnModel:
    """GCN whose neighbourhood aggregation is a scaled soft median of the normalised messages."""
    return init_model("GCN-SM", in_dim, num_classes, seed, temperature=temperature, **kwargs)


def as_soft_median(model: GnnModel, temperature: float = 1.0) -> GnnModel:
    """Soft-median copy of a GCN sharing its parameters."""
    if model.arch not in ("GCN", "GCN-SM"):
        raise EngineError("soft median aggregation replaces GCN aggregation only")
    out = model.copy()
    out.arch = "GCN-SM"
    out.temperature = float(temperature)
    return out


@dataclass(frozen=True)
class AttackConfig:
    """Strength of the per-batch error-maximising attack.

    ``flip_budget=None`` gives each graph its adaptive budget at `beta`;
    an integer applies that many flips to every graph.
    """
    flip_budget: int | None = None
    beta: float = DEFAULT_BETA
    alpha: float = 0.025
    steps: int = 4

    def is_null(self, space: str) -> bool:
        if space == "structure":
            return self.flip_budget == 0
        return self.steps == 0 or self.alpha == 0.0


def structure_attack_hook(atk: AttackConfig):
    def hook(model: GnnModel, graphs: list[Graph], rng: np.random.Generator) -> Batch:
        budgets = [compute_budget(g, atk.beta) if atk.flip_budget is None else atk.flip_budget
                   for g in graphs]
        return Batch.from_graphs(structural_steps(model, graphs, graphs, budgets, maximize=True))
    return hook


def feature_attack_hook(atk: AttackConfig):
    """Signed-gradient ascent on relaxed features; the relaxed features are trained on directly."""
    pgd = PGDConfig(alpha=atk.alpha, steps=atk.steps)

    def hook(model: GnnModel, graphs: list[Graph], rng: np.random.Generator) -> Batch:
        batch = Batch.from_graphs(graphs)
        x, _ = pgd_features(model, batch, pgd, maximize=True)
        x = x * batch.mask[:, :, None]
        return Batch(batch.adjacency, x, batch.mask, batch.labels)
    return hook


def adversarial_train(model: GnnModel, ds: GraphDataset, method: str, cfg: TrainConfig,
                      atk: AttackConfig = AttackConfig()) -> tuple[GnnModel, History]:
    """Train `model` on `ds` with every batch replaced by its adversarial version.

    `method` picks the attack space: structural cloaks get edge-flip attacks,
    feature cloaks get feature PGD. A null attack is plain training.
    """
    if method not in ATTACK_SPACES:
        raise ValueError(f"unknown attack method {method!r}")
    space = ATTACK_SPACES[method]
    if atk.is_null(space):
        return train(model, ds, cfg)
    hook = structure_attack_hook(atk) if space == "structure" else feature_attack_hook(atk)
    return train(model, ds, cfg, batch_hook=hook)


__all__ = [
    "AttackConfig", "adversarial_train", "as_soft_median", "robust_model", "soft_median_aggregate",
    "soft_median_weights",
]
