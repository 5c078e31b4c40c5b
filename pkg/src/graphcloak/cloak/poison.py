"""Selection of the cloaked subset and per-graph budget bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph import Graph, GraphDataset, edit_distance, feature_cost, stratified_counts
from .budget import DEFAULT_BETA, compute_budget

METHODS = ("EMinS", "EMinF", "SubInj", "Random", "EMaxS")
STRUCTURE_METHODS = ("EMinS", "Random", "EMaxS")


class CloakError(ValueError):
    pass


def check_method(method: str) -> str:
    if method not in METHODS:
        raise CloakError(f"unknown method {method!r}; expected one of {', '.join(METHODS)}")
    return method


def select_poisoned(ds: GraphDataset, rate: float, rng: np.random.Generator) -> np.ndarray:
    """Sorted indices of exactly floor(rate * |train|) train graphs, stratified by class."""
    if not 0.0 <= rate <= 1.0:
        raise CloakError(f"poison rate must lie in [0, 1], got {rate}")
    if ds.split is None:
        raise CloakError("dataset has no split")
    train = np.asarray(ds.split.train)
    total = int(np.floor(rate * len(train) + 1e-9))
    if total == len(train):
        return np.sort(train)
    labels = ds.labels[train]
    counts = stratified_counts(labels, total)
    picked = []
    for cls in sorted(counts):
        members = train[labels == cls]
        k = counts[cls]
        if k:
            picked.append(rng.choice(members, size=k, replace=False))
    return np.sort(np.concatenate(picked)) if picked else np.zeros(0, dtype=np.int64)


def budgets_for(ds: GraphDataset, indices, beta: float = DEFAULT_BETA) -> dict[int, int]:
    return {int(i): compute_budget(ds[int(i)], beta) for i in indices}


def cost(method: str, g: Graph, original: Graph) -> int:
    """Budget spent by `g` relative to `original` under `method`'s accounting."""
    if method in STRUCTURE_METHODS:
        return edit_distance(g, original)
    if method == "EMinF":
        return feature_cost(g, original)
    if method == "SubInj":
        return edit_distance(g, original) + feature_cost(g, original)
    raise CloakError(f"unknown method {method!r}")


@dataclass(frozen=True)
class BudgetUsage:
    index: int
    budget: int
    used: int

    def as_dict(self) -> dict:
        return {"index": self.index, "budget": self.budget, "used": self.used}


def budget_usage(method: str, cloaked: GraphDataset, original: GraphDataset,
                 budgets: dict[int, int]) -> list[BudgetUsage]:
    out = []
    for i in sorted(budgets):
        used = cost(method, cloaked[i], original[i])
        if used > budgets[i]:
            raise CloakError(f"graph {i} spent {used} > budget {budgets[i]}")
        out.append(BudgetUsage(i, budgets[i], used))
    return out
