"""Projected gradient descent on one-hot node features with softmax sampling."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ..engine.model import Batch, GnnModel, loss_and_grad
from ..graph import Graph, one_hot


@dataclass(frozen=True)
class PGDConfig:
    alpha: float = 0.025
    steps: int = 4
    temperature: float = 5.0


def tempered_softmax(x: np.ndarray, temperature: float) -> np.ndarray:
    """Row-wise ``exp(x T) / sum exp(x T)``."""
    z = np.asarray(x, dtype=np.float64) * temperature
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def sample_rows(probs: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One categorical draw per row."""
    cum = np.cumsum(probs, axis=1)
    u = rng.random(probs.shape[0])[:, None] * cum[:, -1:]
    return np.minimum((cum <= u).sum(axis=1), probs.shape[1] - 1)


def apply_sampled_classes(current: np.ndarray, original: np.ndarray, sampled: np.ndarray,
                          order: np.ndarray, budget: int) -> np.ndarray:
    """Adopt sampled node classes in `order` until the change count vs `original` would exceed `budget`."""
    cur = np.array(current, copy=True)
    cost = int(np.sum(cur != original))
    for v in order:
        new = sampled[v]
        if new == cur[v]:
            continue
        delta = int(new != original[v]) - int(cur[v] != original[v])
        if cost + delta > budget:
            break
        cur[v] = new
        cost += delta
    return cur


def pgd_features(model: GnnModel, batch: Batch, pgd: PGDConfig,
                 maximize: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Signed-gradient steps on relaxed features; returns (relaxed features, per-node total |grad|)."""
    x = batch.features.copy()
    sensitivity = np.zeros(batch.mask.shape)
    sign = 1.0 if maximize else -1.0
    for _ in range(pgd.steps):
        step_batch = Batch(batch.adjacency, x, batch.mask, batch.labels)
        _, _, grads = loss_and_grad(model, step_batch, train=False, reduction="sum")
        sensitivity += np.abs(grads.features).sum(axis=2)
        x = x + sign * pgd.alpha * np.sign(grads.features)
    return x, sensitivity


def feature_steps(model: GnnModel, graphs: Sequence[Graph], originals: Sequence[Graph],
                  budgets: Sequence[int], pgd: PGDConfig, rng: np.random.Generator,
                  maximize: bool = False) -> list[Graph]:
    """Batched :func:`eminf_step`."""
    batch = Batch.from_graphs(list(graphs))
    x, sens = pgd_features(model, batch, pgd, maximize)
    out = []
    for i, (g, o, c) in enumerate(zip(graphs, originals, budgets)):
        n = g.node_count
        probs = tempered_softmax(x[i, :n], pgd.temperature)
        sampled = sample_rows(probs, rng)
        order = np.argsort(-sens[i, :n], kind="stable")
        classes = apply_sampled_classes(g.node_classes, o.node_classes, sampled, order, c)
        if np.array_equal(classes, g.node_classes):
            out.append(g)
        else:
            out.append(g.with_features(one_hot(classes, g.feature_dim)))
    return out


def eminf_step(model: GnnModel, g: Graph, g_orig: Graph, label: int | None = None, c: int = 1,
               pgd: PGDConfig = PGDConfig(), rng: np.random.Generator | None = None,
               maximize: bool = False) -> Graph:
    """Error-minimising feature step for one graph.

    Starting from the current one-hot rows, take ``pgd.steps`` steps of
    ``x -= alpha * sign(dL/dx)``, turn each node's relaxed row into
    probabilities ``softmax(x T)`` and sample a class. Sampled classes are
    adopted node by node, most gradient-sensitive nodes first, until the
    number of nodes differing from `g_orig` would exceed `c`.
    """
    rng = np.random.default_rng() if rng is None else rng
    if label is not None and label != g.label:
        g = Graph(g.adjacency, g.features, label)
    return feature_steps(model, [g], [g_orig], [c], pgd, rng, maximize)[0]
