"""Class-wise random subgraph triggers injected into training graphs."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..graph import Graph, GraphDataset, GraphError, erdos_renyi, one_hot
from .budget import DEFAULT_BETA, compute_budget, trigger_size
from .poison import CloakError

log = logging.getLogger(__name__)

DEFAULT_DENSITY = 0.6
MAX_TRIGGER_NODES = 5


@dataclass(frozen=True, eq=False)
class SubgraphTrigger:
    class_id: int
    node_count: int
    density: float
    adjacency: np.ndarray
    node_classes: np.ndarray

    def __post_init__(self):
        n = self.node_count
        if self.adjacency.shape != (n, n) or self.node_classes.shape != (n,):
            raise CloakError("trigger arrays do not match node_count")

    @property
    def edges(self) -> list[tuple[int, int]]:
        u, v = np.nonzero(np.triu(self.adjacency, 1))
        return list(zip(u.tolist(), v.tolist()))

    def as_dict(self) -> dict:
        return {
            "class_id": self.class_id,
            "node_count": self.node_count,
            "density": self.density,
            "edges": [list(e) for e in self.edges],
            "node_classes": self.node_classes.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubgraphTrigger":
        n = int(d["node_count"])
        adj = np.zeros((n, n), dtype=np.uint8)
        for u, v in d["edges"]:
            adj[u, v] = adj[v, u] = 1
        return cls(int(d["class_id"]), n, float(d["density"]), adj,
                   np.asarray(d["node_classes"], dtype=np.int64))


def make_triggers(class_count: int, n: int, feature_dim: int, density: float,
                  rng: np.random.Generator) -> list[SubgraphTrigger]:
    """One ER trigger per class with uniformly drawn node feature classes."""
    out = []
    for k in range(class_count):
        adj = erdos_renyi(n, density, rng)
        classes = rng.integers(0, feature_dim, size=n)
        out.append(SubgraphTrigger(k, n, density, adj, classes))
    return out


def dataset_trigger_size(ds: GraphDataset, beta: float = DEFAULT_BETA,
                         cap: int = MAX_TRIGGER_NODES) -> int:
    """Trigger size from the median train budget, capped at `cap`."""
    idx = ds.split.train if ds.split is not None else np.arange(len(ds))
    budgets = [compute_budget(ds[int(i)], beta) for i in idx]
    c = int(np.floor(np.median(budgets))) if budgets else 1
    return max(1, min(trigger_size(c), cap))


def _changes(g: Graph, trigger: SubgraphTrigger, nodes: np.ndarray) -> tuple[list, list]:
    """Feature rows and node pairs that injection would modify, in trigger order."""
    feats = [(int(nodes[i]), int(trigger.node_classes[i]))
             for i in range(trigger.node_count) if g.node_classes[nodes[i]] != trigger.node_classes[i]]
    pairs = []
    n = trigger.node_count
    for i in range(n):
        for j in range(i + 1, n):
            u, v = int(nodes[i]), int(nodes[j])
            if g.adjacency[u, v] != trigger.adjacency[i, j]:
                pairs.append((u, v, int(trigger.adjacency[i, j])))
    return feats, pairs


def injection_cost(g: Graph, trigger: SubgraphTrigger, nodes: np.ndarray) -> int:
    """Edge edits inside the chosen set plus changed feature rows."""
    feats, pairs = _changes(g, trigger, nodes)
    return len(feats) + len(pairs)


def inject(g: Graph, trigger: SubgraphTrigger, nodes, limit: int | None = None) -> Graph:
    """Map trigger node i onto ``nodes[i]``: rewire the induced subgraph and overwrite features.

    With `limit`, at most that many unit changes are made, feature rows first.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if g.node_count < trigger.node_count:
        raise GraphError(f"graph has {g.node_count} nodes, trigger needs {trigger.node_count}")
    if len(nodes) != trigger.node_count or len(np.unique(nodes)) != len(nodes):
        raise CloakError("need distinct target nodes, one per trigger node")
    feats, pairs = _changes(g, trigger, nodes)
    if limit is not None:
        feats = feats[:limit]
        pairs = pairs[:max(0, limit - len(feats))]
    if not feats and not pairs:
        return g
    classes = g.node_classes.copy()
    for v, k in feats:
        classes[v] = k
    adj = np.array(g.adjacency, copy=True)
    for u, v, bit in pairs:
        adj[u, v] = adj[v, u] = bit
    return Graph(adj, one_hot(classes, g.feature_dim), g.label)


def inject_within_budget(g: Graph, trigger: SubgraphTrigger, c: int, rng: np.random.Generator,
                         attempts: int = 16) -> tuple[Graph, np.ndarray]:
    """Inject at random target nodes, keeping the total change count within `c`.

    Up to `attempts` uniformly random node choices are drawn and the first
    whose cost fits is used. If none fits, the cheapest choice is installed
    partially: feature rows first, then edges, stopping at `c` changes.
    """
    best, best_cost = None, None
    for _ in range(max(1, attempts)):
        nodes = rng.choice(g.node_count, size=trigger.node_count, replace=False)
        k = injection_cost(g, trigger, nodes)
        if k <= c:
            return inject(g, trigger, nodes), nodes
        if best_cost is None or k < best_cost:
            best, best_cost = nodes, k
    log.debug("trigger cost %d exceeds budget %d; installing partially", best_cost, c)
    return inject(g, trigger, best, limit=c), best


def subinj_cloak(ds: GraphDataset, beta: float = DEFAULT_BETA, density: float = DEFAULT_DENSITY,
                 rng: np.random.Generator | int = 0, poisoned=None, max_nodes: int = MAX_TRIGGER_NODES,
                 attempts: int = 16) -> tuple[GraphDataset, list[SubgraphTrigger]]:
    """Inject the class trigger into every selected train graph (all train graphs by default)."""
    rng = np.random.default_rng(rng)
    if ds.split is None:
        raise CloakError("dataset has no split")
    n = dataset_trigger_size(ds, beta, max_nodes)
    triggers = make_triggers(ds.class_count, n, ds.feature_dim, density, rng)
    idx = ds.split.train if poisoned is None else poisoned
    for i in idx:
        if ds[int(i)].node_count < n:
            raise GraphError(f"graph {int(i)} has {ds[int(i)].node_count} nodes, trigger needs {n}")
    updates = {}
    for i in idx:
        g = ds[int(i)]
        c = compute_budget(g, beta)
        updates[int(i)], _ = inject_within_budget(g, triggers[g.label], c, rng, attempts)
    return ds.with_graphs(updates), triggers
