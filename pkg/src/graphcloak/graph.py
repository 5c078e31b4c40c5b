"""Graph containers, random graph generation, splits and dataset statistics."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np


class GraphError(ValueError):
    """Raised when a graph or dataset violates its structural invariants."""


def _frozen(arr: np.ndarray, dtype) -> np.ndarray:
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class Graph:
    """Undirected simple graph with one-hot node features and a class label.

    The adjacency matrix never stores self-loops; models add them on the fly.
    Arrays are copied and made read-only on construction.
    """

    adjacency: np.ndarray
    features: np.ndarray
    label: int

    def __post_init__(self):
        adj = _frozen(self.adjacency, np.uint8)
        feats = _frozen(self.features, np.float64)
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "label", int(self.label))
        self.validate()

    def validate(self) -> None:
        adj, feats = self.adjacency, self.features
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1] or adj.shape[0] < 1:
            raise GraphError(f"adjacency must be a non-empty square matrix, got {adj.shape}")
        if feats.ndim != 2 or feats.shape[0] != adj.shape[0]:
            raise GraphError("features must have one row per node")
        if adj.max(initial=0) > 1:
            raise GraphError("adjacency must be binary")
        if np.any(adj != adj.T):
            raise GraphError("adjacency must be symmetric")
        if np.any(np.diagonal(adj)):
            raise GraphError("self-loops are not stored")
        if not np.all((feats == 0.0) | (feats == 1.0)) or np.any(feats.sum(axis=1) != 1.0):
            raise GraphError("every feature row must be one-hot")
        if self.label < 0:
            raise GraphError("label must be non-negative")

    @property
    def node_count(self) -> int:
        return self.adjacency.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    @property
    def edge_count(self) -> int:
        return int(np.triu(self.adjacency, 1).sum())

    @property
    def node_classes(self) -> np.ndarray:
        return self.features.argmax(axis=1)

    def density(self) -> float:
        return self.edge_count / self.node_count**2

    def with_adjacency(self, adjacency: np.ndarray) -> "Graph":
        return Graph(adjacency, self.features, self.label)

    def with_features(self, features: np.ndarray) -> "Graph":
        return Graph(self.adjacency, features, self.label)

    def permuted(self, perm: Sequence[int]) -> "Graph":
        perm = np.asarray(perm)
        return Graph(self.adjacency[np.ix_(perm, perm)], self.features[perm], self.label)

    def same_as(self, other: "Graph") -> bool:
        return (
            self.label == other.label
            and self.adjacency.shape == other.adjacency.shape
            and np.array_equal(self.adjacency, other.adjacency)
            and np.array_equal(self.features, other.features)
        )


def one_hot(classes: Sequence[int], dim: int) -> np.ndarray:
    classes = np.asarray(classes, dtype=np.int64)
    out = np.zeros((classes.size, dim))
    out[np.arange(classes.size), classes] = 1.0
    return out


def edit_distance(g: Graph, original: Graph) -> int:
    """Number of undirected node pairs whose edge state differs."""
    if g.node_count != original.node_count:
        raise GraphError("edit distance needs graphs on the same node set")
    return int(np.triu(g.adjacency != original.adjacency, 1).sum())


def feature_cost(g: Graph, original: Graph) -> int:
    """Number of nodes whose feature class differs (CostFeat)."""
    return int(np.sum(g.node_classes != original.node_classes))


@dataclass(frozen=True)
class Split:
    train: np.ndarray
    val: np.ndarray
    test: np.ndarray

    def __post_init__(self):
        for name in ("train", "val", "test"):
            object.__setattr__(self, name, _frozen(getattr(self, name), np.int64))

    def as_dict(self) -> dict[str, list[int]]:
        return {"train": self.train.tolist(), "val": self.val.tolist(), "test": self.test.tolist()}


@dataclass(frozen=True, eq=False)
class GraphDataset:
    graphs: tuple[Graph, ...]
    class_count: int
    feature_dim: int
    name: str = "dataset"
    split: Split | None = None

    def __post_init__(self):
        object.__setattr__(self, "graphs", tuple(self.graphs))
        for g in self.graphs:
            if g.feature_dim != self.feature_dim:
                raise GraphError("all graphs must share the dataset feature dimension")
            if g.label >= self.class_count:
                raise GraphError(f"label {g.label} outside [0, {self.class_count})")
        if self.split is not None:
            parts = [self.split.train, self.split.val, self.split.test]
            joined = np.concatenate(parts)
            if len(np.unique(joined)) != len(joined):
                raise GraphError("split sets must be disjoint")
            if sorted(joined.tolist()) != list(range(len(self.graphs))):
                raise GraphError("split must cover every graph index exactly once")

    def __len__(self) -> int:
        return len(self.graphs)

    def __getitem__(self, i: int) -> Graph:
        return self.graphs[i]

    @property
    def labels(self) -> np.ndarray:
        return np.array([g.label for g in self.graphs], dtype=np.int64)

    def subset(self, indices: Sequence[int]) -> list[Graph]:
        return [self.graphs[i] for i in indices]

    def replace(self, graphs: Sequence[Graph] | None = None, split: Split | None = None,
                name: str | None = None) -> "GraphDataset":
        return GraphDataset(
            graphs=self.graphs if graphs is None else tuple(graphs),
            class_count=self.class_count,
            feature_dim=self.feature_dim,
            name=self.name if name is None else name,
            split=self.split if split is None else split,
        )

    def with_graphs(self, updates: dict[int, Graph]) -> "GraphDataset":
        graphs = list(self.graphs)
        for i, g in updates.items():
            graphs[i] = g
        return self.replace(graphs=graphs)


def erdos_renyi(n: int, density: float, rng: np.random.Generator) -> np.ndarray:
    """Symmetric adjacency where each of the n(n-1)/2 pairs is an edge with probability `density`.

    Pairs are visited in row-major upper-triangular order, one uniform draw each.
    """
    if not 0.0 <= density <= 1.0:
        raise GraphError(f"density must lie in [0, 1], got {density}")
    if n < 1:
        raise GraphError("need at least one node")
    rows, cols = np.triu_indices(n, 1)
    hits = rng.random(rows.size) < density
    adj = np.zeros((n, n), dtype=np.uint8)
    adj[rows[hits], cols[hits]] = 1
    adj[cols[hits], rows[hits]] = 1
    return adj


@dataclass(frozen=True)
class DatasetStats:
    avg_edges: float
    avg_density: float
    delta_edges_pct: float = 0.0
    delta_density_pct: float = 0.0


def _pct_change(new: float, ref: float) -> float:
    if ref == 0.0:
        return 0.0 if new == 0.0 else float("inf")
    return (new - ref) / ref * 100.0


def _averages(graphs: Sequence[Graph]) -> tuple[float, float]:
    if not graphs:
        raise GraphError("statistics of an empty dataset are undefined")
    edges = np.array([g.edge_count for g in graphs], dtype=np.float64)
    nodes = np.array([g.node_count for g in graphs], dtype=np.float64)
    return float(np.mean(edges)), float(np.mean(edges / nodes**2))


def dataset_stats(ds: GraphDataset | Sequence[Graph],
                  reference: GraphDataset | Sequence[Graph] | None = None) -> DatasetStats:
    """Average edge count and average |E|/|V|^2 density, optionally relative to a reference."""
    graphs = ds.graphs if isinstance(ds, GraphDataset) else list(ds)
    avg_e, avg_rho = _averages(graphs)
    if reference is None:
        return DatasetStats(avg_e, avg_rho)
    ref_graphs = reference.graphs if isinstance(reference, GraphDataset) else list(reference)
    if len(ref_graphs) != len(graphs):
        raise GraphError(
            f"reference has {len(ref_graphs)} graphs but dataset has {len(graphs)}"
        )
    ref_e, ref_rho = _averages(ref_graphs)
    return DatasetStats(avg_e, avg_rho, _pct_change(avg_e, ref_e), _pct_change(avg_rho, ref_rho))


def _largest_remainder(ideal: np.ndarray, total: int, caps: np.ndarray) -> np.ndarray:
    counts = np.minimum(np.floor(ideal).astype(np.int64), caps)
    order = np.argsort(-(ideal - np.floor(ideal)), kind="stable")
    i = 0
    while counts.sum() < total:
        k = order[i % len(order)]
        if counts[k] < caps[k]:
            counts[k] += 1
        i += 1
        if i > 10 * len(order) * (total + 1):
            raise GraphError("cannot allocate stratified counts")
    return counts


def stratified_counts(labels: np.ndarray, total: int) -> dict[int, int]:
    """Per-class counts summing to `total`, proportional to class frequency."""
    classes, sizes = np.unique(labels, return_counts=True)
    if total == 0:
        return {int(k): 0 for k in classes}
    ideal = sizes * total / sizes.sum()
    counts = _largest_remainder(ideal, total, sizes)
    return {int(k): int(c) for k, c in zip(classes, counts)}


def split_dataset(ds: GraphDataset, fractions: tuple[float, float, float] = (0.8, 0.1, 0.1),
                  rng: np.random.Generator | int = 0) -> GraphDataset:
    """Stratified random train/val/test split; sizes follow the fractions of the whole dataset."""
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise GraphError(f"fractions must be three positive numbers summing to 1, got {fractions}")
    rng = np.random.default_rng(rng)
    labels = ds.labels
    classes, sizes = np.unique(labels, return_counts=True)
    small = classes[sizes < 3]
    if small.size:
        raise GraphError(f"classes {small.tolist()} have fewer graphs than split parts")

    n = len(ds)
    n_val = int(round(fractions[1] * n))
    n_test = int(round(fractions[2] * n))
    caps = sizes - 1
    val_counts = _largest_remainder(sizes * fractions[1], n_val, caps)
    test_counts = _largest_remainder(sizes * fractions[2], n_test, caps - val_counts)

    train, val, test = [], [], []
    for k, nv, nt in zip(classes, val_counts, test_counts):
        idx = np.flatnonzero(labels == k)
        rng.shuffle(idx)
        val.extend(idx[:nv])
        test.extend(idx[nv:nv + nt])
        train.extend(idx[nv + nt:])
    split = Split(np.sort(train), np.sort(val), np.sort(test))
    return ds.replace(split=split)
