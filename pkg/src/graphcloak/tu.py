"""Reader and writer for the TU Dortmund plain-text graph benchmark format.

Files for a dataset ``NAME``::

    NAME_A.txt               one edge per line, "u, v" with 1-indexed global node ids
    NAME_graph_indicator.txt one line per node, the 1-indexed graph id it belongs to
    NAME_graph_labels.txt    one line per graph, an integer class label
    NAME_node_labels.txt     optional, one integer node label per node

The writer emits every edge in both directions with a bare comma, which is what
the public benchmark files contain; the reader accepts ``u,v`` and ``u, v``.
"""
from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np

from .graph import Graph, GraphDataset, GraphError, Split, one_hot

log = logging.getLogger(__name__)

DEFAULT_DEGREE_CAP = 64
MANIFEST_SUFFIX = "_manifest.json"


class TUFormatError(GraphError):
    pass


def _read_ints(path: Path, columns: int) -> np.ndarray:
    rows = []
    with open(path, "r", encoding="ascii") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) != columns:
                raise TUFormatError(f"{path.name}:{lineno}: expected {columns} value(s), got {line!r}")
            try:
                rows.append([int(p) for p in parts])
            except ValueError:
                raise TUFormatError(f"{path.name}:{lineno}: non-integer token in {line!r}") from None
    return np.array(rows, dtype=np.int64).reshape(-1, columns)


def resolve_dataset_dir(root: str | Path, name: str) -> Path:
    """Directory holding ``NAME_A.txt``: either ``root`` itself or ``root/NAME`` (or ``root/NAME/raw``)."""
    root = Path(root)
    for cand in (root, root / name, root / name / "raw"):
        if (cand / f"{name}_graph_indicator.txt").exists():
            return cand
    raise FileNotFoundError(f"no TU dataset {name!r} under {root}")


def load_tu_dataset(root: str | Path, name: str, feature_policy: str = "node-labels",
                    degree_cap: int = DEFAULT_DEGREE_CAP, feature_dim: int | None = None) -> GraphDataset:
    """Load a TU dataset.

    With ``feature_policy="node-labels"`` node labels become one-hot features
    (remapped to their sorted distinct values, or used verbatim as class ids
    when ``feature_dim`` is given). If the node-label file is absent, or with
    ``"degree-onehot"``, features are one-hot node degrees clipped at
    ``degree_cap``. A sidecar manifest, when present, restores the split.
    """
    if feature_policy not in ("node-labels", "degree-onehot"):
        raise ValueError(f"unknown feature policy {feature_policy!r}")
    d = resolve_dataset_dir(root, name)
    mandatory = {k: d / f"{name}_{k}.txt" for k in ("A", "graph_indicator", "graph_labels")}
    for path in mandatory.values():
        if not path.exists():
            raise FileNotFoundError(f"missing mandatory file {path}")

    edges = _read_ints(mandatory["A"], 2)
    indicator = _read_ints(mandatory["graph_indicator"], 1)[:, 0]
    raw_labels = _read_ints(mandatory["graph_labels"], 1)[:, 0]
    n_graphs = len(raw_labels)
    n_nodes = len(indicator)
    if n_nodes == 0:
        raise TUFormatError("graph indicator is empty")
    if indicator.min() < 1 or indicator.max() > n_graphs:
        raise TUFormatError("graph indicator references a graph without a label")
    if np.any(np.diff(indicator) < 0):
        raise TUFormatError("graph indicator must list nodes grouped by graph in ascending order")

    node_label_path = d / f"{name}_node_labels.txt"
    manifest = read_manifest(d, name)
    use_labels = feature_policy == "node-labels" and node_label_path.exists()
    if use_labels:
        # the manifest's feature_dim describes the node-label features only
        if manifest is not None and feature_dim is None:
            feature_dim = manifest.get("feature_dim")
        node_labels = _read_ints(node_label_path, 1)[:, 0]
        if len(node_labels) != n_nodes:
            raise TUFormatError("node label count differs from graph indicator length")
        if feature_dim is None:
            values, node_classes = np.unique(node_labels, return_inverse=True)
            feature_dim = len(values)
        else:
            node_classes = node_labels
            if node_classes.min() < 0 or node_classes.max() >= feature_dim:
                raise TUFormatError("node labels fall outside the declared feature dimension")

    # graph id -> contiguous node range
    counts = np.bincount(indicator - 1, minlength=n_graphs)
    if np.any(counts == 0):
        raise TUFormatError("every graph needs at least one node")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])

    if edges.size:
        if edges.min() < 1 or edges.max() > n_nodes:
            raise TUFormatError("edge references an unknown node id")
        src, dst = edges[:, 0] - 1, edges[:, 1] - 1
        if np.any(indicator[src] != indicator[dst]):
            bad = int(np.flatnonzero(indicator[src] != indicator[dst])[0])
            raise TUFormatError(f"edge {edges[bad].tolist()} connects nodes of different graphs")
    else:
        src = dst = np.zeros(0, dtype=np.int64)

    adjs = [np.zeros((c, c), dtype=np.uint8) for c in counts]
    gid = indicator[src] - 1
    for g, u, v in zip(gid, src - starts[gid], dst - starts[gid]):
        if u != v:
            adjs[g][u, v] = 1
            adjs[g][v, u] = 1

    if not use_labels:
        degrees = np.concatenate([a.sum(axis=1) for a in adjs]).astype(np.int64)
        node_classes = np.minimum(degrees, degree_cap)
        if feature_dim is None:
            feature_dim = degree_cap + 1

    class_count = manifest.get("class_count") if manifest else None
    if class_count is not None and raw_labels.min() >= 0 and raw_labels.max() < class_count:
        labels = raw_labels
    else:
        label_values, labels = np.unique(raw_labels, return_inverse=True)
        class_count = len(label_values)
    graphs = []
    for g in range(n_graphs):
        sl = slice(starts[g], starts[g] + counts[g])
        graphs.append(Graph(adjs[g], one_hot(node_classes[sl], feature_dim), int(labels[g])))

    split = None
    if manifest is not None and "split" in manifest:
        sp = manifest["split"]
        split = Split(np.array(sp["train"]), np.array(sp["val"]), np.array(sp["test"]))
    log.debug("loaded %s: %d graphs, %d classes", name, n_graphs, class_count)
    return GraphDataset(graphs=graphs, class_count=int(class_count), feature_dim=int(feature_dim),
                        name=name, split=split)


def write_tu_dataset(ds: GraphDataset, out_dir: str | Path, name: str | None = None,
                     manifest: dict | None = None) -> Path:
    """Write `ds` in TU format; node labels are the feature class indices.

    A JSON manifest with the feature dimension, class count and split is
    always written next to the data so the dataset reloads identically.
    """
    name = name or ds.name
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    edge_lines, indicator_lines, node_lines = [], [], []
    offset = 0
    for gi, g in enumerate(ds.graphs, 1):
        rows, cols = np.nonzero(g.adjacency)
        edge_lines.extend(f"{u + offset + 1},{v + offset + 1}" for u, v in zip(rows, cols))
        indicator_lines.extend([str(gi)] * g.node_count)
        node_lines.extend(str(int(c)) for c in g.node_classes)
        offset += g.node_count

    def dump(suffix: str, lines: list[str]) -> None:
        with open(out / f"{name}_{suffix}.txt", "w", encoding="ascii", newline="\n") as fh:
            fh.write("".join(line + "\n" for line in lines))

    dump("A", edge_lines)
    dump("graph_indicator", indicator_lines)
    dump("graph_labels", [str(g.label) for g in ds.graphs])
    dump("node_labels", node_lines)

    meta = {"format_version": 1, "name": name, "feature_dim": ds.feature_dim,
            "class_count": ds.class_count, "graph_count": len(ds)}
    if ds.split is not None:
        meta["split"] = ds.split.as_dict()
    if manifest:
        meta.update(manifest)
    with open(out / f"{name}{MANIFEST_SUFFIX}", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def read_manifest(directory: str | Path, name: str) -> dict | None:
    path = Path(directory) / f"{name}{MANIFEST_SUFFIX}"
    if not path.exists():
        return None
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def find_dataset_name(directory: str | Path) -> str:
    """Infer NAME from the single ``NAME_graph_indicator.txt`` inside `directory`."""
    hits = sorted(Path(directory).glob("*_graph_indicator.txt"))
    if len(hits) != 1:
        raise FileNotFoundError(f"expected exactly one TU dataset in {directory}, found {len(hits)}")
    return hits[0].name[: -len("_graph_indicator.txt")]
