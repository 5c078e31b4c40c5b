"""Gradient-guided and random edge flipping under a cumulative edit budget."""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..engine.model import Batch, GnnModel, backward_graph, loss_and_grad
from ..graph import Graph, edit_distance


def rank_pairs(grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unordered pairs u < v sorted by |grad| descending, ties by (u, v) ascending."""
    rows, cols = np.triu_indices(grad.shape[0], 1)
    order = np.argsort(-np.abs(grad[rows, cols]), kind="stable")
    return rows[order], cols[order]


def admissible(adj: np.ndarray, grad: np.ndarray, rows: np.ndarray, cols: np.ndarray,
               maximize: bool = False) -> np.ndarray:
    """Flips that move the loss the wanted way to first order.

    Minimising: delete an edge with positive gradient, add a non-edge with
    negative gradient. Maximising reverses both cases.
    """
    present = adj[rows, cols] == 1
    g = grad[rows, cols]
    if maximize:
        return (present & (g < 0)) | (~present & (g > 0))
    return (present & (g > 0)) | (~present & (g < 0))


def apply_ranked_flips(adj: np.ndarray, orig: np.ndarray, grad: np.ndarray, budget: int,
                       maximize: bool = False, max_flips: int | None = None) -> tuple[np.ndarray, int]:
    """Apply admissible flips in rank order while the edit distance to `orig` stays within `budget`.

    At most ``max_flips`` (default: `budget`) flips are applied. Flips that
    restore an original pair never cost budget. Returns the new adjacency and
    the number of flips applied.
    """
    adj = np.array(adj, dtype=np.uint8, copy=True)
    rows, cols = rank_pairs(grad)
    ok = admissible(adj, grad, rows, cols, maximize)
    rows, cols = rows[ok], cols[ok]
    limit = budget if max_flips is None else max_flips
    dist = int(np.triu(adj != orig, 1).sum())
    applied = 0
    for u, v in zip(rows, cols):
        if applied >= limit:
            break
        reverting = adj[u, v] != orig[u, v]
        if not reverting and dist + 1 > budget:
            continue
        adj[u, v] = adj[v, u] = 1 - adj[u, v]
        dist += -1 if reverting else 1
        applied += 1
    return adj, applied


def emins_step(model: GnnModel, g: Graph, g_orig: Graph, label: int | None = None,
               c: int = 1, exact: bool = False, maximize: bool = False) -> Graph:
    """One GradArgMax step on a frozen model.

    The symmetric adjacency gradient ranks every node pair by magnitude; the
    top admissible pairs are flipped in order (delete where the gradient is
    positive, add where it is negative), subject to the edit budget `c`
    measured against `g_orig`. ``exact=True`` recomputes the gradient after
    every flip. ``maximize=True`` gives the error-maximising variant.
    """
    label = g.label if label is None else label
    adj = g.adjacency
    if not exact:
        grad = backward_graph(model, g, label).d_adjacency
        new, _ = apply_ranked_flips(adj, g_orig.adjacency, grad, c, maximize)
        return g.with_adjacency(new)
    cur = g
    for _ in range(c):
        grad = backward_graph(model, cur, label).d_adjacency
        new, n = apply_ranked_flips(cur.adjacency, g_orig.adjacency, grad, c, maximize, max_flips=1)
        if n == 0:
            break
        cur = cur.with_adjacency(new)
    return cur


def emaxs_step(model: GnnModel, g: Graph, g_orig: Graph, label: int | None = None,
               c: int = 1, exact: bool = False) -> Graph:
    return emins_step(model, g, g_orig, label, c, exact, maximize=True)


def structural_steps(model: GnnModel, graphs: Sequence[Graph], originals: Sequence[Graph],
                     budgets: Sequence[int], maximize: bool = False) -> list[Graph]:
    """Batched :func:`emins_step`: one backward pass for the whole batch, then per-graph flips."""
    batch = Batch.from_graphs(list(graphs))
    _, _, grads = loss_and_grad(model, batch, train=False, reduction="sum")
    gsym = grads.symmetric_adjacency()
    out = []
    for i, (g, o, c) in enumerate(zip(graphs, originals, budgets)):
        n = g.node_count
        new, applied = apply_ranked_flips(g.adjacency, o.adjacency, gsym[i, :n, :n], c, maximize)
        out.append(g.with_adjacency(new) if applied else g)
    return out


def random_flips(g: Graph, c: int, rng: np.random.Generator) -> Graph:
    """Flip min(c, #pairs) distinct uniformly chosen node pairs."""
    n = g.node_count
    rows, cols = np.triu_indices(n, 1)
    k = min(c, rows.size)
    if k == 0:
        return g
    pick = rng.choice(rows.size, size=k, replace=False)
    adj = np.array(g.adjacency, copy=True)
    u, v = rows[pick], cols[pick]
    adj[u, v] = 1 - adj[u, v]
    adj[v, u] = adj[u, v]
    return g.with_adjacency(adj)


__all__ = [
    "admissible", "apply_ranked_flips", "edit_distance", "emaxs_step", "emins_step", "random_flips",
    "rank_pairs", "structural_steps",
]
