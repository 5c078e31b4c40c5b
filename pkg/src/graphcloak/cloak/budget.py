"""Per-graph perturbation budgets and trigger sizing."""
from __future__ import annotations

import logging
import math

from ..graph import Graph

log = logging.getLogger(__name__)

DEFAULT_BETA = 0.05


def raw_budget(edges: int, nodes: int, beta: float = DEFAULT_BETA) -> int:
    """floor(min(|E| / 10, beta |V|^2)) without clamping."""
    # tiny epsilon absorbs binary rounding of beta * V^2 (e.g. 0.05 * 400)
    return max(0, min(edges // 10, math.floor(beta * nodes * nodes + 1e-9)))


def compute_budget(g: Graph, beta: float = DEFAULT_BETA) -> int:
    """Adaptive edit budget of one graph, clamped to at least 1."""
    c = raw_budget(g.edge_count, g.node_count, beta)
    if c < 1:
        log.debug("budget clamped from %d to 1 (|E|=%d, |V|=%d)", c, g.edge_count, g.node_count)
        return 1
    return c


def raw_trigger_size(c: int) -> int:
    """Largest n with n(n-1) + 2n <= c, i.e. floor((-1 + sqrt(1 + 4c)) / 2)."""
    if c < 0:
        raise ValueError("budget must be non-negative")
    return (math.isqrt(1 + 4 * c) - 1) // 2


def trigger_size(c: int) -> int:
    """`raw_trigger_size` clamped to >= 1."""
    return max(raw_trigger_size(c), 1)
