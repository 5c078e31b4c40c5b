"""Shared builders and independent oracles for the test suite."""
from __future__ import annotations

import numpy as np

from graphcloak.engine.model import Batch, forward, cross_entropy
from graphcloak.graph import Graph, GraphDataset, erdos_renyi, one_hot, split_dataset

# filled by test_acceptance, printed by the terminal summary hook in conftest
ACCEPTANCE_LINES: list[str] = []


def random_graph(rng: np.random.Generator, n: int, d: int = 3, p: float = 0.4, label: int = 0,
                 connected: bool = False) -> Graph:
    adj = erdos_renyi(n, p, rng)
    if connected:
        for v in range(1, n):
            adj[v - 1, v] = adj[v, v - 1] = 1
    return Graph(adj, one_hot(rng.integers(0, d, n), d), label)


def synthetic_dataset(seed: int = 0, count: int = 40, d: int = 3, classes: int = 2,
                      sizes: tuple[int, int] = (8, 16), name: str = "SYN") -> GraphDataset:
    """Classes differ in edge density so a GNN can learn them."""
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(count):
        label = i % classes
        n = int(rng.integers(sizes[0], sizes[1] + 1))
        graphs.append(random_graph(rng, n, d, p=0.12 + 0.2 * label, label=label))
    return split_dataset(GraphDataset(graphs, classes, d, name), rng=seed)


def graph_loss(model, g: Graph, adjacency=None, features=None, label=None) -> float:
    batch = Batch.from_graphs([g], adjacency=None if adjacency is None else [adjacency],
                              features=None if features is None else [features],
                              labels=None if label is None else [label])
    logits, _ = forward(model, batch)
    return float(cross_entropy(logits, batch.labels)[0][0])


def relu_pattern(model, g: Graph, adjacency=None, features=None) -> np.ndarray:
    batch = Batch.from_graphs([g], adjacency=None if adjacency is None else [adjacency],
                              features=None if features is None else [features])
    _, cache = forward(model, batch)
    return cache.relu_patterns()


def close(a: float, f: float, rel: float = 1e-4, floor: float = 1e-8) -> bool:
    return abs(a - f) <= max(rel * max(abs(a), abs(f)), floor)


def dense_gcn_logits(params: dict, A: np.ndarray, X: np.ndarray, layers: int = 3) -> np.ndarray:
    """Step-by-step dense GCN written independently of the engine (single graph, eval mode)."""
    n = A.shape[0]
    At = A + np.eye(n)
    deg = At.sum(axis=1)
    Dm = np.diag(1.0 / np.sqrt(deg))
    Ahat = Dm @ At @ Dm
    H = X
    for k in range(layers):
        H = np.maximum(Ahat @ H @ params[f"conv{k}.weight"] + params[f"conv{k}.bias"], 0.0)
    z = H.mean(axis=0)
    h = np.maximum(z @ params["head.hidden.weight"] + params["head.hidden.bias"], 0.0)
    return h @ params["head.out.weight"] + params["head.out.bias"]


# --- finite-difference oracle -------------------------------------------------
# An independent dense forward that evaluates many parameter / input variants
# at once: every array carries a leading "variant" axis of length 1 or K.

def _bias(b):
    return b[:, None, :]


def stacked_forward(arch: str, P: dict, A: np.ndarray, X: np.ndarray, layers: int = 3):
    """Logits (K, Y) and ReLU on/off patterns (K, p) for a single unpadded graph."""
    n = A.shape[-1]
    pats = []
    if arch == "GCN":
        S = A + np.eye(n)
        dm = 1.0 / np.sqrt(S.sum(axis=2))
        Ahat = dm[:, :, None] * S * dm[:, None, :]
    H = X
    for k in range(layers):
        pre = f"conv{k}."
        if arch == "GCN":
            Z = Ahat @ (H @ P[pre + "weight"]) + _bias(P[pre + "bias"])
            pats.append(Z)
        elif arch == "GIN":
            eps = P[pre + "eps"][:, 0][:, None, None]
            agg = (1.0 + eps) * H + A @ H
            Z1 = agg @ P[pre + "mlp0.weight"] + _bias(P[pre + "mlp0.bias"])
            pats.append(Z1)
            Z = np.maximum(Z1, 0.0) @ P[pre + "mlp1.weight"] + _bias(P[pre + "mlp1.bias"])
            pats.append(Z)
        elif arch == "SAGE":
            cnt = (A > 0.5).sum(axis=2)
            inv = np.where(cnt > 0, 1.0 / np.maximum(cnt, 1), 0.0)
            neigh = inv[:, :, None] * (A @ H)
            Z = H @ P[pre + "w_self"] + neigh @ P[pre + "w_neigh"] + _bias(P[pre + "bias"])
            pats.append(Z)
        else:
            raise ValueError(arch)
        H = np.maximum(Z, 0.0)
    z = H.mean(axis=1)[:, None, :]
    Zh = z @ P["head.hidden.weight"] + _bias(P["head.hidden.bias"])
    pats.append(Zh)
    logits = (np.maximum(Zh, 0.0) @ P["head.out.weight"] + _bias(P["head.out.bias"]))[:, 0, :]
    K = logits.shape[0]
    pattern = np.concatenate([np.broadcast_to(p > 0, (K,) + p.shape[1:]).reshape(K, -1) for p in pats],
                             axis=1)
    return logits, pattern


def stacked_loss(arch, P, A, X, label):
    logits, pattern = stacked_forward(arch, P, A, X)
    m = logits.max(axis=1, keepdims=True)
    lse = (m[:, 0] + np.log(np.exp(logits - m).sum(axis=1)))
    return lse - logits[:, label], pattern


def _base(model, g):
    P = {k: v[None] for k, v in model.params.items()}
    return P, g.adjacency.astype(np.float64)[None], g.features[None]


def fd_gradients(model, g, label, blocks=("theta", "features", "adjacency"), h=1e-4, chunk=2048):
    """Central differences for every coordinate of the requested blocks.

    Returns ``{block: (fd_values, valid)}`` with arrays shaped like the primal
    (adjacency: per unordered pair, symmetric perturbation). Coordinates whose
    +-h evaluations flip any ReLU relative to the base point are marked invalid.
    """
    P, A, X = _base(model, g)
    _, base_pat = stacked_loss(model.arch, P, A, X, label)
    out = {}

    def run(make, count):
        vals = np.empty(count)
        ok = np.empty(count, dtype=bool)
        for lo in range(0, count, chunk):
            idx = np.arange(lo, min(count, lo + chunk))
            Pp, Ap, Xp = make(idx, +h)
            Pm, Am, Xm = make(idx, -h)
            lp, pp = stacked_loss(model.arch, Pp, Ap, Xp, label)
            lm, pm = stacked_loss(model.arch, Pm, Am, Xm, label)
            vals[idx] = (lp - lm) / (2 * h)
            ok[idx] = np.all(pp == base_pat, axis=1) & np.all(pm == base_pat, axis=1)
        return vals, ok

    if "theta" in blocks:
        out["theta"] = {}
        for name, v in model.params.items():
            def make(idx, step, name=name, v=v):
                stack = np.repeat(v[None], len(idx), axis=0).reshape(len(idx), -1)
                stack[np.arange(len(idx)), idx] += step
                Q = dict(P)
                Q[name] = stack.reshape((len(idx),) + v.shape)
                return Q, A, X
            vals, ok = run(make, v.size)
            out["theta"][name] = (vals.reshape(v.shape), ok.reshape(v.shape))
    if "features" in blocks:
        n, d = g.features.shape
        def make(idx, step):
            stack = np.repeat(X, len(idx), axis=0).reshape(len(idx), -1)
            stack[np.arange(len(idx)), idx] += step
            return P, A, stack.reshape(len(idx), n, d)
        vals, ok = run(make, n * d)
        out["features"] = (vals.reshape(n, d), ok.reshape(n, d))
    if "adjacency" in blocks:
        n = g.node_count
        rows, cols = np.triu_indices(n, 1)
        def make(idx, step):
            stack = np.repeat(A, len(idx), axis=0)
            k = np.arange(len(idx))
            stack[k, rows[idx], cols[idx]] += step
            stack[k, cols[idx], rows[idx]] += step
            return P, stack, X
        vals, ok = run(make, rows.size)
        fd = np.zeros((n, n))
        valid = np.zeros((n, n), dtype=bool)
        fd[rows, cols] = fd[cols, rows] = vals
        valid[rows, cols] = valid[cols, rows] = ok
        out["adjacency"] = (fd, valid)
    return out


def worst_violation(analytic, fd, valid, rel=1e-4, floor=1e-8):
    """max |a - f| / max(rel * max(|a|, |f|), floor) over valid entries; <= 1 means pass."""
    a, f = np.asarray(analytic)[valid], np.asarray(fd)[valid]
    if a.size == 0:
        return 0.0
    tol = np.maximum(rel * np.maximum(np.abs(a), np.abs(f)), floor)
    return float(np.max(np.abs(a - f) / tol))


def randomised_model(arch, in_dim, classes, seed, scale=0.3):
    from graphcloak.engine import init_model
    rng = np.random.default_rng(seed)
    m = init_model(arch, in_dim, classes, seed, dropout=0.0)
    for k in m.params:
        m.params[k] = m.params[k] + rng.normal(0.0, scale, m.params[k].shape)
    return m


def gradient_oracle_check(arch, seed, n=8, d=3, classes=3, scale=0.3):
    """Worst violation per block and the skipped-coordinate fraction for one random case."""
    from graphcloak.engine import backward_graph
    rng = np.random.default_rng(seed)
    g = random_graph(rng, n, d, p=0.4, label=int(rng.integers(classes)))
    model = randomised_model(arch, d, classes, seed, scale)
    gb = backward_graph(model, g)
    blocks = ("theta", "features", "adjacency") if arch == "GCN" else ("theta", "features")
    fd = fd_gradients(model, g, g.label, blocks)
    worst, skipped, total = {}, 0, 0
    th = [worst_violation(gb.d_theta[k], *fd["theta"][k]) for k in model.params]
    worst["theta"] = max(th)
    for k in model.params:
        total += fd["theta"][k][1].size
        skipped += int((~fd["theta"][k][1]).sum())
    worst["features"] = worst_violation(gb.d_features, *fd["features"])
    total += fd["features"][1].size
    skipped += int((~fd["features"][1]).sum())
    if "adjacency" in fd:
        iu = np.triu_indices(n, 1)
        a, f, v = gb.d_adjacency[iu], fd["adjacency"][0][iu], fd["adjacency"][1][iu]
        worst["adjacency"] = worst_violation(a, f, v)
        total += v.size
        skipped += int((~v).sum())
    return worst, skipped / total
