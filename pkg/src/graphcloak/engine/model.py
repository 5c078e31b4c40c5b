"""Dense GNN graph classifiers with hand-written reverse-mode gradients.

Every computation runs on a padded batch: adjacency (B, N, N), features
(B, N, d) and a node mask (B, N). Padded nodes are zeroed after each layer,
so they never leak into real nodes or the mean readout.

Gradients are returned for every parameter, for the node features and for
the adjacency matrix, treating each adjacency entry as an independent real
variable (GCN differentiates through its degree normalisation).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..graph import Graph
from ..softmedian import batched_soft_median, batched_soft_median_backward

ARCHS = ("GCN", "GIN", "SAGE", "GCN-SM")


class EngineError(ValueError):
    pass


class StaleCacheError(EngineError):
    pass


@dataclass
class GnnModel:
    arch: str
    in_dim: int
    num_classes: int
    hidden: int = 32
    num_layers: int = 3
    dropout: float = 0.0
    temperature: float = 1.0
    params: dict[str, np.ndarray] = field(default_factory=dict)
    version: int = 0

    def copy(self) -> "GnnModel":
        return GnnModel(self.arch, self.in_dim, self.num_classes, self.hidden, self.num_layers,
                        self.dropout, self.temperature,
                        {k: v.copy() for k, v in self.params.items()}, self.version)

    def load_params(self, params: dict[str, np.ndarray]) -> None:
        for k, v in params.items():
            self.params[k][...] = v
        self.version += 1

    def n_params(self) -> int:
        return sum(v.size for v in self.params.values())


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=(fan_in, fan_out))


def init_model(arch: str, in_dim: int, num_classes: int, seed: int | np.random.Generator = 0,
               hidden: int = 32, num_layers: int = 3, dropout: float | None = None,
               temperature: float = 1.0) -> GnnModel:
    """Glorot-initialised model; GIN defaults to 0.5 dropout in the head, others to none."""
    arch = arch.upper()
    if arch not in ARCHS:
        raise EngineError(f"unknown architecture {arch!r}; expected one of {ARCHS}")
    rng = np.random.default_rng(seed)
    if dropout is None:
        dropout = 0.5 if arch == "GIN" else 0.0
    p: dict[str, np.ndarray] = {}
    width = in_dim
    for k in range(num_layers):
        pre = f"conv{k}."
        if arch in ("GCN", "GCN-SM"):
            p[pre + "weight"] = _glorot(rng, width, hidden)
            p[pre + "bias"] = np.zeros(hidden)
        elif arch == "GIN":
            p[pre + "eps"] = np.zeros(1)
            p[pre + "mlp0.weight"] = _glorot(rng, width, hidden)
            p[pre + "mlp0.bias"] = np.zeros(hidden)
            p[pre + "mlp1.weight"] = _glorot(rng, hidden, hidden)
            p[pre + "mlp1.bias"] = np.zeros(hidden)
        else:
            p[pre + "w_self"] = _glorot(rng, width, hidden)
            p[pre + "w_neigh"] = _glorot(rng, width, hidden)
            p[pre + "bias"] = np.zeros(hidden)
        width = hidden
    p["head.hidden.weight"] = _glorot(rng, hidden, hidden)
    p["head.hidden.bias"] = np.zeros(hidden)
    p["head.out.weight"] = _glorot(rng, hidden, num_classes)
    p["head.out.bias"] = np.zeros(num_classes)
    return GnnModel(arch, in_dim, num_classes, hidden, num_layers, float(dropout),
                    float(temperature), p)


@dataclass
class Batch:
    adjacency: np.ndarray  # (B, N, N)
    features: np.ndarray  # (B, N, d)
    mask: np.ndarray  # (B, N)
    labels: np.ndarray  # (B,)

    @property
    def sizes(self) -> np.ndarray:
        return self.mask.sum(axis=1).astype(np.int64)

    @classmethod
    def from_graphs(cls, graphs: Sequence[Graph], adjacency: Sequence[np.ndarray] | None = None,
                    features: Sequence[np.ndarray] | None = None,
                    labels: Sequence[int] | None = None) -> "Batch":
        if not graphs:
            raise EngineError("empty batch")
        B = len(graphs)
        N = max(g.node_count for g in graphs)
        d = graphs[0].feature_dim
        A = np.zeros((B, N, N))
        X = np.zeros((B, N, d))
        M = np.zeros((B, N))
        for i, g in enumerate(graphs):
            n = g.node_count
            A[i, :n, :n] = g.adjacency if adjacency is None else adjacency[i]
            X[i, :n] = g.features if features is None else features[i]
            M[i, :n] = 1.0
        y = np.array([g.label for g in graphs] if labels is None else labels, dtype=np.int64)
        return cls(A, X, M, y)


@dataclass
class Cache:
    model_id: int
    version: int
    train: bool
    batch: Batch
    layers: list = field(default_factory=list)
    readout: np.ndarray | None = None
    head: tuple = ()

    def relu_patterns(self) -> np.ndarray:
        """Concatenated ReLU on/off pattern of every activation, for kink detection."""
        parts = [np.ravel(z > 0) for z in _collect_preacts(self)]
        return np.concatenate(parts)


def _collect_preacts(cache: Cache) -> list[np.ndarray]:
    out = []
    for layer in cache.layers:
        out.extend(layer["preacts"])
    out.append(cache.head[1])
    return out


@dataclass
class Gradients:
    params: dict[str, np.ndarray]
    features: np.ndarray  # (B, N, d)
    adjacency: np.ndarray  # (B, N, N), raw per-entry gradient

    def symmetric_adjacency(self) -> np.ndarray:
        """Per-pair gradient: entry (u, v) holds dL/dA_uv + dL/dA_vu."""
        g = self.adjacency + np.swapaxes(self.adjacency, 1, 2)
        idx = np.arange(g.shape[1])
        g[:, idx, idx] = 0.0
        return g


def _gcn_normalise(A: np.ndarray, mask: np.ndarray):
    n = A.shape[1]
    S = A * (mask[:, :, None] * mask[:, None, :])
    S[:, np.arange(n), np.arange(n)] += mask
    deg = S.sum(axis=2)
    s = np.where(deg > 0, 1.0 / np.sqrt(np.where(deg > 0, deg, 1.0)), 0.0)
    Ahat = s[:, :, None] * S * s[:, None, :]
    return Ahat, S, s


def _gcn_normalise_backward(gAhat: np.ndarray, S: np.ndarray, s: np.ndarray) -> np.ndarray:
    gS = gAhat * s[:, :, None] * s[:, None, :]
    gs = (gAhat * S * s[:, None, :]).sum(axis=2) + (gAhat * S * s[:, :, None]).sum(axis=1)
    gdeg = -0.5 * s**3 * gs
    return gS + gdeg[:, :, None]


def _relu(z):
    return np.maximum(z, 0.0)


def forward(model: GnnModel, batch: Batch, train: bool = False,
            rng: np.random.Generator | None = None) -> tuple[np.ndarray, Cache]:
    """Logits (B, Y) and the cache needed by :func:`backward`."""
    A, H, mask = batch.adjacency, batch.features, batch.mask
    if H.shape[2] != model.in_dim:
        raise EngineError(f"feature dim {H.shape[2]} does not match model input {model.in_dim}")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(H))):
        raise EngineError("non-finite input")
    P = model.params
    cache = Cache(id(model), model.version, train, batch)
    m3 = mask[:, :, None]
    arch = model.arch
    if arch in ("GCN", "GCN-SM"):
        Ahat, S, s = _gcn_normalise(A, mask)
    for k in range(model.num_layers):
        pre = f"conv{k}."
        if arch == "GCN":
            HW = H @ P[pre + "weight"]
            Z = Ahat @ HW + P[pre + "bias"]
            Hn = _relu(Z) * m3
            cache.layers.append({"H": H, "HW": HW, "preacts": [Z]})
        elif arch == "GCN-SM":
            HW = H @ P[pre + "weight"]
            valid = S > 0
            Q = Ahat[..., None] * HW[:, None, :, :]
            agg, sm_cache = batched_soft_median(Q, valid, model.temperature)
            count = valid.sum(axis=2)[..., None].astype(np.float64)
            Z = count * agg + P[pre + "bias"]
            Hn = _relu(Z) * m3
            cache.layers.append({"H": H, "HW": HW, "sm": sm_cache, "count": count, "preacts": [Z]})
        elif arch == "GIN":
            eps = P[pre + "eps"][0]
            agg = (1.0 + eps) * H + A @ H
            Z1 = agg @ P[pre + "mlp0.weight"] + P[pre + "mlp0.bias"]
            U = _relu(Z1) * m3
            Z2 = U @ P[pre + "mlp1.weight"] + P[pre + "mlp1.bias"]
            Hn = _relu(Z2) * m3
            cache.layers.append({"H": H, "agg": agg, "U": U, "preacts": [Z1, Z2]})
        else:  # SAGE
            cnt = (A > 0.5).sum(axis=2)
            inv = np.where(cnt > 0, 1.0 / np.maximum(cnt, 1), 0.0)
            AH = A @ H
            neigh = inv[:, :, None] * AH
            Z = H @ P[pre + "w_self"] + neigh @ P[pre + "w_neigh"] + P[pre + "bias"]
            Hn = _relu(Z) * m3
            cache.layers.append({"H": H, "neigh": neigh, "inv": inv, "preacts": [Z]})
        H = Hn
    n = mask.sum(axis=1, keepdims=True)
    zG = H.sum(axis=1) / n
    Zh = zG @ P["head.hidden.weight"] + P["head.hidden.bias"]
    Hh = _relu(Zh)
    keep = None
    if train and model.dropout > 0:
        if rng is None:
            raise EngineError("training-mode dropout needs an rng")
        keep = (rng.random(Hh.shape) >= model.dropout) / (1.0 - model.dropout)
        Hh = Hh * keep
    logits = Hh @ P["head.out.weight"] + P["head.out.bias"]
    cache.readout = zG
    cache.head = (H, Zh, Hh, keep, n)
    if arch in ("GCN", "GCN-SM"):
        cache.layers.insert(0, {"norm": (Ahat, S, s), "preacts": []})
    return logits, cache


def backward(model: GnnModel, cache: Cache, grad_logits: np.ndarray) -> Gradients:
    """Reverse pass from ``dL/dlogits`` (B, Y) to parameters, features and adjacency."""
    if cache.model_id != id(model) or cache.version != model.version:
        raise StaleCacheError("model changed since the forward pass")
    P = model.params
    batch = cache.batch
    mask = batch.mask
    m3 = mask[:, :, None]
    A = batch.adjacency
    g: dict[str, np.ndarray] = {}
    H_last, Zh, Hh, keep, n = cache.head
    g["head.out.weight"] = Hh.T @ grad_logits
    g["head.out.bias"] = grad_logits.sum(axis=0)
    gHh = grad_logits @ P["head.out.weight"].T
    if keep is not None:
        gHh = gHh * keep
    gZh = gHh * (Zh > 0)
    g["head.hidden.weight"] = cache.readout.T @ gZh
    g["head.hidden.bias"] = gZh.sum(axis=0)
    gz = gZh @ P["head.hidden.weight"].T
    gH = (gz / n)[:, None, :] * m3

    arch = model.arch
    layers = cache.layers
    gA = np.zeros_like(A)
    if arch in ("GCN", "GCN-SM"):
        Ahat, S, s = layers[0]["norm"]
        layers = layers[1:]
        gAhat = np.zeros_like(A)
    for k in reversed(range(model.num_layers)):
        pre = f"conv{k}."
        c = layers[k]
        H = c["H"]
        if arch == "GCN":
            Z = c["preacts"][0]
            gZ = gH * m3 * (Z > 0)
            g[pre + "bias"] = gZ.sum(axis=(0, 1))
            gHW = np.swapaxes(Ahat, 1, 2) @ gZ
            gAhat += gZ @ np.swapaxes(c["HW"], 1, 2)
            g[pre + "weight"] = np.einsum("bnf,bnh->fh", H, gHW)
            gH = gHW @ P[pre + "weight"].T
        elif arch == "GCN-SM":
            Z = c["preacts"][0]
            gZ = gH * m3 * (Z > 0)
            g[pre + "bias"] = gZ.sum(axis=(0, 1))
            gQ = batched_soft_median_backward(c["count"] * gZ, c["sm"])
            gHW = np.einsum("bvuh,bvu->buh", gQ, Ahat)
            gAhat += np.einsum("bvuh,buh->bvu", gQ, c["HW"])
            g[pre + "weight"] = np.einsum("bnf,bnh->fh", H, gHW)
            gH = gHW @ P[pre + "weight"].T
        elif arch == "GIN":
            Z1, Z2 = c["preacts"]
            gZ2 = gH * m3 * (Z2 > 0)
            g[pre + "mlp1.bias"] = gZ2.sum(axis=(0, 1))
            g[pre + "mlp1.weight"] = np.einsum("bnf,bnh->fh", c["U"], gZ2)
            gU = gZ2 @ P[pre + "mlp1.weight"].T
            gZ1 = gU * m3 * (Z1 > 0)
            g[pre + "mlp0.bias"] = gZ1.sum(axis=(0, 1))
            g[pre + "mlp0.weight"] = np.einsum("bnf,bnh->fh", c["agg"], gZ1)
            gagg = gZ1 @ P[pre + "mlp0.weight"].T
            g[pre + "eps"] = np.array([np.sum(gagg * H)])
            gA += gagg @ np.swapaxes(H, 1, 2)
            gH = (1.0 + P[pre + "eps"][0]) * gagg + np.swapaxes(A, 1, 2) @ gagg
        else:
            Z = c["preacts"][0]
            gZ = gH * m3 * (Z > 0)
            g[pre + "bias"] = gZ.sum(axis=(0, 1))
            g[pre + "w_self"] = np.einsum("bnf,bnh->fh", H, gZ)
            g[pre + "w_neigh"] = np.einsum("bnf,bnh->fh", c["neigh"], gZ)
            gneigh = gZ @ P[pre + "w_neigh"].T
            gAH = c["inv"][:, :, None] * gneigh
            gA += gAH @ np.swapaxes(H, 1, 2)
            gH = gZ @ P[pre + "w_self"].T + np.swapaxes(A, 1, 2) @ gAH
    if arch in ("GCN", "GCN-SM"):
        gA = _gcn_normalise_backward(gAhat, S, s)
    pair_mask = mask[:, :, None] * mask[:, None, :]
    gA = gA * pair_mask
    idx = np.arange(A.shape[1])
    gA[:, idx, idx] = 0.0
    ordered = {k: g[k] for k in P}
    return Gradients(ordered, gH * m3, gA)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-example softmax cross-entropy (natural log) and its gradient w.r.t. the logits."""
    logits = np.asarray(logits, dtype=np.float64)
    if not np.all(np.isfinite(logits)):
        raise EngineError("non-finite logits")
    labels = np.asarray(labels, dtype=np.int64)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=-1))
    idx = np.arange(logits.shape[0])
    losses = lse - shifted[idx, labels]
    probs = np.exp(shifted - lse[:, None])
    grad = probs
    grad[idx, labels] -= 1.0
    return losses, grad


def loss(logits: np.ndarray, label: int) -> float:
    """Cross-entropy of a single logit vector."""
    losses, _ = cross_entropy(np.atleast_2d(logits), np.array([label]))
    return float(losses[0])


def loss_and_grad(model: GnnModel, batch: Batch, train: bool = False,
                  rng: np.random.Generator | None = None, reduction: str = "mean"):
    """Forward + backward. Returns (per-example losses, logits, Gradients).

    ``reduction="sum"`` yields per-graph input gradients of each graph's own loss.
    """
    logits, cache = forward(model, batch, train=train, rng=rng)
    losses, grad = cross_entropy(logits, batch.labels)
    if reduction == "mean":
        grad = grad / len(losses)
    elif reduction != "sum":
        raise ValueError(f"unknown reduction {reduction!r}")
    return losses, logits, backward(model, cache, grad)


@dataclass
class GradientBundle:
    """Gradients of one graph's loss."""

    d_theta: dict[str, np.ndarray]
    d_features: np.ndarray
    d_adjacency: np.ndarray
    loss: float


def forward_graph(model: GnnModel, g: Graph, mode: str = "eval",
                  adjacency_override: np.ndarray | None = None,
                  rng: np.random.Generator | None = None) -> tuple[np.ndarray, Cache]:
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    adj = None if adjacency_override is None else [np.asarray(adjacency_override, dtype=np.float64)]
    batch = Batch.from_graphs([g], adjacency=adj)
    logits, cache = forward(model, batch, train=mode == "train", rng=rng)
    return logits[0], cache


def backward_graph(model: GnnModel, g: Graph, label: int | None = None,
                   adjacency_override: np.ndarray | None = None,
                   features_override: np.ndarray | None = None) -> GradientBundle:
    """Eval-mode gradients of one graph's loss; ``d_adjacency`` is the symmetrised per-pair gradient."""
    label = g.label if label is None else label
    adj = None if adjacency_override is None else [np.asarray(adjacency_override, dtype=np.float64)]
    feats = None if features_override is None else [np.asarray(features_override, dtype=np.float64)]
    batch = Batch.from_graphs([g], adjacency=adj, features=feats, labels=[label])
    losses, _, grads = loss_and_grad(model, batch, reduction="sum")
    return GradientBundle(grads.params, grads.features[0], grads.symmetric_adjacency()[0],
                          float(losses[0]))
