"""Soft Median aggregation: a distance-to-median weighted mean of message rows."""
from __future__ import annotations

import numpy as np


def soft_median_weights(X: np.ndarray, temperature: float) -> np.ndarray:
    """Softmax weights ``softmax(-c / (T sqrt(d)))`` where ``c_v = ||median(X) - X_v||``."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("empty message set")
    if not temperature > 0:
        raise ValueError("temperature must be positive")
    med = np.median(X, axis=0)
    dist = np.linalg.norm(X - med, axis=1)
    z = -dist / (temperature * np.sqrt(X.shape[1]))
    z -= z.max()
    w = np.exp(z)
    return w / w.sum()


def soft_median_aggregate(X: np.ndarray, temperature: float) -> np.ndarray:
    """Aggregate the rows of an m x d message matrix into one d-vector."""
    X = np.asarray(X, dtype=np.float64)
    return soft_median_weights(X, temperature) @ X


def batched_soft_median(Q: np.ndarray, valid: np.ndarray, temperature: float):
    """Soft median over axis 2 of ``Q`` (B, N, N, h) restricted to ``valid`` (B, N, N).

    Returns the aggregate (B, N, h) and a cache for :func:`batched_soft_median_backward`.
    Rows with no valid message aggregate to zero.
    """
    B, N, M, h = Q.shape
    counts = valid.sum(axis=2)  # (B, N)
    big = np.where(valid[..., None], Q, np.inf)
    order = np.argsort(big, axis=2, kind="stable")
    ranked = np.take_along_axis(big, order, axis=2)
    lo = np.maximum((counts - 1) // 2, 0)
    hi = np.maximum(counts // 2, 0)
    lo = np.minimum(lo, M - 1)
    hi = np.minimum(hi, M - 1)
    take_lo = np.take_along_axis(ranked, lo[:, :, None, None].repeat(h, 3), axis=2)[:, :, 0]
    take_hi = np.take_along_axis(ranked, hi[:, :, None, None].repeat(h, 3), axis=2)[:, :, 0]
    has = counts > 0
    med = np.where(has[..., None], 0.5 * (take_lo + take_hi), 0.0)

    diff = np.where(valid[..., None], Q - med[:, :, None, :], 0.0)
    dist = np.sqrt((diff**2).sum(axis=3))
    scale = temperature * np.sqrt(h)
    z = np.where(valid, -dist / scale, -np.inf)
    zmax = np.where(has, z.max(axis=2, initial=-np.inf), 0.0)
    e = np.where(valid, np.exp(z - zmax[..., None]), 0.0)
    denom = e.sum(axis=2)
    w = e / np.where(denom > 0, denom, 1.0)[..., None]
    out = (w[..., None] * np.where(valid[..., None], Q, 0.0)).sum(axis=2)
    cache = (Q, valid, order, lo, hi, diff, dist, w, scale)
    return out, cache


def batched_soft_median_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    """Gradient of ``sum(grad_out * out)`` with respect to ``Q``."""
    Q, valid, order, lo, hi, diff, dist, w, scale = cache
    Qv = np.where(valid[..., None], Q, 0.0)
    gQ = w[..., None] * grad_out[:, :, None, :]
    gw = (grad_out[:, :, None, :] * Qv).sum(axis=3)
    gz = w * (gw - (w * gw).sum(axis=2, keepdims=True))
    gdist = np.where(valid, -gz / scale, 0.0)
    safe = np.where(dist > 0, dist, 1.0)
    gdiff = np.where((valid & (dist > 0))[..., None], (gdist / safe)[..., None] * diff, 0.0)
    gQ = gQ + gdiff
    gmed = -gdiff.sum(axis=2)  # (B, N, h)
    # route the median gradient to the rows that realised it, per feature
    rank = np.empty_like(order)
    M = Q.shape[2]
    np.put_along_axis(rank, order, np.arange(M)[None, None, :, None], axis=2)
    gQ = gQ + 0.5 * gmed[:, :, None, :] * (rank == lo[:, :, None, None])
    gQ = gQ + 0.5 * gmed[:, :, None, :] * (rank == hi[:, :, None, None])
    return np.where(valid[..., None], gQ, 0.0)
