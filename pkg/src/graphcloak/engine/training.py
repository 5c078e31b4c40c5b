"""Mini-batch training with plateau scheduling, early stopping and best-model restore."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np

from ..graph import Graph, GraphDataset
from .model import Batch, EngineError, GnnModel, cross_entropy, forward, loss_and_grad
from .optim import Adam, ReduceLROnPlateau

log = logging.getLogger(__name__)

# (model, graphs, rng) -> Batch ; lets countermeasures perturb each batch before the step
BatchHook = Callable[[GnnModel, list[Graph], np.random.Generator], Batch]


@dataclass
class TrainConfig:
    lr: float = 1e-2
    weight_decay: float = 1e-4
    lr_factor: float = 0.25
    lr_patience: int = 20
    early_stop_patience: int = 50
    batch_size: int = 32
    max_epochs: int = 300
    seed: int = 0

    def __post_init__(self):
        if self.lr_patience < 1 or self.early_stop_patience < 1:
            raise ValueError("patience values must be positive")
        if not 0.0 < self.lr_factor < 1.0:
            raise ValueError("lr_factor must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch_size and max_epochs must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class History:
    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    lr: list[float] = field(default_factory=list)
    best_epoch: int = -1

    @property
    def epochs(self) -> int:
        return len(self.train_loss)


def iterate_batches(indices: np.ndarray, batch_size: int, rng: np.random.Generator | None):
    order = np.array(indices)
    if rng is not None:
        order = order[rng.permutation(len(order))]
    for start in range(0, len(order), batch_size):
        yield order[start:start + batch_size]


def predict_logits(model: GnnModel, graphs: Sequence[Graph], batch_size: int = 128) -> np.ndarray:
    out = []
    for start in range(0, len(graphs), batch_size):
        batch = Batch.from_graphs(list(graphs[start:start + batch_size]))
        logits, _ = forward(model, batch, train=False)
        out.append(logits)
    return np.concatenate(out, axis=0)


def evaluate(model: GnnModel, graphs: Sequence[Graph], labels: Sequence[int] | None = None) -> float:
    """Argmax accuracy; ties go to the lowest class index."""
    if len(graphs) == 0:
        raise EngineError("empty evaluation set")
    labels = np.array([g.label for g in graphs] if labels is None else labels)
    pred = np.argmax(predict_logits(model, graphs), axis=1)
    return float(np.mean(pred == labels))


def mean_loss(model: GnnModel, graphs: Sequence[Graph]) -> tuple[float, float]:
    logits = predict_logits(model, graphs)
    labels = np.array([g.label for g in graphs])
    losses, _ = cross_entropy(logits, labels)
    return float(losses.mean()), float(np.mean(np.argmax(logits, axis=1) == labels))


def train(model: GnnModel, ds: GraphDataset, cfg: TrainConfig,
          batch_hook: BatchHook | None = None) -> tuple[GnnModel, History]:
    """Train in place on ``ds.split.train``, monitoring ``ds.split.val``.

    The learning rate is reduced on validation-loss plateaus, training stops
    ``early_stop_patience`` epochs after the best validation loss, and the
    parameters from that best epoch are restored before returning.
    """
    if ds.split is None:
        raise EngineError("dataset has no split")
    if len(ds.split.train) == 0 or len(ds.split.val) == 0:
        raise EngineError("empty split")
    rng = np.random.default_rng(cfg.seed)
    hook_rng = np.random.default_rng([cfg.seed, 1])
    opt = Adam(model.params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    sched = ReduceLROnPlateau(opt, factor=cfg.lr_factor, patience=cfg.lr_patience)
    val_graphs = ds.subset(ds.split.val)
    hist = History()
    best_loss = np.inf
    best_params = {k: v.copy() for k, v in model.params.items()}
    for epoch in range(cfg.max_epochs):
        tot_loss, tot_correct, seen = 0.0, 0, 0
        for idx in iterate_batches(ds.split.train, cfg.batch_size, rng):
            graphs = ds.subset(idx)
            batch = batch_hook(model, graphs, hook_rng) if batch_hook else Batch.from_graphs(graphs)
            losses, logits, grads = loss_and_grad(model, batch, train=True, rng=rng)
            if not np.all(np.isfinite(losses)):
                raise EngineError(f"non-finite training loss at epoch {epoch}")
            opt.step(grads.params)
            model.version += 1
            tot_loss += float(losses.sum())
            tot_correct += int(np.sum(np.argmax(logits, axis=1) == batch.labels))
            seen += len(losses)
        v_loss, v_acc = mean_loss(model, val_graphs)
        hist.train_loss.append(tot_loss / seen)
        hist.train_acc.append(tot_correct / seen)
        hist.val_loss.append(v_loss)
        hist.val_acc.append(v_acc)
        hist.lr.append(opt.lr)
        if v_loss < best_loss:
            best_loss = v_loss
            hist.best_epoch = epoch
            best_params = {k: v.copy() for k, v in model.params.items()}
        sched.step(v_loss)
        if epoch - hist.best_epoch >= cfg.early_stop_patience:
            log.debug("early stop at epoch %d (best %d)", epoch, hist.best_epoch)
            break
    model.load_params(best_params)
    return model, hist
