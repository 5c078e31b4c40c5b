"""Cloaking jobs: the min-min surrogate loop and the method dispatcher."""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..engine.checkpoint import params_digest, save_checkpoint
from ..engine.model import ARCHS, Batch, EngineError, GnnModel, init_model, loss_and_grad
from ..engine.optim import Adam
from ..engine.training import TrainConfig
from ..graph import GraphDataset
from ..tu import write_tu_dataset
from .budget import DEFAULT_BETA
from .features import PGDConfig, feature_steps
from .poison import (METHODS, BudgetUsage, CloakError, budget_usage, budgets_for, check_method,
                     select_poisoned)
from .structure import random_flips, structural_steps
from .subinj import DEFAULT_DENSITY, MAX_TRIGGER_NODES, SubgraphTrigger, subinj_cloak

log = logging.getLogger(__name__)

N_STEP_MID = 5000
N_STEP_LARGE = 500


@dataclass
class CloakJob:
    method: str
    surrogate_arch: str = "GCN"
    train: TrainConfig = field(default_factory=TrainConfig)
    n_steps: int = N_STEP_MID
    pgd: PGDConfig = field(default_factory=PGDConfig)
    poison_rate: float = 1.0
    beta: float = DEFAULT_BETA
    seed: int = 0
    exact: bool = False
    final_pass: bool = False
    density: float = DEFAULT_DENSITY
    max_trigger_nodes: int = MAX_TRIGGER_NODES

    def __post_init__(self):
        check_method(self.method)
        if not 0.0 <= self.poison_rate <= 1.0:
            raise CloakError(f"poison_rate must lie in [0, 1], got {self.poison_rate}")
        if self.n_steps < 0:
            raise CloakError("n_steps must be non-negative")
        if self.surrogate_arch not in ARCHS:
            raise CloakError(f"unknown surrogate architecture {self.surrogate_arch!r}")
        if self.beta <= 0:
            raise CloakError("beta must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["train"] = self.train.to_dict()
        return d


@dataclass
class CloakResult:
    dataset: GraphDataset
    job: CloakJob
    poisoned: np.ndarray
    usage: list[BudgetUsage]
    triggers: list[SubgraphTrigger] = field(default_factory=list)
    surrogate: GnnModel | None = None
    seconds: float = 0.0

    def manifest(self) -> dict:
        return {
            "cloak": {
                "method": self.job.method,
                "seed": self.job.seed,
                "beta": self.job.beta,
                "job": self.job.to_dict(),
                "poisoned": self.poisoned.tolist(),
                "budget_usage": [u.as_dict() for u in self.usage],
                "triggers": [t.as_dict() for t in self.triggers],
                "surrogate_sha256": params_digest(self.surrogate) if self.surrogate else None,
            }
        }

    def usage_histogram(self) -> dict[str, int]:
        hist: dict[str, int] = {}
        for u in self.usage:
            hist[str(u.used)] = hist.get(str(u.used), 0) + 1
        return dict(sorted(hist.items(), key=lambda kv: int(kv[0])))

    def save(self, out_dir: str | Path, name: str | None = None) -> Path:
        out = Path(out_dir)
        write_tu_dataset(self.dataset, out, name=name, manifest=self.manifest())
        if self.surrogate is not None:
            save_checkpoint(self.surrogate, out / "surrogate.npz")
        return out


def _perturb(job: CloakJob, model: GnnModel, graphs, originals, budgets, rng, maximize):
    if job.method == "EMinF":
        return feature_steps(model, graphs, originals, budgets, job.pgd, rng, maximize)
    return structural_steps(model, graphs, originals, budgets, maximize)


def emin_min_loop(job: CloakJob, ds: GraphDataset, poisoned: np.ndarray | None = None,
                  maximize: bool | None = None) -> CloakResult:
    """Alternate perturbation steps and surrogate updates for ``job.n_steps`` iterations.

    Each iteration samples a batch from the train split; the poisoned graphs
    in it are perturbed from their current state on the frozen surrogate
    (budget checked against the original graph), then the surrogate takes one
    optimiser step on the batch. EMaxS runs the same loop with the flip
    direction reversed.
    """
    if job.method not in ("EMinS", "EMinF", "EMaxS"):
        raise CloakError(f"min-min loop does not handle {job.method}")
    if ds.split is None:
        raise CloakError("dataset has no split")
    maximize = job.method == "EMaxS" if maximize is None else maximize
    t0 = time.perf_counter()
    root = np.random.SeedSequence(job.seed)
    sel_rng, batch_rng, drop_rng, pert_rng = (np.random.default_rng(s) for s in root.spawn(4))
    if poisoned is None:
        poisoned = select_poisoned(ds, job.poison_rate, sel_rng)
    budgets = budgets_for(ds, poisoned, job.beta)
    current = {int(i): ds[int(i)] for i in poisoned}

    model = init_model(job.surrogate_arch, ds.feature_dim, ds.class_count, job.seed)
    opt = Adam(model.params, lr=job.train.lr, weight_decay=job.train.weight_decay)
    train_idx = np.asarray(ds.split.train)
    bs = min(job.train.batch_size, len(train_idx))
    for step in range(job.n_steps):
        idx = np.sort(batch_rng.choice(train_idx, size=bs, replace=False))
        hit = [int(i) for i in idx if int(i) in current]
        if hit:
            new = _perturb(job, model, [current[i] for i in hit], [ds[i] for i in hit],
                           [budgets[i] for i in hit], pert_rng, maximize)
            current.update(zip(hit, new))
        graphs = [current.get(int(i), ds[int(i)]) for i in idx]
        losses, _, grads = loss_and_grad(model, Batch.from_graphs(graphs), train=True, rng=drop_rng)
        if not np.all(np.isfinite(losses)):
            raise EngineError(f"surrogate diverged at step {step}: loss {losses.tolist()}")
        opt.step(grads.params)
        model.version += 1
        if step % 100 == 0:
            log.debug("min-min step %d loss %.4f", step, float(losses.mean()))

    if job.final_pass and current:
        keys = sorted(current)
        for lo in range(0, len(keys), bs):
            chunk = keys[lo:lo + bs]
            new = _perturb(job, model, [current[i] for i in chunk], [ds[i] for i in chunk],
                           [budgets[i] for i in chunk], pert_rng, maximize)
            current.update(zip(chunk, new))

    cloaked = ds.with_graphs(current)
    usage = budget_usage(job.method, cloaked, ds, budgets)
    return CloakResult(cloaked, job, np.asarray(poisoned), usage, surrogate=model,
                       seconds=time.perf_counter() - t0)


def emaxs_cloak(job: CloakJob, ds: GraphDataset, poisoned: np.ndarray | None = None) -> CloakResult:
    if job.method != "EMaxS":
        raise CloakError("emaxs_cloak needs an EMaxS job")
    return emin_min_loop(job, ds, poisoned, maximize=True)


def random_cloak(ds: GraphDataset, beta: float = DEFAULT_BETA, rng: np.random.Generator | int = 0,
                 poisoned=None) -> GraphDataset:
    """Flip c uniformly chosen distinct node pairs in every selected train graph."""
    rng = np.random.default_rng(rng)
    if ds.split is None:
        raise CloakError("dataset has no split")
    idx = ds.split.train if poisoned is None else poisoned
    budgets = budgets_for(ds, idx, beta)
    return ds.with_graphs({i: random_flips(ds[i], c, rng) for i, c in budgets.items()})


def run_cloak(job: CloakJob, ds: GraphDataset) -> CloakResult:
    """Run any of the five methods on the train split of `ds`."""
    check_method(job.method)
    if ds.split is None:
        raise CloakError("dataset has no split")
    t0 = time.perf_counter()
    sel_rng, work_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(job.seed).spawn(2))
    poisoned = select_poisoned(ds, job.poison_rate, sel_rng)
    if job.method in ("EMinS", "EMinF", "EMaxS"):
        return emin_min_loop(job, ds, poisoned)
    triggers: list[SubgraphTrigger] = []
    if job.method == "SubInj":
        cloaked, triggers = subinj_cloak(ds, job.beta, job.density, work_rng, poisoned,
                                         job.max_trigger_nodes)
    else:
        cloaked = random_cloak(ds, job.beta, work_rng, poisoned)
    usage = budget_usage(job.method, cloaked, ds, budgets_for(ds, poisoned, job.beta))
    return CloakResult(cloaked, job, poisoned, usage, triggers, None, time.perf_counter() - t0)


__all__ = [
    "CloakJob", "CloakResult", "METHODS", "N_STEP_LARGE", "N_STEP_MID", "emaxs_cloak",
    "emin_min_loop", "random_cloak", "run_cloak",
]
