"""Experiment orchestration with content-addressed artifacts.

Layout under ``<output_dir>/artifacts``::

    cloaked/<key>/     TU files + manifest of one cloaked dataset
    models/<key>.npz   one trained victim checkpoint

Keys hash everything that determines the artifact, so reruns reuse them and
any report cell can be re-derived from disk.
"""
from __future__ import annotations

import hashlib
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from ..cloak.minmin import CloakJob, run_cloak
from ..cloak.poison import CloakError
from ..defense import ATTACK_SPACES, AttackConfig, adversarial_train
from ..engine.checkpoint import load_checkpoint, save_checkpoint
from ..engine.model import init_model
from ..engine.training import evaluate, train
from ..graph import GraphDataset, dataset_stats, split_dataset
from ..tu import find_dataset_name, load_tu_dataset
from .config import ExperimentConfig

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
AT_SUFFIX = "+AT"


class ExperimentError(RuntimeError):
    pass


@dataclass
class CellResult:
    dataset: str
    method: str
    source: str
    victim: str
    seed: int
    poison_rate: float
    clean_acc: float
    cloaked_acc: float
    drop: float
    delta_edges_pct: float
    delta_density_pct: float
    budget_hist: dict[str, int] = field(default_factory=dict)
    seconds_cloak: float = 0.0
    seconds_train: float = 0.0
    cloaked_path: str = ""
    model_path: str = ""

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class CloakReport:
    config_hash: str
    rows: list[CellResult] = field(default_factory=list)
    schema_version: int = SCHEMA_VERSION

    def extend(self, other: "CloakReport") -> None:
        self.rows.extend(other.rows)

    def matrix(self, method: str) -> dict[str, dict[str, float]]:
        """Mean drop per (source, victim)."""
        acc: dict[tuple[str, str], list[float]] = {}
        for r in self.rows:
            if r.method == method:
                acc.setdefault((r.source, r.victim), []).append(r.drop)
        out: dict[str, dict[str, float]] = {}
        for (s, v), drops in sorted(acc.items()):
            out.setdefault(s, {})[v] = float(np.mean(drops))
        return out


def dataset_digest(ds: GraphDataset) -> str:
    h = hashlib.sha256(f"{ds.name}|{ds.class_count}|{ds.feature_dim}".encode())
    for g in ds.graphs:
        h.update(np.packbits(g.adjacency).tobytes())
        h.update(g.node_classes.astype(np.int64).tobytes())
        h.update(int(g.label).to_bytes(4, "little"))
    if ds.split is not None:
        h.update(json.dumps(ds.split.as_dict()).encode())
    return h.hexdigest()


def _key(*parts) -> str:
    blob = json.dumps(parts, sort_keys=True, default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:20]


class Runner:
    """Shared state for one config: dataset, split cache, clean baselines."""

    def __init__(self, cfg: ExperimentConfig, dataset: GraphDataset | None = None):
        self.cfg = cfg
        self.root = Path(cfg.output_dir) / "artifacts"
        self._base = dataset
        self._splits: dict[int, GraphDataset] = {}
        self._clean: dict[tuple, tuple[float, str, float]] = {}

    @property
    def base(self) -> GraphDataset:
        if self._base is None:
            try:
                self._base = load_tu_dataset(self.cfg.data_root, self.cfg.dataset,
                                             feature_policy=self.cfg.feature_policy)
            except (OSError, ValueError) as exc:
                raise ExperimentError(f"cannot load dataset {self.cfg.dataset!r} from "
                                      f"{self.cfg.data_root}: {exc}") from exc
        return self._base

    def split_for(self, seed: int) -> GraphDataset:
        if seed not in self._splits:
            # a split shipped with the data wins; otherwise each seed draws its own
            ds = self.base
            self._splits[seed] = ds if ds.split is not None else split_dataset(ds, self.cfg.split, rng=seed)
        return self._splits[seed]

    def cloak(self, ds: GraphDataset, method: str, seed: int, rate: float,
              source: str) -> tuple[GraphDataset, dict, float, str]:
        job = CloakJob(method, surrogate_arch=source, train=self.cfg.train, n_steps=self.cfg.n_steps,
                       pgd=self.cfg.pgd, poison_rate=rate, beta=self.cfg.beta, seed=seed,
                       final_pass=self.cfg.final_pass)
        key = _key("cloak", dataset_digest(ds), job.to_dict())
        path = self.root / "cloaked" / key
        if (path / f"{ds.name}_manifest.json").exists():
            cloaked = load_tu_dataset(path, find_dataset_name(path))
            cloaked = cloaked.replace(name=ds.name)
            with open(path / f"{ds.name}_manifest.json", encoding="utf-8") as fh:
                meta = json.load(fh)["cloak"]
            return cloaked, _hist(meta["budget_usage"]), float(meta.get("seconds", 0.0)), str(path)
        try:
            res = run_cloak(job, ds)
        except (CloakError, ValueError) as exc:
            raise ExperimentError(f"cloaking {ds.name} with {method} (seed {seed}) failed: {exc}") from exc
        res.save(path, name=ds.name)
        _patch_manifest(path / f"{ds.name}_manifest.json", seconds=res.seconds)
        return res.dataset, res.usage_histogram(), res.seconds, str(path)

    def fit(self, ds: GraphDataset, victim: str, seed: int, method: str) -> tuple[float, str, float]:
        """Train `victim` on ds's train split; returns (clean-test accuracy, checkpoint, seconds)."""
        arch, adv = (victim[: -len(AT_SUFFIX)], True) if victim.endswith(AT_SUFFIX) else (victim, False)
        tcfg = replace(self.cfg.train, seed=seed)
        space = ATTACK_SPACES.get(method, "structure") if adv else None
        key = _key("model", dataset_digest(ds), victim, space, tcfg.to_dict(), self.cfg.temperature,
                   self.cfg.beta)
        path = self.root / "models" / f"{key}.npz"
        test = self.base_test(seed)
        if path.exists():
            model = load_checkpoint(path)
            return evaluate(model, test) * 100.0, str(path), 0.0
        t0 = time.perf_counter()
        model = init_model(arch, ds.feature_dim, ds.class_count, seed, temperature=self.cfg.temperature)
        if adv:
            adversarial_train(model, ds, space, tcfg, AttackConfig(beta=self.cfg.beta,
                                                                      alpha=self.cfg.pgd.alpha,
                                                                      steps=self.cfg.pgd.steps))
        else:
            train(model, ds, tcfg)
        save_checkpoint(model, path)
        return evaluate(model, test) * 100.0, str(path), time.perf_counter() - t0

    def base_test(self, seed: int):
        ds = self.split_for(seed)
        return ds.subset(ds.split.test)

    @staticmethod
    def _clean_key(victim: str, seed: int, method: str) -> tuple:
        space = ATTACK_SPACES.get(method, "structure") if victim.endswith(AT_SUFFIX) else None
        return victim, seed, space

    def clean(self, victim: str, seed: int, method: str) -> float:
        k = self._clean_key(victim, seed, method)
        if k not in self._clean:
            self._clean[k] = self.fit(self.split_for(seed), victim, seed, method)
        return self._clean[k][0]

    def cell(self, method: str, victim: str, seed: int, rate: float, source: str) -> CellResult:
        ds = self.split_for(seed)
        clean_acc = self.clean(victim, seed, method)
        if method == "Clean":
            _, mpath, t_train = self._clean[self._clean_key(victim, seed, method)]
            return CellResult(ds.name, method, "-", victim, seed, rate, clean_acc, clean_acc, 0.0,
                              0.0, 0.0, seconds_train=t_train, model_path=mpath)
        cloaked, hist, t_cloak, cpath = self.cloak(ds, method, seed, rate, source)
        acc, mpath, t_train = self.fit(cloaked, victim, seed, method)
        stats = dataset_stats(cloaked.subset(cloaked.split.train), ds.subset(ds.split.train))
        src = source if method in ("EMinS", "EMinF", "EMaxS") else "-"
        return CellResult(ds.name, method, src, victim, seed, rate, clean_acc, acc, clean_acc - acc,
                          stats.delta_edges_pct, stats.delta_density_pct, hist, t_cloak, t_train,
                          cpath, mpath)


def _hist(usage: list[dict]) -> dict[str, int]:
    hist: dict[str, int] = {}
    for u in usage:
        hist[str(u["used"])] = hist.get(str(u["used"]), 0) + 1
    return dict(sorted(hist.items(), key=lambda kv: int(kv[0])))


def _patch_manifest(path: Path, **extra) -> None:
    with open(path, encoding="utf-8") as fh:
        meta = json.load(fh)
    meta["cloak"].update(extra)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_main_experiment(cfg: ExperimentConfig, dataset: GraphDataset | None = None,
                        runner: Runner | None = None) -> CloakReport:
    """Every (method, victim, seed) cell at the first poison rate of the config."""
    if not cfg.methods:
        raise ExperimentError("nothing to run")
    runner = runner or Runner(cfg, dataset)
    report = CloakReport(cfg.config_hash())
    rate = cfg.poison_rates[0]
    for seed in cfg.seeds:
        for method in cfg.methods:
            for victim in cfg.victims:
                log.info("cell %s %s seed=%d", method, victim, seed)
                report.rows.append(runner.cell(method, victim, seed, rate, cfg.surrogate))
    return report


def run_poison_rate_sweep(cfg: ExperimentConfig, rates: list[float] | None = None,
                          dataset: GraphDataset | None = None) -> CloakReport:
    rates = cfg.poison_rates if rates is None else rates
    if not rates:
        raise ExperimentError("no poison rates given")
    for r in rates:
        if not 0.0 <= r <= 1.0:
            raise ExperimentError(f"poison rate {r} outside [0, 1]")
    runner = Runner(cfg, dataset)
    report = CloakReport(cfg.config_hash())
    for r in rates:
        report.extend(run_main_experiment(replace(cfg, poison_rates=[r]), runner=runner))
    return report


def run_transferability(cfg: ExperimentConfig, sources: list[str], victims: list[str],
                        dataset: GraphDataset | None = None) -> CloakReport:
    """Cloak once per source surrogate and train every victim on the result."""
    bad = [m for m in cfg.methods if m not in ("EMinS", "EMinF", "EMaxS")]
    if bad:
        raise ExperimentError(f"transferability needs surrogate-based methods, got {bad}")
    if not cfg.methods or not sources or not victims:
        raise ExperimentError("nothing to run")
    runner = Runner(replace(cfg, victims=list(victims)), dataset)
    report = CloakReport(cfg.config_hash())
    for seed in cfg.seeds:
        for method in cfg.methods:
            for src in sources:
                for victim in victims:
                    report.rows.append(runner.cell(method, victim, seed, cfg.poison_rates[0], src))
    return report
