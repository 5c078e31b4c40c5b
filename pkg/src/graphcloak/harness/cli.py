"""Command line entry point: ``graphcloak {cloak,train,eval,sweep}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from ..cloak.budget import DEFAULT_BETA
from ..cloak.features import PGDConfig
from ..cloak.minmin import N_STEP_LARGE, CloakJob, run_cloak
from ..cloak.poison import METHODS
from ..defense import AttackConfig, adversarial_train
from ..engine.checkpoint import load_checkpoint, save_checkpoint
from ..engine.model import ARCHS, init_model
from ..engine.training import TrainConfig, evaluate, train
from ..graph import GraphDataset, split_dataset
from ..tu import find_dataset_name, load_tu_dataset
from .config import default_data_root, load_config
from .experiments import run_main_experiment, run_poison_rate_sweep, run_transferability
from .report import emit_report

log = logging.getLogger("graphcloak")


def _load_dir(path: str, seed: int) -> GraphDataset:
    p = Path(path)
    ds = load_tu_dataset(p, find_dataset_name(p))
    return ds if ds.split is not None else split_dataset(ds, rng=seed)


def _train_config(args) -> TrainConfig:
    return TrainConfig(lr=args.lr, batch_size=args.batch_size, max_epochs=args.max_epochs, seed=args.seed)


def cmd_cloak(args) -> int:
    ds = load_tu_dataset(args.root, args.dataset, feature_policy=args.feature_policy)
    if ds.split is None:
        ds = split_dataset(ds, rng=args.seed)
    job = CloakJob(args.method, surrogate_arch=args.surrogate, train=_train_config(args),
                   n_steps=args.n_steps, pgd=PGDConfig(args.alpha, args.pgd_steps, args.temperature),
                   poison_rate=args.poison_rate, beta=args.beta, seed=args.seed,
                   exact=args.exact, final_pass=args.final_pass)
    res = run_cloak(job, ds)
    res.save(args.out, name=ds.name)
    print(json.dumps({"out": str(args.out), "method": args.method, "poisoned": len(res.poisoned),
                      "budget_hist": res.usage_histogram(), "seconds": round(res.seconds, 3)}))
    return 0


def cmd_train(args) -> int:
    ds = _load_dir(args.dataset, args.seed)
    model = init_model(args.arch, ds.feature_dim, ds.class_count, args.seed,
                       temperature=args.sm_temperature)
    cfg = _train_config(args)
    if args.adversarial:
        _, hist = adversarial_train(model, ds, args.adversarial, cfg, AttackConfig(beta=args.beta))
    else:
        _, hist = train(model, ds, cfg)
    save_checkpoint(model, args.out)
    acc = evaluate(model, ds.subset(ds.split.test))
    print(json.dumps({"checkpoint": str(args.out), "epochs": hist.epochs,
                      "best_epoch": hist.best_epoch, "test_acc": acc}))
    return 0


def cmd_eval(args) -> int:
    ds = _load_dir(args.dataset, args.seed)
    model = load_checkpoint(args.model)
    idx = getattr(ds.split, args.split)
    print(json.dumps({"split": args.split, "graphs": len(idx), "accuracy": evaluate(model, ds.subset(idx))}))
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.out:
        cfg = replace(cfg, output_dir=args.out)
    written = []
    report = run_main_experiment(cfg)
    written += emit_report(report, cfg.output_dir, stem="main")
    if len(cfg.poison_rates) > 1:
        written += emit_report(run_poison_rate_sweep(cfg), cfg.output_dir, stem="poison_rate")
    if cfg.transfer_sources:
        transfer_cfg = replace(cfg, methods=[m for m in cfg.methods if m in ("EMinS", "EMinF", "EMaxS")])
        if transfer_cfg.methods:
            written += emit_report(run_transferability(transfer_cfg, cfg.transfer_sources, cfg.victims),
                                   cfg.output_dir, stem="transfer")
    print(json.dumps({"config_hash": cfg.config_hash(), "reports": [str(p) for p in written]}))
    return 0


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=1e-2)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--max-epochs", type=int, default=300)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="graphcloak", description="Unlearnable graph classification data.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cloak", help="cloak the train split of a TU dataset")
    p.add_argument("--dataset", required=True, help="dataset name, e.g. MUTAG")
    p.add_argument("--root", default=default_data_root(), help="directory holding TU datasets")
    p.add_argument("--method", required=True, choices=METHODS)
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    p.add_argument("--out", required=True)
    p.add_argument("--surrogate", default="GCN", choices=ARCHS[:3])
    p.add_argument("--n-steps", type=int, default=N_STEP_LARGE)
    p.add_argument("--poison-rate", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=0.025)
    p.add_argument("--pgd-steps", type=int, default=4)
    p.add_argument("--temperature", type=float, default=5.0, help="softmax sampling temperature")
    p.add_argument("--feature-policy", default="node-labels", choices=("node-labels", "degree-onehot"))
    p.add_argument("--exact", action="store_true", help="recompute gradients after every flip")
    p.add_argument("--final-pass", action="store_true",
                   help="re-perturb every cloaked graph once with the final surrogate")
    _add_train_args(p)
    p.set_defaults(func=cmd_cloak)

    p = sub.add_parser("train", help="train a classifier on a TU dataset directory")
    p.add_argument("--dataset", required=True, help="directory with one TU dataset")
    p.add_argument("--arch", default="GCN", choices=ARCHS)
    p.add_argument("--out", required=True, help="checkpoint path (.npz)")
    p.add_argument("--sm-temperature", type=float, default=1.0, help="soft median temperature (GCN-SM)")
    p.add_argument("--adversarial", choices=("structure", "features"),
                   help="adversarial training in the given space")
    p.add_argument("--beta", type=float, default=DEFAULT_BETA)
    _add_train_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a checkpoint")
    p.add_argument("--model", required=True)
    p.add_argument("--dataset", required=True)
    p.add_argument("--split", default="test", choices=("train", "val", "test"))
    p.add_argument("--seed", type=int, default=0, help="split seed when the dataset has no split")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="run the experiments of a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override output_dir")
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"graphcloak: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
