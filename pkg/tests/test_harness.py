import csv
import json
from dataclasses import replace
from pathlib import Path

import pytest

from graphcloak.engine import TrainConfig
from graphcloak.graph import GraphDataset, dataset_stats
from graphcloak.harness import (CellResult, CloakReport, ConfigError, DEFAULT_SEEDS, ExperimentConfig,
                                ExperimentError, aggregate, emit_report, load_config, run_main_experiment,
                                run_poison_rate_sweep, run_transferability, write_csv)
from graphcloak.tu import find_dataset_name, load_tu_dataset, write_tu_dataset

from helpers import synthetic_dataset

TINY = TrainConfig(max_epochs=6, batch_size=8, early_stop_patience=3)


@pytest.fixture(scope="module")
def data_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    ds = synthetic_dataset(count=24, name="SYN")
    write_tu_dataset(_unsplit(ds), root / "SYN")
    return root


def _unsplit(ds):
    # without a shipped split each seed draws its own
    return GraphDataset(ds.graphs, ds.class_count, ds.feature_dim, ds.name)


def _cfg(root, out, **kw):
    base = dict(dataset="SYN", data_root=str(root), methods=["SubInj"], victims=["GCN"], seeds=[0, 1],
                n_steps=4, train=TINY, output_dir=str(out))
    base.update(kw)
    return ExperimentConfig(**base)


# config

def test_config_defaults_and_validation(tmp_path):
    cfg = ExperimentConfig("MUTAG")
    assert tuple(cfg.seeds) == DEFAULT_SEEDS == (0, 402, 6178)
    with pytest.raises(ConfigError):
        ExperimentConfig("MUTAG", seeds=[])
    with pytest.raises(ConfigError):
        ExperimentConfig("MUTAG", poison_rates=[])
    with pytest.raises(ConfigError):
        ExperimentConfig("MUTAG", methods=["Bogus"])


def test_config_hash_tracks_semantic_fields_only():
    a = ExperimentConfig("MUTAG")
    assert a.config_hash() == replace(a, output_dir="elsewhere").config_hash()
    assert a.config_hash() == replace(a, data_root="/x").config_hash()
    for change in (dict(beta=0.1), dict(seeds=[1]), dict(methods=["EMinS"]), dict(n_steps=7),
                   dict(train=TrainConfig(lr=0.5)), dict(victims=["GIN"]), dict(dataset="PROTEINS")):
        assert replace(a, **change).config_hash() != a.config_hash()


def test_config_file_round_trip(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("dataset: MUTAG\nmethods: [SubInj, EMinS]\nseeds: [0]\ntrain:\n  max_epochs: 5\n"
                 "pgd:\n  alpha: 0.05\n")
    cfg = load_config(p)
    assert cfg.methods == ["SubInj", "EMinS"] and cfg.train.max_epochs == 5 and cfg.pgd.alpha == 0.05
    j = tmp_path / "c.json"
    j.write_text(json.dumps(cfg.to_dict()))
    assert load_config(j).config_hash() == cfg.config_hash()
    bad = tmp_path / "bad.yaml"
    bad.write_text("dataset: MUTAG\nwhatever: 1\n")
    with pytest.raises(ConfigError, match="unknown"):
        load_config(bad)


# experiments

def test_nothing_to_run(data_root, tmp_path):
    with pytest.raises(ExperimentError, match="nothing to run"):
        run_main_experiment(_cfg(data_root, tmp_path, methods=[]))


def test_missing_dataset_reports_context(tmp_path):
    cfg = ExperimentConfig("NOPE", data_root=str(tmp_path), output_dir=str(tmp_path / "o"), train=TINY)
    with pytest.raises(ExperimentError, match="cannot load dataset 'NOPE'"):
        run_main_experiment(cfg)


@pytest.fixture(scope="module")
def main_report(data_root, tmp_path_factory):
    out = tmp_path_factory.mktemp("out")
    cfg = _cfg(data_root, out, methods=["Clean", "SubInj", "EMinS", "Random"])
    return cfg, run_main_experiment(cfg)


def test_report_invariants(main_report):
    cfg, report = main_report
    assert len(report.rows) == 4 * 2
    for r in report.rows:
        assert r.drop == r.clean_acc - r.cloaked_acc
        if r.method == "Clean":
            continue
        assert Path(r.cloaked_path).is_dir() and Path(r.model_path).is_file()
        cloaked = load_tu_dataset(r.cloaked_path, find_dataset_name(r.cloaked_path))
        original = load_tu_dataset(cfg.data_root, "SYN")
        tr = cloaked.split.train
        s = dataset_stats(cloaked.subset(tr), original.subset(tr))
        assert s.delta_edges_pct == r.delta_edges_pct
        assert s.delta_density_pct == r.delta_density_pct


def test_clean_accuracy_shared_across_methods(main_report):
    _, report = main_report
    for seed in (0, 1):
        vals = {r.clean_acc for r in report.rows if r.seed == seed}
        assert len(vals) == 1


def test_rerun_identical_modulo_timing(main_report):
    cfg, report = main_report
    again = run_main_experiment(cfg)
    strip = lambda rows: [{k: v for k, v in r.as_dict().items() if not k.startswith("seconds")} for r in rows]
    assert strip(report.rows) == strip(again.rows)


def test_poison_rate_endpoints(data_root, tmp_path):
    cfg = _cfg(data_root, tmp_path, methods=["Random"], seeds=[0])
    sweep = run_poison_rate_sweep(cfg, [0.0, 1.0])
    zero = [r for r in sweep.rows if r.poison_rate == 0.0][0]
    one = [r for r in sweep.rows if r.poison_rate == 1.0][0]
    assert zero.cloaked_acc == zero.clean_acc
    main = run_main_experiment(cfg)
    assert main.rows[0].cloaked_acc == one.cloaked_acc
    with pytest.raises(ExperimentError):
        run_poison_rate_sweep(cfg, [1.2])


def test_transferability_matrix(data_root, tmp_path):
    cfg = _cfg(data_root, tmp_path, methods=["EMinS"], seeds=[0])
    rep = run_transferability(cfg, ["GCN", "SAGE"], ["GCN", "GIN", "SAGE"])
    m = rep.matrix("EMinS")
    assert len(m) == 2 and all(len(row) == 3 for row in m.values())
    main = run_main_experiment(replace(cfg, victims=["GCN"], surrogate="GCN"))
    assert m["GCN"]["GCN"] == main.rows[0].drop
    with pytest.raises(ExperimentError, match="surrogate"):
        run_transferability(replace(cfg, methods=["SubInj"]), ["GCN"], ["GCN"])


def test_defended_victims(data_root, tmp_path):
    cfg = _cfg(data_root, tmp_path, methods=["EMinF"], seeds=[0], victims=["GCN+AT", "GCN-SM"])
    rep = run_main_experiment(cfg)
    assert [r.victim for r in rep.rows] == ["GCN+AT", "GCN-SM"]


# reports

def _row(seed, clean, cloaked, method="SubInj"):
    return CellResult("D", method, "-", "GCN", seed, 1.0, clean, cloaked, clean - cloaked, 1.0, 2.0)


def test_empty_report_csv_is_header_only(tmp_path):
    path = write_csv(CloakReport("h"), tmp_path / "r.csv")
    lines = path.read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("kind,dataset,method")


def test_aggregate_mean_and_sample_std():
    rep = CloakReport("h", [_row(0, 80.0, 30.0), _row(402, 85.0, 40.0), _row(6178, 90.0, 35.0)])
    mean, std = aggregate(rep)
    assert mean["kind"] == "mean" and mean["n"] == 3
    assert mean["clean_acc"] == pytest.approx(85.0) and mean["cloaked_acc"] == pytest.approx(35.0)
    # sample std of (80, 85, 90) = 5 ; of (50, 45, 55) = 5
    assert std["clean_acc"] == pytest.approx(5.0) and std["drop"] == pytest.approx(5.0)


def test_csv_and_json_agree(tmp_path):
    rep = CloakReport("h", [_row(0, 80.0, 30.0), _row(1, 85.5, 41.25), _row(0, 70.0, 70.0, "Random")])
    csv_path, json_path = emit_report(rep, tmp_path)
    payload = json.loads(json_path.read_text())
    assert payload["schema_version"] == 1 and payload["config_hash"] == "h"
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    from_json = payload["rows"] + payload["aggregates"]
    assert len(rows) == len(from_json)
    for c, j in zip(rows, from_json):
        assert c["kind"] == j["kind"] and c["method"] == j["method"]
        for f in ("clean_acc", "cloaked_acc", "drop", "delta_edges_pct"):
            assert float(c[f]) == j[f]
    # byte-stable
    again = emit_report(rep, tmp_path / "b")
    assert again[0].read_bytes() == csv_path.read_bytes()


def test_unwritable_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        emit_report(CloakReport("h"), blocker / "sub")
    with pytest.raises(ValueError):
        emit_report(CloakReport("h"), tmp_path, formats=("xml",))
