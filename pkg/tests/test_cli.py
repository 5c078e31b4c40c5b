import json

import pytest

from graphcloak.graph import edit_distance
from graphcloak.harness.cli import main
from graphcloak.tu import load_tu_dataset, write_tu_dataset

from helpers import synthetic_dataset

FAST = ["--max-epochs", "4", "--batch-size", "8"]


@pytest.fixture(scope="module")
def root(tmp_path_factory):
    r = tmp_path_factory.mktemp("tu")
    ds = synthetic_dataset(count=20, name="SYN")
    write_tu_dataset(ds, r / "SYN")
    return r


def _json(capsys):
    return json.loads(capsys.readouterr().out.strip().splitlines()[-1])


def test_cloak_train_eval(root, tmp_path, capsys):
    out = tmp_path / "cloaked"
    assert main(["cloak", "--dataset", "SYN", "--root", str(root / "SYN"), "--method", "EMinS",
                 "--out", str(out), "--n-steps", "3", *FAST]) == 0
    info = _json(capsys)
    assert info["method"] == "EMinS" and info["poisoned"] == 16
    manifest = json.loads((out / "SYN_manifest.json").read_text())
    usage = manifest["cloak"]["budget_usage"]
    assert all(u["used"] <= u["budget"] for u in usage)

    orig = load_tu_dataset(root / "SYN", "SYN")
    cloaked = load_tu_dataset(out, "SYN")
    for u in usage:
        assert edit_distance(cloaked[u["index"]], orig[u["index"]]) == u["used"]
    for i in list(cloaked.split.val) + list(cloaked.split.test):
        assert cloaked[int(i)].same_as(orig[int(i)])

    ckpt = tmp_path / "m.npz"
    assert main(["train", "--dataset", str(out), "--arch", "GIN", "--out", str(ckpt), *FAST]) == 0
    trained = _json(capsys)
    assert ckpt.exists() and 0.0 <= trained["test_acc"] <= 1.0

    assert main(["eval", "--model", str(ckpt), "--dataset", str(out)]) == 0
    ev = _json(capsys)
    assert ev["accuracy"] == trained["test_acc"] and ev["graphs"] == 2


def test_train_adversarial_and_soft_median(root, tmp_path, capsys):
    for extra in (["--arch", "GCN", "--adversarial", "features"], ["--arch", "GCN-SM", "--sm-temperature", "0.5"]):
        ckpt = tmp_path / f"{extra[1]}.npz"
        assert main(["train", "--dataset", str(root / "SYN"), "--out", str(ckpt), *extra, *FAST]) == 0
        assert ckpt.exists()
        _json(capsys)


def test_sweep_writes_reports(root, tmp_path, capsys):
    cfg = tmp_path / "exp.yaml"
    cfg.write_text(f"dataset: SYN\ndata_root: {root}\nmethods: [Random, EMinF]\nseeds: [0]\n"
                   f"n_steps: 2\npoison_rates: [0.5, 1.0]\ntransfer_sources: [GCN]\n"
                   f"train:\n  max_epochs: 3\n  batch_size: 8\n")
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "runs")]) == 0
    info = _json(capsys)
    names = sorted(p.rsplit("/", 1)[-1] for p in info["reports"])
    assert names == ["main.csv", "main.json", "poison_rate.csv", "poison_rate.json",
                     "transfer.csv", "transfer.json"]
    main_rows = json.loads((tmp_path / "runs" / "main.json").read_text())["rows"]
    assert {r["method"] for r in main_rows} == {"Random", "EMinF"}
    assert all(r["poison_rate"] == 0.5 for r in main_rows)


def test_errors_exit_nonzero(tmp_path, capsys):
    assert main(["eval", "--model", str(tmp_path / "nope.npz"), "--dataset", str(tmp_path)]) == 1
    assert "error" in capsys.readouterr().err
    bad = tmp_path / "bad.yaml"
    bad.write_text("dataset: X\nseeds: []\n")
    assert main(["sweep", "--config", str(bad)]) == 1
    with pytest.raises(SystemExit):
        main(["cloak", "--dataset", "X", "--method", "Nope", "--out", "o"])
