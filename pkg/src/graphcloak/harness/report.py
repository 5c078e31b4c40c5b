"""CSV / JSON report writers with per-group mean and sample standard deviation."""
from __future__ import annotations

import csv
import json
import statistics
from pathlib import Path

from .experiments import SCHEMA_VERSION, CellResult, CloakReport

KEY_FIELDS = ("dataset", "method", "source", "victim", "poison_rate")
NUMERIC_FIELDS = ("clean_acc", "cloaked_acc", "drop", "delta_edges_pct", "delta_density_pct",
                  "seconds_cloak", "seconds_train")
CSV_FIELDS = ("kind",) + KEY_FIELDS + ("seed",) + NUMERIC_FIELDS + ("n", "budget_hist",
                                                                     "cloaked_path", "model_path")


def _sort_key(r: CellResult):
    return (r.dataset, r.method, r.source, r.victim, r.poison_rate, r.seed)


def aggregate(report: CloakReport) -> list[dict]:
    """Mean and sample std (n - 1) of every numeric field per key group; std needs n >= 2."""
    groups: dict[tuple, list[CellResult]] = {}
    for r in sorted(report.rows, key=_sort_key):
        groups.setdefault(tuple(getattr(r, k) for k in KEY_FIELDS), []).append(r)
    out = []
    for key, rows in groups.items():
        base = dict(zip(KEY_FIELDS, key))
        mean = {"kind": "mean", **base, "n": len(rows)}
        mean.update({f: statistics.fmean(getattr(r, f) for r in rows) for f in NUMERIC_FIELDS})
        out.append(mean)
        if len(rows) > 1:
            std = {"kind": "std", **base, "n": len(rows)}
            std.update({f: statistics.stdev([getattr(r, f) for r in rows]) for f in NUMERIC_FIELDS})
            out.append(std)
    return out


def run_rows(report: CloakReport) -> list[dict]:
    return [{"kind": "run", **r.as_dict()} for r in sorted(report.rows, key=_sort_key)]


def _cell(v):
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    if isinstance(v, float):
        return repr(v)
    return "" if v is None else str(v)


def write_csv(report: CloakReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore", lineterminator="\r\n")
        w.writeheader()
        for row in run_rows(report) + aggregate(report):
            w.writerow({k: _cell(row.get(k)) for k in CSV_FIELDS})
    return path


def write_json(report: CloakReport, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": report.config_hash,
        "rows": run_rows(report),
        "aggregates": aggregate(report),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def emit_report(report: CloakReport, out_dir: str | Path, formats=("csv", "json"),
                stem: str = "report") -> list[Path]:
    out = Path(out_dir)
    written = []
    for fmt in formats:
        if fmt == "csv":
            written.append(write_csv(report, out / f"{stem}.csv"))
        elif fmt == "json":
            written.append(write_json(report, out / f"{stem}.json"))
        else:
            raise ValueError(f"unknown report format {fmt!r}")
    return written
