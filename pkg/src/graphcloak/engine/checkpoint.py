"""Model checkpoints.

Layout (format version 1): a NumPy ``.npz`` archive holding

* ``__header__``: a 0-d unicode array with a JSON object
  ``{"format_version", "arch", "in_dim", "num_classes", "hidden", "num_layers",
  "dropout", "temperature", "param_order", "shapes"}``;
* one float64 C-order (row-major) array per parameter, keyed by its name.

``temperature`` is only meaningful for the soft-median GCN (arch ``GCN-SM``).
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .model import GnnModel

FORMAT_VERSION = 1


def header(model: GnnModel) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "arch": model.arch,
        "in_dim": model.in_dim,
        "num_classes": model.num_classes,
        "hidden": model.hidden,
        "num_layers": model.num_layers,
        "dropout": model.dropout,
        "temperature": model.temperature,
        "param_order": list(model.params),
        "shapes": {k: list(v.shape) for k, v in model.params.items()},
    }


def save_checkpoint(model: GnnModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {k: np.ascontiguousarray(v, dtype=np.float64) for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, __header__=np.array(json.dumps(header(model), sort_keys=True)), **arrays)
    return path


def load_checkpoint(path: str | Path) -> GnnModel:
    with np.load(Path(path), allow_pickle=False) as data:
        head = json.loads(str(data["__header__"]))
        if head.get("format_version") != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {head.get('format_version')}")
        params = {k: np.array(data[k], dtype=np.float64) for k in head["param_order"]}
    for k, shape in head["shapes"].items():
        if list(params[k].shape) != shape:
            raise ValueError(f"parameter {k} has shape {params[k].shape}, header says {shape}")
    return GnnModel(head["arch"], head["in_dim"], head["num_classes"], head["hidden"],
                    head["num_layers"], head["dropout"], head["temperature"], params)


def params_digest(model: GnnModel) -> str:
    h = hashlib.sha256(json.dumps(header(model), sort_keys=True).encode())
    for k, v in model.params.items():
        h.update(k.encode())
        h.update(np.ascontiguousarray(v, dtype=np.float64).tobytes())
    return h.hexdigest()
