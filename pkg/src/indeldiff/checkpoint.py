"""Versioned JSON checkpoints.

One document holds the model configuration, the training configuration echo,
dataset statistics (noising marginals, node-count distribution), guide
normalization, optimizer state, the rng state and every parameter tensor as a
flat float64 list.  Python's JSON float formatting round-trips doubles
exactly, so ``load(save(p))`` is bitwise on the numeric arrays.

Checkpoint field list (format_version 1):

* ``format_version``: integer schema version.
* ``model_config``: architecture shapes (see ``ModelConfig.to_dict``).
* ``train_config``: full training-run echo.
* ``dataset_stats``: ``m_nodes``, ``m_edges``, ``p_n``, ``n_max``.
* ``guide_norm``: ``names``, ``mean``, ``std`` (empty when unconditional).
* ``space``: node/edge type label lists.
* ``epoch``: epochs completed.
* ``adam``: ``step`` plus flat ``m``/``v`` moments per parameter.
* ``rng_state``: numpy bit-generator state for exact resumption.
* ``params``: name -> {``shape``, ``data``} for every tensor.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from indeldiff import autodiff as ad
from indeldiff.denoiser import ModelConfig

FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def _array_to_doc(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}


def _array_from_doc(doc: dict) -> np.ndarray:
    return np.asarray(doc["data"], dtype=np.float64).reshape(doc["shape"])


def save_checkpoint(
    path,
    params: dict,
    model_config: ModelConfig,
    train_config: dict,
    dataset_stats: dict,
    guide_norm: dict,
    space: dict,
    epoch: int,
    adam_state: dict | None,
    rng_state: dict | None,
) -> None:
    doc = {
        "format_version": FORMAT_VERSION,
        "model_config": model_config.to_dict(),
        "train_config": train_config,
        "dataset_stats": dataset_stats,
        "guide_norm": guide_norm,
        "space": space,
        "epoch": epoch,
        "adam": (
            None
            if adam_state is None
            else {
                "step": adam_state["step"],
                "m": {k: _array_to_doc(v) for k, v in adam_state["m"].items()},
                "v": {k: _array_to_doc(v) for k, v in adam_state["v"].items()},
            }
        ),
        "rng_state": rng_state,
        "params": {name: _array_to_doc(p.data) for name, p in params.items()},
    }
    Path(path).write_text(json.dumps(doc, sort_keys=True))


def load_checkpoint(path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: not a valid checkpoint: {exc}") from None
    if doc.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {doc.get('format_version')!r}")
    model_config = ModelConfig.from_dict(doc["model_config"])
    params = {}
    for name, entry in doc["params"].items():
        arr = _array_from_doc(entry)
        if not np.all(np.isfinite(arr)):
            raise CheckpointError(f"{path}: parameter {name} contains non-finite entries")
        params[name] = ad.parameter(arr)
    adam = doc.get("adam")
    adam_state = None
    if adam is not None:
        adam_state = {
            "step": adam["step"],
            "m": {k: _array_from_doc(v) for k, v in adam["m"].items()},
            "v": {k: _array_from_doc(v) for k, v in adam["v"].items()},
        }
    return {
        "model_config": model_config,
        "train_config": doc["train_config"],
        "dataset_stats": doc["dataset_stats"],
        "guide_norm": doc["guide_norm"],
        "space": doc["space"],
        "epoch": doc["epoch"],
        "adam": adam_state,
        "rng_state": doc.get("rng_state"),
        "params": params,
    }
