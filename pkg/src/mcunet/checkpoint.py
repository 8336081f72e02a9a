"""Checkpoint container.

A checkpoint is a directory with two files:

``manifest.json``
    ``format``, ``version``, the model configuration, free-form training
    state, and a ``tensors`` list. Each entry has ``name``, ``dtype`` (numpy
    little-endian code such as ``<f4``), ``shape``, ``offset`` and ``nbytes``.
``tensors.bin``
    The tensors concatenated in manifest order, C-contiguous.

Names are ``model/<parameter name>`` for weights and
``optim/<parameter name>/<field>`` for optimizer state (``exp_avg``,
``exp_avg_sq``, ``step`` for Adam).
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import ValidationError
from .model import MCUNet, ModelConfig

FORMAT_NAME = "mcunet-checkpoint"
FORMAT_VERSION = 1


def _le(dtype: np.dtype) -> str:
    return np.dtype(dtype).newbyteorder("<").str


def save_checkpoint(path, model: MCUNet, optimizer: torch.optim.Optimizer | None = None, train_state: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    names = [n for n, _ in model.named_parameters()]
    tensors = [(f"model/{n}", p.detach().cpu().numpy()) for n, p in model.named_parameters()]
    if optimizer is not None:
        sd = optimizer.state_dict()
        order = [i for g in sd["param_groups"] for i in g["params"]]
        for idx, name in zip(order, names):
            for key, val in sorted(sd["state"].get(idx, {}).items()):
                tensors.append((f"optim/{name}/{key}", torch.as_tensor(val).detach().cpu().numpy()))
        groups = [{k: v for k, v in g.items() if k != "params"} for g in sd["param_groups"]]
    else:
        groups = None

    entries, offset = [], 0
    with open(path / "tensors.bin", "wb") as fh:
        for name, arr in tensors:
            # np.ascontiguousarray would promote 0-d scalars to shape (1,)
            arr = np.array(arr, dtype=_le(arr.dtype), order="C")
            fh.write(arr.tobytes())
            entries.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": offset, "nbytes": arr.nbytes})
            offset += arr.nbytes
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "param_groups": groups,
        "train_state": train_state or {},
        "tensors": entries,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(manifest, {name: ndarray})``."""
    path = Path(path)
    if not (path / "manifest.json").exists():
        raise FileNotFoundError(f"no checkpoint manifest in {path}")
    manifest = json.loads((path / "manifest.json").read_text())
    if manifest.get("format") != FORMAT_NAME or manifest.get("version") != FORMAT_VERSION:
        raise ValidationError(f"{path} is not a version-{FORMAT_VERSION} {FORMAT_NAME}")
    blob = (path / "tensors.bin").read_bytes()
    arrays = {}
    for e in manifest["tensors"]:
        raw = blob[e["offset"] : e["offset"] + e["nbytes"]]
        arrays[e["name"]] = np.frombuffer(raw, dtype=e["dtype"]).reshape(e["shape"]).copy()
    return manifest, arrays


def load_checkpoint(path, optimizer_factory=None, dtype=torch.float32):
    """Rebuild the model (and optionally the optimizer) from a checkpoint.

    ``optimizer_factory(params)`` must construct an optimizer of the same
    kind that was saved. Returns ``(model, optimizer_or_None, manifest)``.
    """
    manifest, arrays = read_checkpoint(path)
    model = MCUNet(ModelConfig.from_dict(manifest["config"])).to(dtype)
    state = {}
    for name, p in model.named_parameters():
        key = f"model/{name}"
        if key not in arrays:
            raise ValidationError(f"checkpoint is missing {key}")
        state[name] = torch.as_tensor(arrays[key]).to(dtype)
    model.load_state_dict(state)
    optimizer = None
    if optimizer_factory is not None:
        optimizer = optimizer_factory(model.parameters())
        sd = optimizer.state_dict()
        names = [n for n, _ in model.named_parameters()]
        order = [i for g in sd["param_groups"] for i in g["params"]]
        opt_state = {}
        for idx, name in zip(order, names):
            fields = {k.rsplit("/", 1)[1]: v for k, v in arrays.items() if k.startswith(f"optim/{name}/")}
            if fields:
                opt_state[idx] = {k: torch.as_tensor(v) for k, v in fields.items()}
        sd["state"] = opt_state
        if manifest.get("param_groups"):
            for g, saved in zip(sd["param_groups"], manifest["param_groups"]):
                # JSON turns tuples such as Adam's betas into lists
                g.update({k: tuple(v) if isinstance(v, list) else v for k, v in saved.items()})
        optimizer.load_state_dict(sd)
    return model, optimizer, manifest


def parameter_total(arrays: dict) -> int:
    return sum(a.size for k, a in arrays.items() if k.startswith("model/"))
