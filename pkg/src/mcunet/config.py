"""Run configuration documents (YAML) and seed derivation.

Precedence, lowest first: built-in defaults, ``--profile``, the ``--config``
file, then individual command-line flags. Unknown keys are rejected at
every level.

One root ``seed`` drives everything: ``SeedSequence(seed).spawn(3)`` yields,
in order, the dataset seed, the model-initialisation seed and the
training-order seed (see :func:`derived_seeds`).
"""

from __future__ import annotations

import copy
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .losses import LossWeights
from .model import ModelConfig
from .simdata import MaskSpec
from .train import TrainConfig

DEFAULTS = {
    "seed": 0,
    "data": {
        "height": 32,
        "width": 32,
        "coils": 4,
        "count": 100,
        "split": [3, 1, 1],
        "noise_sigma": 0.0,
        "mask": {"kind": "cartesian_random", "acceleration": 4.0, "center_lines": None},
    },
    "model": {
        "K": 10,
        "variant": "original",
        "sparse_features": 32,
        "lowrank_chans": [16, 32, 64, 128],
        "hidden": 8,
        "correction_chans": [4, 8, 16, 32],
    },
    "train": {
        "epochs": 10,
        "learning_rate": 1e-3,
        "batch_size": 1,
        "checkpoint_every": 1,
        "max_steps": None,
        "num_threads": 1,
        "dtype": "float32",
    },
    "loss": {"gamma2": 0.01, "include_ssim": True, "intermediate": True},
    "output": {"dataset": "dataset", "run": "run"},
}

PROFILES = {
    "smoke": {
        "data": {"height": 8, "width": 8, "coils": 2, "count": 10},
        "model": {"K": 2},
        "train": {"epochs": 2, "max_steps": 10},
        "loss": {"include_ssim": False},
    },
    "desk": {
        "data": {"height": 32, "width": 32, "coils": 4, "count": 100},
        "model": {"K": 5},
        "train": {"epochs": 10},
    },
}


def _merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        where = f"{path}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise ConfigError(f"config key {where!r} must be a mapping")
            out[key] = _merge(base[key], val, where + ".")
        else:
            out[key] = copy.deepcopy(val)
    return out


def resolve(profile: str | None = None, path=None, overrides: dict | None = None) -> dict:
    """Merge defaults, profile, config file and flag overrides into one document."""
    cfg = copy.deepcopy(DEFAULTS)
    if profile is not None:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; valid: {', '.join(PROFILES)}")
        cfg = _merge(cfg, PROFILES[profile])
    if path is not None:
        text = Path(path).read_text()
        try:
            doc = yaml.safe_load(text) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path} must contain a mapping")
        cfg = _merge(cfg, doc)
    if overrides:
        cfg = _merge(cfg, overrides)
    validate(cfg)
    return cfg


def validate(cfg: dict) -> None:
    model_config(cfg)
    train_config(cfg)
    mask_spec(cfg)
    loss_weights(cfg)
    split = cfg["data"]["split"]
    if len(split) != 3 or min(split) < 0 or sum(split) == 0:
        raise ConfigError("data.split must be three nonnegative integers")
    if cfg["data"]["count"] < 1:
        raise ConfigError("data.count must be positive")


def dump(cfg: dict, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(yaml.safe_dump(cfg, sort_keys=True))
    return path


def derived_seeds(seed: int) -> dict:
    kids = np.random.SeedSequence(int(seed)).spawn(3)
    return {k: int(s.generate_state(1)[0]) for k, s in zip(("data", "init", "order"), kids)}


def model_config(cfg: dict) -> ModelConfig:
    d = cfg["data"]
    try:
        return ModelConfig(**cfg["model"], coils=d["coils"], height=d["height"], width=d["width"])
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def train_config(cfg: dict) -> TrainConfig:
    return TrainConfig(**cfg["train"], seed=derived_seeds(cfg["seed"])["order"])


def mask_spec(cfg: dict) -> MaskSpec:
    m = cfg["data"]["mask"]
    return MaskSpec(m["kind"], float(m["acceleration"]), m["center_lines"], 0)


def loss_weights(cfg: dict) -> LossWeights:
    lw = cfg["loss"]
    return LossWeights.default(cfg["model"]["K"], lw["gamma2"], lw["include_ssim"], lw["intermediate"])
