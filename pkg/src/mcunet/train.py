"""Training loop and evaluation."""

from __future__ import annotations

import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .checkpoint import load_checkpoint, save_checkpoint
from .errors import ValidationError
from .losses import LossWeights, composite_loss
from .metrics import SSIM_WINDOW, magnitude, psnr, ssim
from .model import MCUNet
from .mri_ops import adjoint_A
from .simdata import to_tensors

logger = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 10
    learning_rate: float = 1e-3
    batch_size: int = 1
    seed: int = 0
    checkpoint_every: int = 1
    max_steps: Optional[int] = None
    num_threads: int = 1
    dtype: str = "float32"

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.checkpoint_every < 1 or self.num_threads < 1:
            raise ValidationError("epochs, batch_size, checkpoint_every and num_threads must be positive")
        if self.learning_rate < 0:
            raise ValidationError("learning_rate must be nonnegative")
        if self.max_steps is not None and self.max_steps < 1:
            raise ValidationError("max_steps must be positive")
        if self.dtype not in ("float32", "float64"):
            raise ValidationError("dtype must be float32 or float64")

    @property
    def torch_dtype(self) -> torch.dtype:
        return torch.float64 if self.dtype == "float64" else torch.float32


@dataclass
class TrainResult:
    step_losses: list = field(default_factory=list)
    records: list = field(default_factory=list)
    best_psnr: float = -math.inf
    best_checkpoint: Optional[Path] = None
    last_checkpoint: Optional[Path] = None


def make_optimizer(params, lr: float) -> torch.optim.Optimizer:
    return torch.optim.Adam(params, lr=lr)


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    """Slice order for one epoch; a pure function of ``(seed, epoch)``."""
    return np.random.default_rng([int(seed), int(epoch)]).permutation(n)


def zero_filled(data: dict, index: int) -> np.ndarray:
    _, y, csm, mask = to_tensors(data, index, torch.float64)
    return magnitude(adjoint_A(y, csm, mask))[0].numpy()


def slice_metrics(recon_mag: np.ndarray, ref_mag: np.ndarray) -> dict:
    rng = float(ref_mag.max())
    out = {"psnr": psnr(recon_mag, ref_mag, rng), "ssim": None}
    if min(ref_mag.shape) >= SSIM_WINDOW:
        out["ssim"] = ssim(recon_mag, ref_mag, rng)
    return out


@torch.no_grad()
def reconstruct(model: MCUNet, data: dict, index: int) -> np.ndarray:
    """Complex reconstruction of one slice as a 2-channel ``(2, H, W)`` array."""
    dtype = next(model.parameters()).dtype
    _, y, csm, mask = to_tensors(data, index, dtype)
    return model(y, csm, mask).x[0].double().numpy()


@torch.no_grad()
def evaluate(model: MCUNet, data: dict, indices=None) -> list:
    """Per-slice PSNR/SSIM of the model and of the zero-filled baseline."""
    model.eval()
    n = data["xgt"].shape[0]
    records = []
    for i in range(n) if indices is None else indices:
        ref = np.abs(data["xgt"][i].astype(np.complex128))
        rec = reconstruct(model, data, i)
        rec_mag = np.sqrt(rec[0] ** 2 + rec[1] ** 2)
        zf = zero_filled(data, i)
        m = slice_metrics(rec_mag, ref)
        z = slice_metrics(zf, ref)
        records.append({"slice": int(i), "psnr": m["psnr"], "ssim": m["ssim"], "zf_psnr": z["psnr"], "zf_ssim": z["ssim"]})
    model.train()
    return records


def summarize(records: list) -> dict:
    out = {}
    for key in ("psnr", "ssim", "zf_psnr", "zf_ssim"):
        vals = np.array([r[key] for r in records if r.get(key) is not None], dtype=np.float64)
        finite = vals[np.isfinite(vals)]
        if vals.size == 0:
            out[key] = {"mean": None, "std": None}
        elif finite.size < vals.size:
            out[key] = {"mean": math.inf, "std": None}
        else:
            out[key] = {"mean": float(finite.mean()), "std": float(finite.std())}
    return out


def _append_jsonl(path: Optional[Path], record: dict) -> None:
    if path is None:
        return
    with open(path, "a") as fh:
        fh.write(json.dumps(record) + "\n")


def train(
    model: MCUNet,
    train_data: dict,
    config: TrainConfig,
    weights: LossWeights,
    val_data: Optional[dict] = None,
    out_dir=None,
    resume_from=None,
) -> TrainResult:
    """Optimize ``model`` with Adam on the composite loss.

    Validation runs after every epoch on ``val_data`` (or the training data
    when none is given). With ``out_dir`` set, ``last`` and ``best``
    checkpoints are written there together with a ``metrics.jsonl`` log.
    """
    n = train_data["xgt"].shape[0]
    if n == 0:
        raise ValidationError("training set is empty")
    if len(weights.gamma1) != model.config.K:
        raise ValidationError(f"{len(weights.gamma1)} loss weights for K={model.config.K}")
    torch.set_num_threads(config.num_threads)
    dtype = config.torch_dtype
    model.to(dtype)
    val_data = train_data if val_data is None else val_data
    out = Path(out_dir) if out_dir is not None else None
    log_path = None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "metrics.jsonl"

    optimizer = make_optimizer(model.parameters(), config.learning_rate)
    start_epoch, step = 0, 0
    result = TrainResult()
    if resume_from is not None:
        restored, saved_opt, manifest = load_checkpoint(resume_from, lambda p: make_optimizer(p, config.learning_rate), dtype)
        model.load_state_dict(restored.state_dict())
        # optimizer state is keyed by parameter position, so it transfers as is
        optimizer.load_state_dict(saved_opt.state_dict())
        ts = manifest["train_state"]
        start_epoch, step = ts["epoch"] + 1, ts["step"]
        result.best_psnr = ts.get("best_psnr", -math.inf)

    model.train()
    t0 = time.perf_counter()
    done = False
    for epoch in range(start_epoch, config.epochs):
        order = epoch_order(config.seed, epoch, n)
        epoch_losses = []
        for b in range(0, n, config.batch_size):
            idx = [int(i) for i in order[b : b + config.batch_size]]
            x_g, y, csm, mask = to_tensors(train_data, idx, dtype)
            out_fwd = model(y, csm, mask)
            terms = composite_loss(out_fwd.intermediates, x_g, model.symmetry_terms(out_fwd.r_s), weights)
            optimizer.zero_grad(set_to_none=True)
            terms.total.backward()
            optimizer.step()
            step += 1
            loss = float(terms.total.detach())
            epoch_losses.append(loss)
            result.step_losses.append(loss)
            if config.max_steps is not None and step >= config.max_steps:
                done = True
                break

        recs = evaluate(model, val_data)
        summ = summarize(recs)
        record = {
            "epoch": epoch,
            "step": step,
            "loss": float(np.mean(epoch_losses)),
            "loss_terms": terms.as_floats(),
            "psnr": summ["psnr"]["mean"],
            "ssim": summ["ssim"]["mean"],
            "zf_psnr": summ["zf_psnr"]["mean"],
            "wall_time": time.perf_counter() - t0,
        }
        result.records.append(record)
        _append_jsonl(log_path, record)
        logger.info("epoch %d step %d loss %.5g psnr %.3f", epoch, step, record["loss"], record["psnr"])

        improved = record["psnr"] > result.best_psnr
        if improved:
            result.best_psnr = record["psnr"]
        if out is not None:
            state = {"epoch": epoch, "step": step, "best_psnr": result.best_psnr, "seed": config.seed}
            if improved:
                result.best_checkpoint = save_checkpoint(out / "best", model, optimizer, state)
            if (epoch + 1) % config.checkpoint_every == 0 or done or epoch == config.epochs - 1:
                result.last_checkpoint = save_checkpoint(out / "last", model, optimizer, state)
        if done:
            break
    return result

