"""Deeply supervised training loss."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .errors import NonFiniteLossError, ValidationError
from .metrics import magnitude, ssim_t


def gamma1_schedule(K: int) -> np.ndarray:
    """Per-cascade weights ``10 ** ((k - K) / (K - 1))`` for ``k = 1..K``."""
    if K < 1:
        raise ValidationError(f"K must be positive, got {K}")
    if K == 1:
        return np.ones(1)
    k = np.arange(1, K + 1)
    return 10.0 ** ((k - K) / (K - 1))


@dataclass
class LossWeights:
    gamma1: Sequence[float]
    gamma2: float = 0.01
    include_ssim: bool = True

    def __post_init__(self):
        g = np.asarray(self.gamma1, dtype=np.float64)
        if g.ndim != 1 or g.size == 0:
            raise ValidationError("gamma1 must be a non-empty sequence")
        if g[-1] != 1.0:
            raise ValidationError("gamma1 must end at 1.0")
        if g.size > 1 and not (np.all(np.diff(g) > 0) or self.final_only):
            raise ValidationError("gamma1 must be strictly increasing")
        if self.gamma2 < 0:
            raise ValidationError("gamma2 must be nonnegative")
        self.gamma1 = g

    @property
    def final_only(self) -> bool:
        g = np.asarray(self.gamma1)
        return g.size > 1 and bool(np.all(g[:-1] == 0))

    @classmethod
    def default(cls, K: int, gamma2: float = 0.01, include_ssim: bool = True, intermediate: bool = True) -> "LossWeights":
        g = gamma1_schedule(K)
        if not intermediate:
            g = np.zeros(K)
            g[-1] = 1.0
        return cls(g, gamma2, include_ssim)


@dataclass
class LossTerms:
    total: Tensor
    mse: list = field(default_factory=list)
    ssim: list = field(default_factory=list)
    sym: list = field(default_factory=list)

    def as_floats(self) -> dict:
        return {
            "total": float(self.total.detach()),
            "mse": [float(v) for v in self.mse],
            "ssim": [float(v) for v in self.ssim],
            "sym": [float(v) for v in self.sym],
        }


def _check(term: str, k: Optional[int], v: Tensor) -> None:
    if not torch.isfinite(v).all():
        raise NonFiniteLossError(term, k, float(v.detach()))


def composite_loss(intermediates: Sequence[Tensor], x_g: Tensor, sym_terms: Sequence[Tensor], weights: LossWeights) -> LossTerms:
    """Sum over cascades of weighted MSE, weighted ``1 - SSIM`` and the symmetry penalty.

    Cascades are numbered from 1 in diagnostics. The SSIM term compares
    magnitude images with the data range set by the ground truth.
    """
    K = len(intermediates)
    if len(sym_terms) != K or len(weights.gamma1) != K:
        raise ValidationError(
            f"length mismatch: {K} intermediates, {len(sym_terms)} symmetry terms, {len(weights.gamma1)} weights"
        )
    ref_mag = magnitude(x_g)
    data_range = ref_mag.detach().amax()
    total = x_g.new_zeros(())
    out = LossTerms(total)
    for k, (x_k, sym, g1) in enumerate(zip(intermediates, sym_terms, weights.gamma1), start=1):
        mse = F.mse_loss(x_k, x_g)
        _check("mse", k, mse)
        out.mse.append(mse.detach())
        total = total + float(g1) * mse
        if weights.include_ssim:
            s = 1 - ssim_t(magnitude(x_k), ref_mag, data_range)
            _check("ssim", k, s)
            out.ssim.append(s.detach())
            total = total + float(g1) * s
        _check("symmetry", k, sym)
        out.sym.append(sym.detach())
        total = total + weights.gamma2 * sym
    _check("total", None, total)
    out.total = total
    return out
