"""Image-quality metrics on magnitude images."""

from __future__ import annotations

import math

import numpy as np
import torch
import torch.nn.functional as F
from torch import Tensor

from .errors import ValidationError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def magnitude(img: Tensor) -> Tensor:
    """``(..., 2, H, W)`` two-channel image -> ``(..., H, W)`` magnitude."""
    sq = img[..., 0, :, :] ** 2 + img[..., 1, :, :] ** 2
    # keeps the gradient finite at exact zeros
    nz = sq > 0
    return torch.where(nz, torch.sqrt(torch.where(nz, sq, torch.ones_like(sq))), torch.zeros_like(sq))


def psnr(x, ref, data_range: float | None = None) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the images are identical.

    ``data_range`` defaults to the maximum of ``ref``.
    """
    x = np.asarray(x, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if x.shape != ref.shape:
        raise ValidationError(f"shape mismatch {x.shape} vs {ref.shape}")
    if data_range is None:
        data_range = float(ref.max())
    if not data_range > 0:
        raise ValidationError(f"data_range must be positive, got {data_range}")
    mse = float(np.mean((x - ref) ** 2))
    if mse == 0:
        return math.inf
    return 10 * math.log10(data_range**2 / mse)


def _gaussian_window(size: int, sigma: float, dtype, device) -> Tensor:
    t = torch.arange(size, dtype=dtype, device=device) - (size - 1) / 2
    g = torch.exp(-(t**2) / (2 * sigma**2))
    g = g / g.sum()
    return torch.outer(g, g)[None, None]


def ssim_map(x: Tensor, ref: Tensor, data_range) -> Tensor:
    """Local SSIM over every valid 11x11 window; inputs are ``(N, H, W)``."""
    if x.shape[-2] < SSIM_WINDOW or x.shape[-1] < SSIM_WINDOW:
        raise ValidationError(f"images of size {tuple(x.shape[-2:])} are smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    win = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA, x.dtype, x.device)
    a, b = x.unsqueeze(1), ref.unsqueeze(1)
    mu_a, mu_b = F.conv2d(a, win), F.conv2d(b, win)
    s_aa = F.conv2d(a * a, win) - mu_a * mu_a
    s_bb = F.conv2d(b * b, win) - mu_b * mu_b
    s_ab = F.conv2d(a * b, win) - mu_a * mu_b
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * s_ab + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (s_aa + s_bb + c2)
    return (num / den).squeeze(1)


def ssim_t(x: Tensor, ref: Tensor, data_range=None) -> Tensor:
    """Differentiable mean SSIM of magnitude images shaped ``(H, W)`` or ``(N, H, W)``."""
    if x.shape != ref.shape:
        raise ValidationError(f"shape mismatch {tuple(x.shape)} vs {tuple(ref.shape)}")
    if data_range is None:
        data_range = ref.detach().amax()
    if x.dim() == 2:
        x, ref = x[None], ref[None]
    return ssim_map(x.reshape(-1, *x.shape[-2:]), ref.reshape(-1, *ref.shape[-2:]), data_range).mean()


def ssim(x, ref, data_range: float | None = None) -> float:
    x = torch.as_tensor(np.asarray(x, dtype=np.float64))
    ref = torch.as_tensor(np.asarray(ref, dtype=np.float64))
    if data_range is None:
        data_range = float(ref.max())
    return float(ssim_t(x, ref, data_range))
