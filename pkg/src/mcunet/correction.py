"""Correction module: residual refinement, overall-confidence blending, data consistency."""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ValidationError
from .gsam import _check_unit_interval, convex_blend
from .mri_ops import data_consistency, expand, fft2c, ifft2c, reduce
from .sparse import inverse_softplus
from .unet import UNet


def oc_blend(x_a: Tensor, x_r: Tensor, m_o: Tensor) -> Tensor:
    """``x_a * M_O + x_r * (1 - M_O)``."""
    if x_a.shape != x_r.shape:
        raise ValidationError(f"shape mismatch {tuple(x_a.shape)} vs {tuple(x_r.shape)}")
    _check_unit_interval(m_o, "M_O")
    return convex_blend(x_a, x_r, m_o)


def dc_project(x_o: Tensor, y: Tensor, csm: Tensor, mask: Tensor, mu) -> Tensor:
    """Image -> coil k-space -> data consistency -> image."""
    k = fft2c(expand(x_o, csm))
    return reduce(ifft2c(data_consistency(k, y, mask, mu)), csm)


class Correction(nn.Module):
    """Residual U-Net refinement plus a learned data-consistency weight.

    The last convolution of the U-Net starts at zero, so a fresh module maps
    ``x_a`` to itself.
    """

    def __init__(self, chans: Sequence[int] = (4, 8, 16, 32), mu_init: float = 1.0):
        super().__init__()
        self.unet = UNet(2, 2, chans).zero_final_()
        self.mu_raw = nn.Parameter(torch.tensor(inverse_softplus(mu_init)))

    @property
    def mu(self) -> Tensor:
        return F.softplus(self.mu_raw)

    def correct(self, x_a: Tensor) -> Tensor:
        return x_a + self.unet(x_a)

    def forward(self, x_a: Tensor) -> Tensor:
        return self.correct(x_a)

