"""Low-rank-driven subnetwork.

The reweighted projection ``lambda_2 J(Q)^H J(Q) x`` of the classical scheme
(:mod:`mcunet.hankel`) is replaced by ``lambda_2 * unet(x)``, then the same
gradient step is taken.
"""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .mri_ops import adjoint_A, forward_A
from .sparse import inverse_softplus
from .unet import UNet


class LowRankSubnet(nn.Module):
    def __init__(self, chans: Sequence[int] = (16, 32, 64, 128), alpha_init: float = 0.5, lambda_init: float = 1e-2):
        super().__init__()
        self.alpha = nn.Parameter(torch.tensor(float(alpha_init)))
        self.lambda_raw = nn.Parameter(torch.tensor(inverse_softplus(lambda_init)))
        self.unet = UNet(2, 2, chans)

    @property
    def lambda_2(self) -> Tensor:
        return F.softplus(self.lambda_raw)

    def forward(self, x: Tensor, y: Tensor, csm: Tensor, mask: Tensor) -> Tensor:
        r = self.lambda_2 * self.unet(x)
        grad = adjoint_A(forward_A(x, csm, mask) - y, csm, mask)
        return x - self.alpha * (grad + 2 * r)
