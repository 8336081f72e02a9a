"""Sparsity-driven subnetwork: a gradient step followed by learned shrinkage."""

from __future__ import annotations

import math

import torch
import torch.nn.functional as F
from torch import Tensor, nn

from .errors import ValidationError
from .mri_ops import adjoint_A, forward_A


def inverse_softplus(v: float) -> float:
    return v + math.log(-math.expm1(-v))


def gradient_step(x: Tensor, y: Tensor, csm: Tensor, mask: Tensor, alpha) -> Tensor:
    """``x - alpha * A^H (A x - y)``."""
    return x - alpha * adjoint_A(forward_A(x, csm, mask) - y, csm, mask)


def soft_threshold(v: Tensor, lam) -> Tensor:
    """Elementwise ``sign(v) * max(|v| - lam, 0)``."""
    if isinstance(lam, Tensor):
        if bool((lam < 0).any()):
            raise ValidationError("shrinkage threshold must be nonnegative")
    elif lam < 0:
        raise ValidationError(f"shrinkage threshold must be nonnegative, got {lam}")
    return torch.sign(v) * F.relu(v.abs() - lam)


class SparseSubnet(nn.Module):
    """Learned ISTA block.

    ``G`` lifts the 2-channel image to 32 feature maps, the features are
    soft-thresholded, and ``G_tilde`` maps back. Both transforms are two 3x3
    convolutions separated by a ReLU.
    """

    def __init__(self, features: int = 32, alpha_init: float = 0.5, lambda_init: float = 1e-3):
        super().__init__()
        self.alpha = nn.Parameter(torch.tensor(float(alpha_init)))
        self.lambda_raw = nn.Parameter(torch.tensor(inverse_softplus(lambda_init)))
        self.G = nn.Sequential(
            nn.Conv2d(2, features, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(features, features, 3, padding=1),
        )
        self.G_tilde = nn.Sequential(
            nn.Conv2d(features, features, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(features, 2, 3, padding=1),
        )

    @property
    def lambda_1(self) -> Tensor:
        return F.softplus(self.lambda_raw)

    def forward(self, x: Tensor, y: Tensor, csm: Tensor, mask: Tensor) -> tuple[Tensor, Tensor]:
        """Returns ``(x_s, r_s)``; ``r_s`` feeds the symmetry penalty."""
        r = gradient_step(x, y, csm, mask, self.alpha)
        x_s = self.G_tilde(soft_threshold(self.G(r), self.lambda_1))
        return x_s, r

    def symmetry_penalty(self, r: Tensor) -> Tensor:
        return symmetry_penalty(r, self.G, self.G_tilde)


def symmetry_penalty(r: Tensor, G: nn.Module, G_tilde: nn.Module) -> Tensor:
    """Squared norm ``||G_tilde(G(r)) - r||^2``, summed per sample and averaged over the batch."""
    d = G_tilde(G(r)) - r
    return d.pow(2).flatten(1).sum(dim=1).mean()
