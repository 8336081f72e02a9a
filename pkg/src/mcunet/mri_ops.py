"""Multi-coil Cartesian MRI measurement model.

Images travel through the network as real tensors of shape ``(..., 2, H, W)``
(channel 0 real, channel 1 imaginary). Coil sensitivity maps and k-space are
complex tensors of shape ``(..., C, H, W)``. Sampling masks are real ``{0, 1}``
tensors broadcastable to ``(..., H, W)``.

All FFTs are centred (zero frequency in the middle of the array) and
orthonormal, so ``fft2c`` is unitary.
"""

from __future__ import annotations

import torch
from torch import Tensor

from .errors import ValidationError

__all__ = [
    "to_complex",
    "to_channels",
    "fft2c",
    "ifft2c",
    "expand",
    "reduce",
    "forward_A",
    "adjoint_A",
    "data_consistency",
    "dc_twice_closed_form",
]

_DIMS = (-2, -1)


def _check_finite(x: Tensor, name: str) -> None:
    if not torch.isfinite(x).all():
        raise ValidationError(f"{name} contains non-finite entries")


def to_complex(img: Tensor) -> Tensor:
    """``(..., 2, H, W)`` real -> ``(..., H, W)`` complex."""
    if img.is_complex():
        return img
    if img.dim() < 3 or img.shape[-3] != 2:
        raise ValidationError(f"expected a 2-channel image (..., 2, H, W), got {tuple(img.shape)}")
    return torch.complex(img[..., 0, :, :], img[..., 1, :, :])


def to_channels(z: Tensor) -> Tensor:
    """``(..., H, W)`` complex -> ``(..., 2, H, W)`` real."""
    if not z.is_complex():
        raise ValidationError("to_channels expects a complex tensor")
    return torch.stack((z.real, z.imag), dim=-3)


def _fft(z: Tensor, inverse: bool) -> Tensor:
    z = torch.fft.ifftshift(z, dim=_DIMS)
    z = torch.fft.ifftn(z, dim=_DIMS, norm="ortho") if inverse else torch.fft.fftn(z, dim=_DIMS, norm="ortho")
    return torch.fft.fftshift(z, dim=_DIMS)


def fft2c(x: Tensor) -> Tensor:
    """Centred orthonormal 2D DFT over the last two axes.

    Accepts either a complex tensor or a 2-channel real image and returns the
    same representation.
    """
    _check_finite(x, "fft2c input")
    if x.is_complex():
        return _fft(x, inverse=False)
    return to_channels(_fft(to_complex(x), inverse=False))


def ifft2c(x: Tensor) -> Tensor:
    """Inverse of :func:`fft2c`."""
    _check_finite(x, "ifft2c input")
    if x.is_complex():
        return _fft(x, inverse=True)
    return to_channels(_fft(to_complex(x), inverse=True))


def _check_spatial(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape[-2:] != b.shape[-2:]:
        raise ValidationError(f"{what}: spatial shapes differ, {tuple(a.shape[-2:])} vs {tuple(b.shape[-2:])}")


def expand(img: Tensor, csm: Tensor) -> Tensor:
    """Coil images ``S_i * x``; returns complex ``(..., C, H, W)``."""
    x = to_complex(img)
    _check_spatial(x, csm, "expand")
    return csm * x.unsqueeze(-3)


def reduce(coils: Tensor, csm: Tensor) -> Tensor:
    """Coil combination ``sum_i conj(S_i) * x_i``; returns a 2-channel image."""
    if coils.shape[-3:] != csm.shape[-3:]:
        raise ValidationError(f"reduce: coil stack {tuple(coils.shape)} does not match csm {tuple(csm.shape)}")
    return to_channels((csm.conj() * coils).sum(dim=-3))


def _mask(mask: Tensor, ref: Tensor) -> Tensor:
    if mask.shape[-2:] != ref.shape[-2:]:
        raise ValidationError(f"mask shape {tuple(mask.shape)} does not match k-space {tuple(ref.shape)}")
    if not bool((mask != 0).any()):
        raise ValidationError("sampling mask has no sampled positions")
    # coil axis sits at -3 in k-space
    return mask.to(ref.real.dtype).unsqueeze(-3)


def forward_A(img: Tensor, csm: Tensor, mask: Tensor) -> Tensor:
    """Undersampled multi-coil k-space ``P F E x``."""
    k = fft2c(expand(img, csm))
    return k * _mask(mask, k)


def adjoint_A(ksp: Tensor, csm: Tensor, mask: Tensor) -> Tensor:
    """Hermitian adjoint ``E^H F^-1 P y``; returns a 2-channel image."""
    if ksp.shape[-3:] != csm.shape[-3:]:
        raise ValidationError(f"adjoint_A: k-space {tuple(ksp.shape)} does not match csm {tuple(csm.shape)}")
    return reduce(ifft2c(ksp * _mask(mask, ksp)), csm)


def _as_mu(mu, like: Tensor) -> Tensor:
    if isinstance(mu, Tensor):
        if bool((mu < 0).any()):
            raise ValidationError(f"mu must be nonnegative, got {mu.detach().min().item()}")
        return mu.to(like.real.dtype)
    if mu < 0:
        raise ValidationError(f"mu must be nonnegative, got {mu}")
    return torch.as_tensor(float(mu), dtype=like.real.dtype)


def data_consistency(k_recon: Tensor, k_meas: Tensor, mask: Tensor, mu) -> Tensor:
    """Blend reconstructed and measured k-space on the sampled set.

    Unsampled positions keep ``k_recon``; sampled positions become
    ``(k_recon + mu * k_meas) / (1 + mu)``.
    """
    if k_recon.shape != k_meas.shape:
        raise ValidationError(f"k-space shapes differ: {tuple(k_recon.shape)} vs {tuple(k_meas.shape)}")
    m = _as_mu(mu, k_recon)
    sampled = _mask(mask, k_recon) > 0
    blended = (k_recon + m * k_meas) / (1 + m)
    return torch.where(sampled, blended, k_recon)


def dc_twice_closed_form(k_recon: Tensor, k_meas: Tensor, mask: Tensor, mu) -> Tensor:
    """Value of applying :func:`data_consistency` twice with the same ``(y, mu)``.

    On sampled positions this is ``(k + mu (2 + mu) y) / (1 + mu)^2``.
    """
    m = _as_mu(mu, k_recon)
    sampled = _mask(mask, k_recon) > 0
    twice = (k_recon + m * (2 + m) * k_meas) / (1 + m) ** 2
    return torch.where(sampled, twice, k_recon)
