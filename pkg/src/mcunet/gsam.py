"""Gated spatial attention: the recurrent GCFF cell and confidence-map fusion."""

from __future__ import annotations

from typing import NamedTuple

import torch
from torch import Tensor, nn

from .errors import ValidationError


class CocaState(NamedTuple):
    """Recurrent state carried between cascades; both tensors are ``(B, hidden, H, W)``."""

    c: Tensor
    h: Tensor


def _check_unit_interval(m: Tensor, name: str) -> None:
    if bool(((m < 0) | (m > 1)).any()):
        raise ValidationError(f"{name} must lie in [0, 1]")


def convex_blend(a: Tensor, b: Tensor, weight: Tensor) -> Tensor:
    """``a * weight + b * (1 - weight)`` with the weight broadcast over both channels."""
    v = a * weight + b * (1 - weight)
    # rounding may leave the segment [min(a, b), max(a, b)] by an ulp
    return torch.minimum(torch.maximum(v, torch.minimum(a, b)), torch.maximum(a, b))


def rc_weight(x_s: Tensor, x_l: Tensor, m_r: Tensor) -> Tensor:
    """Relative-confidence fusion of the two subnetwork outputs.

    ``m_r`` has shape ``(B, 1, H, W)`` and multiplies the real and imaginary
    channels alike.
    """
    if x_s.shape != x_l.shape:
        raise ValidationError(f"shape mismatch {tuple(x_s.shape)} vs {tuple(x_l.shape)}")
    _check_unit_interval(m_r, "M_R")
    return convex_blend(x_s, x_l, m_r)


def split_confidence(m: Tensor) -> tuple[Tensor, Tensor]:
    """Channel 0 is the relative confidence map, channel 1 the overall one."""
    return m[:, 0:1], m[:, 1:2]


class InitCell(nn.Module):
    """Initial cell state ``c0`` from the zero-filled image; ``h0`` is zero."""

    def __init__(self, hidden: int = 8):
        super().__init__()
        self.hidden = hidden
        self.conv = nn.Conv2d(2, hidden, 3, padding=1)

    def forward(self, x0: Tensor) -> CocaState:
        c0 = self.conv(x0)
        return CocaState(c0, torch.zeros_like(c0))


class GCFF(nn.Module):
    """Gates-controlled feature filtering cell.

    One step::

        x_in = relu(N_in(concat(x_s, x_l)))
        f, i, o = sigmoid(W_x* x_in + W_h* h + b_*)
        j = tanh(W_xj x_in + W_hj h + b_j)
        g = concat(f * c, i * j)
        M = sigmoid(N_out(g))
        c' = W_g g
        h' = o * tanh(c')

    ``out_maps`` is 2 for the full model (relative and overall confidence)
    and 1 for the ablations that learn only one of them.
    """

    gate_order = ("f", "i", "j", "o")

    def __init__(self, hidden: int = 8, out_maps: int = 2):
        super().__init__()
        self.hidden = hidden
        self.out_maps = out_maps
        self.n_in = nn.Conv2d(4, hidden, 3, padding=1)
        # gate pre-activations stacked in gate_order along the channel axis
        self.w_x = nn.Conv2d(hidden, 4 * hidden, 3, padding=1)
        self.w_h = nn.Conv2d(hidden, 4 * hidden, 3, padding=1, bias=False)
        self.n_out = nn.Conv2d(2 * hidden, out_maps, 3, padding=1)
        self.w_g = nn.Conv2d(2 * hidden, hidden, 1, bias=False)

    def forward(self, x_s: Tensor, x_l: Tensor, state: CocaState) -> tuple[CocaState, Tensor]:
        c, h = state
        expected = (x_s.shape[0], self.hidden, *x_s.shape[-2:])
        if tuple(c.shape) != expected or tuple(h.shape) != expected:
            raise ValidationError(f"state shape {tuple(c.shape)}/{tuple(h.shape)}, expected {expected}")
        x_in = torch.relu(self.n_in(torch.cat((x_s, x_l), dim=1)))
        pre_f, pre_i, pre_j, pre_o = (self.w_x(x_in) + self.w_h(h)).chunk(4, dim=1)
        f = torch.sigmoid(pre_f)
        i = torch.sigmoid(pre_i)
        j = torch.tanh(pre_j)
        g = torch.cat((f * c, i * j), dim=1)
        m = torch.sigmoid(self.n_out(g))
        c_new = self.w_g(g)
        o = torch.sigmoid(pre_o)
        h_new = o * torch.tanh(c_new)
        return CocaState(c_new, h_new), m


class PlainAttention(nn.Module):
    """Gate-free confidence estimator: two convolutions on ``concat(x_s, x_l)``."""

    def __init__(self, hidden: int = 8, out_maps: int = 2):
        super().__init__()
        self.hidden = hidden
        self.out_maps = out_maps
        self.n_in = nn.Conv2d(4, hidden, 3, padding=1)
        self.n_out = nn.Conv2d(hidden, out_maps, 3, padding=1)

    def forward(self, x_s: Tensor, x_l: Tensor) -> Tensor:
        x_in = torch.relu(self.n_in(torch.cat((x_s, x_l), dim=1)))
        return torch.sigmoid(self.n_out(x_in))
