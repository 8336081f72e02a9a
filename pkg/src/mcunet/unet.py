"""Small U-Net used by the low-rank subnetwork and the correction module."""

from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F
from torch import Tensor, nn


class ConvBlock(nn.Module):
    """Two 3x3 convolutions, each followed by a ReLU."""

    def __init__(self, in_chans: int, out_chans: int):
        super().__init__()
        self.layers = nn.Sequential(
            nn.Conv2d(in_chans, out_chans, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(out_chans, out_chans, 3, padding=1),
            nn.ReLU(),
        )

    def forward(self, x: Tensor) -> Tensor:
        return self.layers(x)


class UNet(nn.Module):
    """U-Net with one 2x max-pool after every encoder stage.

    ``chans`` gives the encoder widths, e.g. ``(16, 32, 64, 128)`` means four
    encoder stages and four pooling layers. The bottleneck keeps the deepest
    width. Decoding uses nearest-neighbour upsampling and skip concatenation;
    a final 1x1 convolution maps back to ``out_chans``.

    Inputs whose height or width is not a multiple of ``2 ** len(chans)`` are
    zero-padded on the bottom/right and cropped back afterwards.
    """

    def __init__(self, in_chans: int = 2, out_chans: int = 2, chans: Sequence[int] = (16, 32, 64, 128)):
        super().__init__()
        self.chans = tuple(int(c) for c in chans)
        self.in_chans = in_chans
        self.out_chans = out_chans
        self.down = nn.ModuleList()
        prev = in_chans
        for c in self.chans:
            self.down.append(ConvBlock(prev, c))
            prev = c
        self.bottleneck = ConvBlock(prev, prev)
        self.up = nn.ModuleList()
        dec_out = list(reversed(self.chans[:-1])) + [self.chans[0]]
        for skip, out in zip(reversed(self.chans), dec_out):
            self.up.append(ConvBlock(prev + skip, out))
            prev = out
        self.final = nn.Conv2d(prev, out_chans, 1)

    @property
    def levels(self) -> int:
        return len(self.chans)

    def zero_final_(self) -> "UNet":
        nn.init.zeros_(self.final.weight)
        nn.init.zeros_(self.final.bias)
        return self

    def forward(self, x: Tensor) -> Tensor:
        h, w = x.shape[-2:]
        m = 2 ** self.levels
        ph, pw = (-h) % m, (-w) % m
        if ph or pw:
            x = F.pad(x, (0, pw, 0, ph))
        skips = []
        for block in self.down:
            x = block(x)
            skips.append(x)
            x = F.max_pool2d(x, 2)
        x = self.bottleneck(x)
        for block, skip in zip(self.up, reversed(skips)):
            x = F.interpolate(x, scale_factor=2, mode="nearest")
            x = block(torch.cat((x, skip), dim=1))
        x = self.final(x)
        return x[..., :h, :w]
