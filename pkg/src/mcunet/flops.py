"""Analytic FLOP counts for the unrolled network.

Counting rules:

* convolution: ``2 * H * W * C_in * C_out * k^2`` (bias adds are ignored)
* 1D FFT of length N: ``5 * N * log2(N)`` per complex line; a 2D FFT of an
  ``H x W`` complex array is ``H`` row FFTs plus ``W`` column FFTs
* any elementwise operation (activation, add, product, pooling read): one
  FLOP per real element it produces

Every term is a pure function of the model configuration and image
geometry, so the total is exactly additive in the number of cascades.
"""

from __future__ import annotations

import math

from .model import ModelConfig


def conv_flops(h: int, w: int, cin: int, cout: int, k: int = 3) -> int:
    return 2 * h * w * cin * cout * k * k


def fft_flops(n: int) -> int:
    return math.ceil(5 * n * math.log2(n)) if n > 1 else 0


def fft2_flops(h: int, w: int) -> int:
    return h * fft_flops(w) + w * fft_flops(h)


def unet_flops(h: int, w: int, cin: int, cout: int, chans) -> int:
    m = 2 ** len(chans)
    h, w = h + (-h) % m, w + (-w) % m
    total, prev = 0, cin
    sizes = []
    for c in chans:
        total += conv_flops(h, w, prev, c) + conv_flops(h, w, c, c) + 2 * h * w * c
        sizes.append((h, w))
        total += h * w * c  # max pool reads
        h, w, prev = h // 2, w // 2, c
    total += 2 * conv_flops(h, w, prev, prev) + 2 * h * w * prev
    dec_out = list(reversed(chans[:-1])) + [chans[0]]
    for skip, out, (hh, ww) in zip(reversed(chans), dec_out, reversed(sizes)):
        total += hh * ww * prev  # upsample
        total += conv_flops(hh, ww, prev + skip, out) + conv_flops(hh, ww, out, out) + 2 * hh * ww * out
        prev = out
    total += conv_flops(*sizes[0], prev, cout, 1)
    return total


def _forward_op(h: int, w: int, coils: int) -> int:
    # expand, FFT, mask
    return coils * (2 * 2 * h * w + fft2_flops(h, w) + 2 * h * w)


def _adjoint_op(h: int, w: int, coils: int) -> int:
    # mask, iFFT, conj product, coil sum
    return coils * (2 * h * w + fft2_flops(h, w) + 2 * 2 * h * w + 2 * h * w)


def _gradient_step(h: int, w: int, coils: int) -> int:
    residual = 2 * coils * h * w
    return _forward_op(h, w, coils) + residual + _adjoint_op(h, w, coils) + 2 * 2 * h * w


def breakdown(config: ModelConfig, image_shape=None, coils=None) -> dict:
    """FLOPs per component for one cascade, plus the once-per-forward terms."""
    h, w = image_shape if image_shape is not None else (config.height, config.width)
    C = coils if coils is not None else config.coils
    hw = h * w
    f, hd = config.sparse_features, config.hidden

    sparse = (
        _gradient_step(h, w, C)
        + conv_flops(h, w, 2, f) + f * hw + conv_flops(h, w, f, f)
        + 3 * f * hw  # soft threshold
        + conv_flops(h, w, f, f) + f * hw + conv_flops(h, w, f, 2)
    )
    lowrank = _gradient_step(h, w, C) + unet_flops(h, w, 2, 2, config.lowrank_chans) + 3 * 2 * hw
    mean = 3 * 2 * hw
    blend = 3 * 2 * hw

    attention = 0
    if config.attention == "gcff":
        attention = (
            conv_flops(h, w, 4, hd) + hd * hw
            + 2 * conv_flops(h, w, hd, 4 * hd) + 4 * hd * hw  # gate pre-activations and their sum
            + 4 * hd * hw  # sigmoid / tanh
            + 2 * hd * hw  # f*c, i*j
            + conv_flops(h, w, 2 * hd, config.n_maps) + config.n_maps * hw
            + conv_flops(h, w, 2 * hd, hd, 1)
            + 2 * hd * hw  # tanh(c), o*tanh(c)
        )
    elif config.attention == "plain":
        attention = conv_flops(h, w, 4, hd) + hd * hw + conv_flops(h, w, hd, config.n_maps) + config.n_maps * hw

    fusion = 0
    v = config.variant
    if v in ("addition", "no_gsam", "no_rc"):
        fusion += mean
    if v in ("original", "no_gates", "no_oc", "no_correction"):
        fusion += blend

    correction = 0
    if config.has_correction:
        dc = _forward_op(h, w, C) - C * 2 * hw + 4 * C * 2 * hw + _adjoint_op(h, w, C) - C * 2 * hw
        correction = unet_flops(h, w, 2, 2, config.correction_chans) + 2 * hw + dc
        if v not in ("no_gsam", "no_oc"):
            correction += blend

    per_coca = sparse + lowrank + attention + fusion + correction
    shared = _adjoint_op(h, w, C)
    if config.attention == "gcff":
        shared += conv_flops(h, w, 2, hd)
    return {
        "sparse": sparse,
        "lowrank": lowrank,
        "attention": attention,
        "fusion": fusion,
        "correction": correction,
        "per_coca": per_coca,
        "shared": shared,
    }


def total_flops(config: ModelConfig, image_shape=None, coils=None) -> int:
    """Total FLOPs of one forward pass."""
    b = breakdown(config, image_shape, coils)
    return b["shared"] + config.K * b["per_coca"]


def count_flops(config: ModelConfig, image_shape=None, coils=None) -> float:
    """Total FLOPs of one forward pass, in GFLOPs."""
    return total_flops(config, image_shape, coils) / 1e9
