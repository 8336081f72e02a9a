"""Collaborative multi-prior unfolding network for multi-coil MRI reconstruction."""

from .errors import ConfigError, ConvergenceError, NonFiniteLossError, ValidationError
from .flops import count_flops, total_flops
from .losses import LossWeights, composite_loss, gamma1_schedule
from .metrics import psnr, ssim
from .model import VARIANTS, MCUNet, ModelConfig, coca_forward, mcunet_forward, parameter_count
from .mri_ops import adjoint_A, data_consistency, expand, fft2c, forward_A, ifft2c, reduce

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "NonFiniteLossError",
    "ValidationError",
    "count_flops",
    "total_flops",
    "LossWeights",
    "composite_loss",
    "gamma1_schedule",
    "psnr",
    "ssim",
    "VARIANTS",
    "MCUNet",
    "ModelConfig",
    "coca_forward",
    "mcunet_forward",
    "parameter_count",
    "adjoint_A",
    "data_consistency",
    "expand",
    "fft2c",
    "forward_A",
    "ifft2c",
    "reduce",
]
