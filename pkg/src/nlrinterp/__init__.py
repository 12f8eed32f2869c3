"""Weighted-encoding image interpolation with nonlocal linear regression."""

from .bicubic import bicubic_upscale
from .image import DimensionError, crop_to_multiple, downsample, read_image, write_image
from .metrics import psnr, ssim
from .solver import SolverAbort, SolverConfig, interpolate

__version__ = "0.1.0"

__all__ = [
    "DimensionError", "SolverAbort", "SolverConfig", "bicubic_upscale",
    "crop_to_multiple", "downsample", "interpolate", "psnr", "read_image",
    "ssim", "write_image",
]
