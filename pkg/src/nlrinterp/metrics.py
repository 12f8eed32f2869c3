"""Full-reference quality metrics: PSNR and single-scale SSIM."""

import math

import numpy as np
from scipy.ndimage import correlate1d

from .image import DimensionError


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def psnr(a, b, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical images."""
    a, b = _pair(a, b)
    mse = np.mean((a - b) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return g / g.sum()


def ssim_map(a, b, data_range: float = 1.0, k1: float = 0.01, k2: float = 0.03,
             size: int = 11, sigma: float = 1.5) -> np.ndarray:
    """SSIM index at every window position lying fully inside the image."""
    a, b = _pair(a, b)
    if min(a.shape) < size:
        raise DimensionError(f"image {a.shape} smaller than the {size}x{size} window")
    g = gaussian_window(size, sigma)
    half = size // 2

    def blur(img):
        out = correlate1d(correlate1d(img, g, axis=0), g, axis=1)
        return out[half:-half, half:-half]

    c1 = (k1 * data_range) ** 2
    c2 = (k2 * data_range) ** 2
    mu_a, mu_b = blur(a), blur(b)
    var_a = blur(a * a) - mu_a ** 2
    var_b = blur(b * b) - mu_b ** 2
    cov = blur(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    # the index is bounded by 1 in magnitude; rounding can overshoot by an ulp
    return np.clip(num / den, -1.0, 1.0)


def ssim(a, b, data_range: float = 1.0) -> float:
    a, b = _pair(a, b)
    if np.array_equal(a, b):
        if min(a.shape) < 11:
            raise DimensionError(f"image {a.shape} smaller than the 11x11 window")
        return 1.0
    return float(np.mean(ssim_map(a, b, data_range)))
