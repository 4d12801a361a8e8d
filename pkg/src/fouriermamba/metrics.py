"""PSNR and SSIM on the luma channel of limited-range BT.601 YCbCr."""

from __future__ import annotations

import math

import numpy as np

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def rgb_to_y(img: np.ndarray) -> np.ndarray:
    """Y in [16/255, 235/255] from RGB in [0, 1]."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape[-1] != 3:
        raise ValueError(f"expected RGB images, got trailing axis {img.shape[-1]}")
    return 16.0 / 255.0 + (65.481 * img[..., 0] + 128.553 * img[..., 1] + 24.966 * img[..., 2]) / 255.0


def _check(a, b):
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    return a, b


def psnr_y(a: np.ndarray, b: np.ndarray) -> float:
    """PSNR (dB, peak 1) between Y channels; ``math.inf`` when they coincide."""
    a, b = _check(a, b)
    mse = float(np.mean((rgb_to_y(a) - rgb_to_y(b)) ** 2))
    if mse == 0.0:
        return math.inf
    return -10.0 * math.log10(mse)


def _gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter_valid(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    rows = np.lib.stride_tricks.sliding_window_view(img, k, axis=-2) @ g
    return np.lib.stride_tricks.sliding_window_view(rows, k, axis=-1) @ g


def ssim_y(a: np.ndarray, b: np.ndarray) -> float:
    """Mean SSIM over valid 11x11 Gaussian windows (sigma 1.5) of the Y channels."""
    a, b = _check(a, b)
    y1, y2 = rgb_to_y(a), rgb_to_y(b)
    if min(y1.shape[-2:]) < SSIM_WINDOW:
        raise ValueError(f"ssim_y needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    g = _gaussian_window()
    c1, c2 = K1 ** 2, K2 ** 2
    mu1, mu2 = _filter_valid(y1, g), _filter_valid(y2, g)
    s11 = _filter_valid(y1 * y1, g) - mu1 * mu1
    s22 = _filter_valid(y2 * y2, g) - mu2 * mu2
    s12 = _filter_valid(y1 * y2, g) - mu1 * mu2
    num = (2 * mu1 * mu2 + c1) * (2 * s12 + c2)
    den = (mu1 * mu1 + mu2 * mu2 + c1) * (s11 + s22 + c2)
    return float(np.mean(num / den))
