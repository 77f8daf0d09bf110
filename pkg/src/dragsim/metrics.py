"""Image quality metrics on [0,1] images: MSE, PSNR, SSIM.

PSNR assumes a unit dynamic range and reports +inf for identical inputs.
SSIM follows the standard recipe: computed on the luminance channel with an
11x11 Gaussian window (sigma 1.5), K1=0.01, K2=0.03, L=1, weighted moments
without sample-covariance correction, averaged over valid (fully inside)
window positions only.
"""

from __future__ import annotations

import numpy as np

from .errors import ShapeError

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _check_pair(a: np.ndarray, b: np.ndarray):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"image shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mse(a, b) -> float:
    a, b = _check_pair(a, b)
    return float(np.mean((a - b) ** 2))


def psnr(a, b) -> float:
    """10*log10(1/MSE) in dB; +inf when the images are identical."""
    m = mse(a, b)
    if m == 0.0:
        return float("inf")
    return float(10.0 * np.log10(1.0 / m))


def _luma(img: np.ndarray) -> np.ndarray:
    if img.ndim == 3 and img.shape[2] == 3:
        return 0.299 * img[:, :, 0] + 0.587 * img[:, :, 1] + 0.114 * img[:, :, 2]
    if img.ndim == 2:
        return img
    raise ShapeError(f"expected (H, W) or (H, W, 3) image, got {img.shape}")


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    """Normalized 2-D Gaussian weights, sum 1."""
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def ssim(a, b, window: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> float:
    a, b = _check_pair(a, b)
    x = _luma(a)
    y = _luma(b)
    if x.shape[0] < window or x.shape[1] < window:
        raise ShapeError(f"image {x.shape} smaller than the {window}x{window} window")
    w = gaussian_window(window, sigma)

    # all valid window positions at once: (H-w+1, W-w+1, w, w) view
    xs = np.lib.stride_tricks.sliding_window_view(x, (window, window))
    ys = np.lib.stride_tricks.sliding_window_view(y, (window, window))
    mu_x = np.einsum("ijkl,kl->ij", xs, w)
    mu_y = np.einsum("ijkl,kl->ij", ys, w)
    xx = np.einsum("ijkl,kl->ij", xs * xs, w)
    yy = np.einsum("ijkl,kl->ij", ys * ys, w)
    xy = np.einsum("ijkl,kl->ij", xs * ys, w)
    var_x = xx - mu_x**2
    var_y = yy - mu_y**2
    cov = xy - mu_x * mu_y

    c1 = SSIM_K1**2
    c2 = SSIM_K2**2
    num = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    den = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return float(np.mean(num / den))
