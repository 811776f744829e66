"""Image quality metrics."""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03


def _check_pair(img, ref):
    img = np.asarray(img, dtype=np.float64)
    ref = np.asarray(ref, dtype=np.float64)
    if img.shape != ref.shape:
        raise ValueError(f"image shapes differ: {img.shape} vs {ref.shape}")
    return img, ref


def mse(img, ref):
    img, ref = _check_pair(img, ref)
    return float(np.mean((img - ref) ** 2))


def psnr(img, ref):
    """Peak signal-to-noise ratio in dB for peak 1.0; +inf when the images match."""
    err = mse(img, ref)
    if err == 0.0:
        return float("inf")
    return float(-10.0 * np.log10(err))


def _gaussian_window(size=SSIM_WINDOW, sigma=SSIM_SIGMA):
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x ** 2) / (2 * sigma ** 2))
    g /= g.sum()
    return np.outer(g, g)


def _filter_valid(plane, window):
    win = sliding_window_view(plane, window.shape)
    return np.einsum("ijkl,kl->ij", win, window)


def ssim(img, ref, data_range=1.0):
    """Mean SSIM over all fully-contained 11x11 Gaussian windows, averaged over channels."""
    img, ref = _check_pair(img, ref)
    if img.shape[0] < SSIM_WINDOW or img.shape[1] < SSIM_WINDOW:
        raise ValueError(f"SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    if img.ndim == 2:
        img, ref = img[..., None], ref[..., None]
    window = _gaussian_window()
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    scores = []
    for ch in range(img.shape[-1]):
        x, y = img[..., ch], ref[..., ch]
        mx, my = _filter_valid(x, window), _filter_valid(y, window)
        sxx = _filter_valid(x * x, window) - mx * mx
        syy = _filter_valid(y * y, window) - my * my
        sxy = _filter_valid(x * y, window) - mx * my
        num = (2 * mx * my + c1) * (2 * sxy + c2)
        den = (mx * mx + my * my + c1) * (sxx + syy + c2)
        scores.append(np.mean(num / den))
    return float(np.mean(scores))
