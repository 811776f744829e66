"""Sampling probability maps from local color and depth variation.

Both maps use the same stencil: the standard deviation of an n x n window
centered on each pixel, with replicate padding at the borders. Raw maps are
floored at s = 0.01 * mean and divided by their maximum, then blended with
a weight that ramps up over training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class DegenerateMapError(ValueError):
    """Raised when a raw map has no positive entry and cannot be normalized."""


@dataclass
class ProbMap:
    values: np.ndarray  # (H, W), entries in (0, 1]
    source: str  # "pixel" | "depth" | "fused"
    s: float = float("nan")

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class BetaSchedule:
    total_iterations: int
    beta_max: float = 0.5

    def __call__(self, iteration):
        return beta(iteration, self)


def clamp(lo, hi, x):
    """Clamp `x` into [lo, hi]. Works elementwise on arrays."""
    if np.any(np.asarray(lo) > np.asarray(hi)):
        raise ValueError("clamp requires lo <= hi")
    if np.ndim(x) == 0 and np.ndim(lo) == 0 and np.ndim(hi) == 0:
        return lo if x < lo else hi if x > hi else x
    return np.minimum(np.maximum(x, lo), hi)


def _window_std(plane, n):
    # one-pass E[x^2] - E[x]^2, computed on values shifted by the window center
    # so constant windows give exactly 0
    if n < 3 or n % 2 == 0:
        raise ValueError(f"window size must be odd and >= 3, got {n}")
    r = n // 2
    padded = np.pad(plane, r, mode="edge")
    win = sliding_window_view(padded, (n, n))
    shifted = win - plane[:, :, None, None]
    m1 = shifted.mean(axis=(-2, -1))
    m2 = (shifted * shifted).mean(axis=(-2, -1))
    return np.sqrt(np.maximum(m2 - m1 * m1, 0.0))


def pixel_std_map(image, n=3):
    """Per-channel windowed std averaged over the color channels, shape (H, W)."""
    image = np.asarray(image, dtype=np.float64)
    if image.ndim == 2:
        return _window_std(image, n)
    return np.mean([_window_std(image[..., ch], n) for ch in range(image.shape[-1])], axis=0)


def depth_std_map(depth, n=3):
    depth = np.asarray(depth, dtype=np.float64)
    if depth.ndim != 2:
        raise ValueError("depth map must be 2-D")
    return _window_std(depth, n)


def normalize_map(raw, source="pixel", s_coef=0.01):
    raw = np.asarray(raw, dtype=np.float64)
    peak = raw.max() if raw.size else 0.0
    if not peak > 0:
        raise DegenerateMapError("degenerate map")
    s = s_coef * raw.mean()
    return ProbMap(clamp(s, peak, raw) / peak, source, float(s))


def beta(iteration, schedule):
    if schedule.total_iterations <= 0:
        raise ValueError("beta schedule needs total_iterations > 0")
    if iteration < 0:
        raise ValueError("iteration must be >= 0")
    return schedule.beta_max * min(iteration / schedule.total_iterations, 1.0)


def fuse(pc, pd, beta):
    """beta * pc + (1 - beta) * pd; beta weights the pixel-guided map."""
    if pc.shape != pd.shape:
        raise ValueError(f"map shapes differ: {pc.shape} vs {pd.shape}")
    if not 0.0 <= beta <= 0.5:
        raise ValueError("beta must lie in [0, 0.5]")
    return ProbMap(beta * pc.values + (1.0 - beta) * pd.values, "fused")
