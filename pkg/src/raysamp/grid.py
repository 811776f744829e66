"""Dense voxel grid of raw radiance parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# softplus(-40) ~ 4e-18: numerically empty space
EMPTY_DENSITY_RAW = -40.0


def softplus(x):
    return np.logaddexp(0.0, x)


def sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def inverse_softplus(y):
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


@dataclass
class RadianceGrid:
    """Raw parameters on the lattice `voxel_centers(resolution, aabb)`.

    `params` has shape (Nx, Ny, Nz, 4): channel 0 is the raw density,
    channels 1..3 the raw color. Activated density is softplus(raw),
    activated color sigmoid(raw).
    """

    aabb_min: np.ndarray
    aabb_max: np.ndarray
    params: np.ndarray

    def __post_init__(self):
        self.aabb_min = np.asarray(self.aabb_min, dtype=np.float64).reshape(3)
        self.aabb_max = np.asarray(self.aabb_max, dtype=np.float64).reshape(3)
        if self.params.ndim != 4 or self.params.shape[3] != 4:
            raise ValueError("params must have shape (Nx, Ny, Nz, 4)")
        if min(self.params.shape[:3]) < 2:
            raise ValueError("grid resolution must be >= 2 on every axis")
        if np.any(self.aabb_max <= self.aabb_min):
            raise ValueError("degenerate grid bounds")

    @classmethod
    def constant(cls, resolution, aabb_min, aabb_max, density_raw=0.0, color_raw=0.0, dtype=np.float64):
        res = tuple(int(r) for r in resolution)
        params = np.empty(res + (4,), dtype=dtype)
        params[..., 0] = density_raw
        params[..., 1:] = color_raw
        return cls(aabb_min, aabb_max, params)

    @property
    def resolution(self):
        return self.params.shape[:3]

    @property
    def density_raw(self):
        return self.params[..., 0]

    @property
    def color_raw(self):
        return self.params[..., 1:]

    def density(self):
        return softplus(self.density_raw)

    def color(self):
        return sigmoid(self.color_raw)

    def copy(self):
        return RadianceGrid(self.aabb_min.copy(), self.aabb_max.copy(), self.params.copy())
