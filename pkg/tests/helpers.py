"""Shared random fixtures for renderer checks."""

import numpy as np

from raysamp.grid import RadianceGrid
from raysamp.renderer import backprop_rays, render_rays
from raysamp.scene import Ray, RayBundle, slab_intersect

LO, HI = np.full(3, -1.0), np.full(3, 1.0)


def random_grid(rng, res=4, density_scale=2.0):
    params = rng.normal(size=(res, res, res, 4))
    params[..., 0] *= density_scale
    return RadianceGrid(LO, HI, params)


def random_ray(rng):
    """Ray from outside the unit box aimed at a random interior point, clipped to the box."""
    d = rng.normal(size=3)
    d /= np.linalg.norm(d)
    target = rng.uniform(-0.8, 0.8, size=3)
    origin = target - 3.0 * d
    t0, t1 = slab_intersect(origin[None], d[None], LO, HI)
    return Ray(origin, d, float(max(t0[0], 0.0)), float(t1[0]))


def loss_and_grad(grid, ray, K, g, background):
    bundle = RayBundle.from_rays([ray])
    out, cache = render_rays(grid, bundle, K, background, keep_cache=True)
    loss = float(out.color[0] @ g)
    return loss, backprop_rays(grid, cache, g[None])


def gradient_relative_error(grid, ray, K, g, background, eps=1e-5):
    """||analytic - central difference|| / ||central difference|| over every grid parameter."""
    _, analytic = loss_and_grad(grid, ray, K, g, background)
    bundle = RayBundle.from_rays([ray])
    flat = grid.params.reshape(-1)
    fd = np.zeros_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + eps
        fp = float(render_rays(grid, bundle, K, background).color[0] @ g)
        flat[i] = old - eps
        fm = float(render_rays(grid, bundle, K, background).color[0] @ g)
        flat[i] = old
        fd[i] = (fp - fm) / (2 * eps)
    scale = np.linalg.norm(fd)
    return float(np.linalg.norm(analytic.reshape(-1) - fd) / max(scale, 1e-12))
