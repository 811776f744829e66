"""Differentiable volume rendering of a dense voxel grid.

Colors are view independent (one rgb per lattice point). Rendering uses the
usual quadrature: alpha_k = 1 - exp(-sigma_k delta_k), transmittance
T_k = exp(-sum_{j<k} sigma_j delta_j), weights w_k = T_k alpha_k and
C = sum_k w_k c_k + T_K * background.

The backward pass is written out by hand. With tau_k = sigma_k delta_k and
S_k = sum_{j>k} w_j c_j + T_K * background,

    dC/dtau_k = T_{k+1} c_k - S_k,    dC/dc_k = w_k,

then chained through softplus / sigmoid and scattered back onto the eight
trilinear corners of every sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import sigmoid, softplus
from .scene import RayBundle, all_pixels, generate_rays

DEPTH_EPS = 1e-8

# corner offsets in (x, y, z), bit order matches the trilinear weights below
_CORNERS = np.array([[(c >> 2) & 1, (c >> 1) & 1, c & 1] for c in range(8)])


@dataclass
class RaySampleSet:
    t: np.ndarray  # (K,) or (R, K)
    delta: np.ndarray
    points: np.ndarray  # (..., K, 3)

    def __len__(self):
        return self.t.shape[-1]


@dataclass
class RenderOutput:
    color: np.ndarray  # (3,) or (R, 3)
    weights: np.ndarray  # (K,) or (R, K)
    depth: np.ndarray  # scalar or (R,)
    transmittance: np.ndarray  # T_K
    t: np.ndarray


def _as_bundle(ray):
    if isinstance(ray, RayBundle):
        return ray
    return RayBundle.from_rays([ray])


def sample_bundle(bundle, K, rng=None):
    """Midpoints of K equal subintervals of each ray's [near, far].

    With `rng`, each sample is jittered uniformly inside its subinterval.
    Zero-length rays get delta = 0, which renders pure background.
    """
    if K < 2:
        raise ValueError("need at least 2 samples per ray")
    span = np.maximum(bundle.far - bundle.near, 0.0)
    delta = np.broadcast_to((span / K)[:, None], (len(bundle), K))
    offset = np.arange(K) + 0.5
    if rng is not None:
        offset = np.arange(K) + rng.random((len(bundle), K))
    t = bundle.near[:, None] + offset * delta
    points = bundle.origins[:, None, :] + t[..., None] * bundle.directions[:, None, :]
    return RaySampleSet(t, delta, points)


def sample_points(ray, K, rng=None):
    """Samples for a single Ray; a zero-length ray gives an empty set."""
    if K < 2:
        raise ValueError("need at least 2 samples per ray")
    if not ray.t_far > ray.t_near:
        empty = np.zeros(0)
        return RaySampleSet(empty, empty, np.zeros((0, 3)))
    s = sample_bundle(_as_bundle(ray), K, rng)
    return RaySampleSet(s.t[0], s.delta[0], s.points[0])


def trilinear_corners(grid, points):
    """Flat lattice indices (P, 8), weights (P, 8) and inside mask (P,) for points (P, 3)."""
    res = np.array(grid.resolution)
    g = (points - grid.aabb_min) / (grid.aabb_max - grid.aabb_min) * (res - 1)
    inside = np.all((g >= 0) & (g <= res - 1), axis=-1)
    g = np.clip(g, 0, res - 1)
    i0 = np.minimum(np.floor(g).astype(np.int64), res - 2)
    fr = g - i0
    lo, hi = 1.0 - fr, fr
    ny, nz = res[1], res[2]
    idx = np.empty((len(points), 8), dtype=np.int64)
    w = np.empty((len(points), 8))
    for c, (ox, oy, oz) in enumerate(_CORNERS):
        idx[:, c] = ((i0[:, 0] + ox) * ny + (i0[:, 1] + oy)) * nz + (i0[:, 2] + oz)
        w[:, c] = ((hi if ox else lo)[:, 0] * (hi if oy else lo)[:, 1] * (hi if oz else lo)[:, 2])
    w *= inside[:, None]
    return idx, w, inside


def _interpolate(flat_params, idx, w):
    raw = np.zeros((len(idx), flat_params.shape[1]))
    for c in range(8):
        raw += w[:, c, None] * flat_params[idx[:, c]]
    return raw


def query_points(grid, points):
    """Activated (sigma, rgb) at points (P, 3); outside the AABB sigma = 0, rgb = 0."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    idx, w, inside = trilinear_corners(grid, points)
    raw = _interpolate(grid.params.reshape(-1, 4), idx, w)
    sigma = np.where(inside, softplus(raw[:, 0]), 0.0)
    rgb = np.where(inside[:, None], sigmoid(raw[:, 1:]), 0.0)
    return sigma, rgb


def query_grid(grid, p):
    sigma, rgb = query_points(grid, np.asarray(p, dtype=np.float64).reshape(1, 3))
    return float(sigma[0]), rgb[0]


def depth_expectation(weights, depths):
    """Normalized expected depth sum(w t) / sum(w); 0 when sum(w) <= 1e-8."""
    weights = np.asarray(weights, dtype=np.float64)
    depths = np.asarray(depths, dtype=np.float64)
    if np.any(weights < 0):
        raise ValueError("weights must be nonnegative")
    total = weights.sum(axis=-1)
    num = (weights * depths).sum(axis=-1)
    safe = np.where(total > DEPTH_EPS, total, 1.0)
    d = np.where(total > DEPTH_EPS, num / safe, 0.0)
    return d if d.ndim else float(d)


@dataclass
class _Cache:
    idx: np.ndarray
    w_tri: np.ndarray
    inside: np.ndarray
    raw: np.ndarray  # (P, 4) interpolated raw parameters
    sigma: np.ndarray  # (R, K)
    rgb: np.ndarray  # (R, K, 3)
    delta: np.ndarray
    trans: np.ndarray  # T_k, (R, K)
    weights: np.ndarray
    t_final: np.ndarray  # T_K, (R,)
    background: np.ndarray


def render_rays(grid, bundle, K, background=(0.0, 0.0, 0.0), rng=None, keep_cache=False):
    """Forward render of a RayBundle. Returns RenderOutput (and the backward cache)."""
    background = np.asarray(background, dtype=np.float64)
    s = sample_bundle(bundle, K, rng)
    R = len(bundle)
    idx, w_tri, inside = trilinear_corners(grid, s.points.reshape(-1, 3))
    raw = _interpolate(grid.params.reshape(-1, 4), idx, w_tri)
    sigma = np.where(inside, softplus(raw[:, 0]), 0.0).reshape(R, K)
    rgb = np.where(inside[:, None], sigmoid(raw[:, 1:]), 0.0).reshape(R, K, 3)
    tau = sigma * s.delta
    acc = np.cumsum(tau, axis=1)
    trans = np.exp(-(acc - tau))
    alpha = -np.expm1(-tau)
    weights = trans * alpha
    t_final = np.exp(-acc[:, -1])
    color = np.einsum("rk,rkc->rc", weights, rgb) + t_final[:, None] * background
    out = RenderOutput(color, weights, depth_expectation(weights, s.t), t_final, s.t)
    if not keep_cache:
        return out
    cache = _Cache(idx, w_tri, inside, raw, sigma, rgb, s.delta, trans, weights, t_final, background)
    return out, cache


def backprop_rays(grid, cache, dl_dcolor, grad=None):
    """Accumulate dL/dparams into `grad` (same shape as grid.params) given dL/dC (R, 3)."""
    g = np.asarray(dl_dcolor, dtype=np.float64)
    if grad is None:
        grad = np.zeros(grid.params.shape)
    gc = np.einsum("rc,rkc->rk", g, cache.rgb)
    wgc = cache.weights * gc
    # S_k = sum_{j>k} w_j (g.c_j) + T_K (g.bg)
    suffix = np.cumsum(wgc[:, ::-1], axis=1)[:, ::-1] - wgc
    suffix += (cache.t_final * (g @ cache.background))[:, None]
    t_next = cache.trans - cache.weights
    d_sigma = (t_next * gc - suffix) * cache.delta
    d_rgb = cache.weights[..., None] * g[:, None, :]

    P = len(cache.raw)
    d_raw = np.empty((P, 4))
    d_raw[:, 0] = d_sigma.reshape(P) * sigmoid(cache.raw[:, 0])
    rgb = cache.rgb.reshape(P, 3)
    d_raw[:, 1:] = d_rgb.reshape(P, 3) * rgb * (1.0 - rgb)
    d_raw *= cache.inside[:, None]

    flat_idx = cache.idx.ravel()
    n = grad.size // 4
    flat = grad.reshape(n, 4)
    for ch in range(4):
        contrib = (cache.w_tri * d_raw[:, ch, None]).ravel()
        flat[:, ch] += np.bincount(flat_idx, weights=contrib, minlength=n)
    return grad


def render_ray(grid, ray, K, background=(0.0, 0.0, 0.0)):
    out = render_rays(grid, _as_bundle(ray), K, background)
    if not ray.t_far > ray.t_near:
        out.weights = np.zeros((1, 0))
        out.t = np.zeros((1, 0))
    return RenderOutput(out.color[0], out.weights[0], float(np.atleast_1d(out.depth)[0]),
                        float(out.transmittance[0]), out.t[0])


def backprop_ray(grid, ray, K, dl_dcolor, background=(0.0, 0.0, 0.0), grad=None):
    _, cache = render_rays(grid, _as_bundle(ray), K, background, keep_cache=True)
    return backprop_rays(grid, cache, np.asarray(dl_dcolor, dtype=np.float64).reshape(1, 3), grad)


def render_image(grid, camera, K, background=(0.0, 0.0, 0.0), chunk=2048):
    """Full-frame render. Returns (image (H, W, 3), expected depth (H, W))."""
    u, v = all_pixels(camera)
    colors = np.empty((len(u), 3))
    depth = np.empty(len(u))
    for start in range(0, len(u), chunk):
        sl = slice(start, start + chunk)
        bundle = generate_rays(camera, u[sl], v[sl], grid.aabb_min, grid.aabb_max)
        out = render_rays(grid, bundle, K, background)
        colors[sl] = out.color
        depth[sl] = out.depth
    shape = (camera.height, camera.width)
    return colors.reshape(*shape, 3), depth.reshape(shape)
