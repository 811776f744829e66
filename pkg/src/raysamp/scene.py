"""Synthetic scenes, pinhole cameras and analytic ground-truth rendering.

Camera convention: camera-to-world pose, the camera looks down its local
-z axis with +y up and +x to the right. Pixel (u, v) is column u, row v,
and rays pass through the pixel center (u + 0.5, v + 0.5).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_ORTHO_TOL = 1e-6


class DegenerateInputError(ValueError):
    pass


@dataclass
class Camera:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError("principal point must lie inside the image")
        r = self.rotation
        if (np.abs(r.T @ r - np.eye(3)).max() > _ORTHO_TOL
                or abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL):
            raise ValueError("rotation must be orthonormal with det +1")

    @classmethod
    def from_fov(cls, width, height, fov_deg, eye, target, up=(0.0, 1.0, 0.0)):
        """Square-pixel camera with horizontal field of view `fov_deg`, placed by look_at."""
        f = 0.5 * width / np.tan(np.radians(fov_deg) / 2)
        rot, trans = look_at(eye, target, up)
        return cls(f, f, width / 2, height / 2, width, height, rot, trans)


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    t_near: float
    t_far: float


@dataclass
class RayBundle:
    """Many rays as parallel arrays: origins/directions (R, 3), near/far (R,)."""

    origins: np.ndarray
    directions: np.ndarray
    near: np.ndarray
    far: np.ndarray

    def __len__(self):
        return len(self.near)

    @classmethod
    def from_rays(cls, rays):
        return cls(np.array([r.origin for r in rays], dtype=np.float64).reshape(-1, 3),
                   np.array([r.direction for r in rays], dtype=np.float64).reshape(-1, 3),
                   np.array([r.t_near for r in rays], dtype=np.float64),
                   np.array([r.t_far for r in rays], dtype=np.float64))


@dataclass
class Primitive:
    kind: str  # "sphere" | "box"
    center: np.ndarray
    size: np.ndarray  # sphere: radius (scalar); box: half extents (3,)
    color: np.ndarray
    density: float

    def __post_init__(self):
        if self.kind not in ("sphere", "box"):
            raise ValueError(f"unknown primitive kind {self.kind!r}")
        self.center = np.asarray(self.center, dtype=np.float64).reshape(3)
        self.color = np.asarray(self.color, dtype=np.float64).reshape(3)
        if self.kind == "sphere":
            self.size = np.float64(np.asarray(self.size, dtype=np.float64).reshape(-1)[0])
            if self.size < 0:
                raise ValueError("sphere radius must be nonnegative")
        else:
            self.size = np.broadcast_to(np.asarray(self.size, dtype=np.float64), (3,)).copy()
            if np.any(self.size < 0):
                raise ValueError("box half extents must be nonnegative")
        if not self.density > 0:
            raise ValueError("primitive density must be > 0")
        if np.any(self.color < 0) or np.any(self.color > 1):
            raise ValueError("primitive colors must lie in [0, 1]")

    def bounds(self):
        half = np.full(3, self.size) if self.kind == "sphere" else self.size
        return self.center - half, self.center + half

    def contains(self, points):
        """Closed containment: points on the surface count as inside."""
        d = np.asarray(points) - self.center
        if self.kind == "sphere":
            return (np.einsum("...i,...i->...", d, d) <= self.size ** 2) & (self.size > 0)
        return np.all(np.abs(d) <= self.size, axis=-1) & np.all(self.size > 0)

    def intersect(self, origins, directions):
        """Entry distance t >= 0 of each ray, +inf on a miss."""
        if self.kind == "sphere":
            oc = origins - self.center
            b = np.einsum("ij,ij->i", oc, directions)
            c = np.einsum("ij,ij->i", oc, oc) - self.size ** 2
            disc = b * b - c
            hit = (disc >= 0) & (self.size > 0)
            sq = np.sqrt(np.where(hit, disc, 0.0))
            t0, t1 = -b - sq, -b + sq
            t = np.where(t0 >= 0, t0, t1)
            return np.where(hit & (t1 >= 0), np.maximum(t, 0.0), np.inf)
        lo, hi = self.bounds()
        t0, t1 = slab_intersect(origins, directions, lo, hi)
        hit = (t1 >= np.maximum(t0, 0.0)) & np.all(self.size > 0)
        return np.where(hit, np.maximum(t0, 0.0), np.inf)


@dataclass
class SceneSpec:
    aabb_min: np.ndarray
    aabb_max: np.ndarray
    primitives: list = field(default_factory=list)
    background: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.aabb_min = np.asarray(self.aabb_min, dtype=np.float64).reshape(3)
        self.aabb_max = np.asarray(self.aabb_max, dtype=np.float64).reshape(3)
        self.background = np.asarray(self.background, dtype=np.float64).reshape(3)
        if np.any(self.aabb_max <= self.aabb_min):
            raise ValueError("aabb max must exceed aabb min on every axis")
        if np.any(self.background < 0) or np.any(self.background > 1):
            raise ValueError("background color must lie in [0, 1]")
        for p in self.primitives:
            lo, hi = p.bounds()
            if np.any(lo < self.aabb_min - 1e-12) or np.any(hi > self.aabb_max + 1e-12):
                raise ValueError(f"{p.kind} at {p.center.tolist()} does not fit in the bounding box")


def look_at(eye, target, up=(0.0, 1.0, 0.0)):
    """Camera-to-world (rotation, translation) looking from `eye` at `target`.

    The rotation's third column is the camera +z axis, which points away
    from the target, so the viewing direction is the camera's -z axis.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    dist = np.linalg.norm(forward)
    if dist < 1e-9:
        raise DegenerateInputError("eye and target coincide")
    forward /= dist
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    norm = np.linalg.norm(right)
    if norm < 1e-9:
        raise DegenerateInputError("up vector is parallel to the view direction")
    right /= norm
    true_up = np.cross(right, forward)
    rot = np.stack([right, true_up, -forward], axis=1)
    return rot, eye.copy()


def slab_intersect(origins, directions, lo, hi):
    """Ray/AABB slab test; returns (t_enter, t_exit), a miss has t_exit < t_enter."""
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / directions
        ta = (lo - origins) * inv
        tb = (hi - origins) * inv
    # 0 * inf on axis-parallel rays lying exactly on a slab plane
    ta = np.where(np.isnan(ta), -np.inf, ta)
    tb = np.where(np.isnan(tb), np.inf, tb)
    t0 = np.minimum(ta, tb).max(axis=-1)
    t1 = np.maximum(ta, tb).min(axis=-1)
    return t0, t1


def pixel_directions(camera, u, v):
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    local = np.stack([(u + 0.5 - camera.cx) / camera.fx,
                      -(v + 0.5 - camera.cy) / camera.fy,
                      -np.ones_like(u)], axis=-1)
    d = local @ camera.rotation.T
    return d / np.linalg.norm(d, axis=-1, keepdims=True)


def generate_rays(camera, u, v, aabb_min, aabb_max):
    """Vectorized generate_ray over integer pixel arrays."""
    u = np.asarray(u)
    v = np.asarray(v)
    if np.any(u < 0) or np.any(u >= camera.width) or np.any(v < 0) or np.any(v >= camera.height):
        raise IndexError("pixel outside the image")
    dirs = pixel_directions(camera, u, v).reshape(-1, 3)
    origins = np.broadcast_to(camera.translation, dirs.shape).copy()
    t0, t1 = slab_intersect(origins, dirs, aabb_min, aabb_max)
    near = np.maximum(t0, 0.0)
    miss = t1 <= near
    near = np.where(miss, 0.0, near)
    far = np.where(miss, 0.0, t1)
    return RayBundle(origins, dirs, near, far)


def generate_ray(camera, u, v, aabb_min=(-1, -1, -1), aabb_max=(1, 1, 1)):
    b = generate_rays(camera, np.array([u]), np.array([v]),
                      np.asarray(aabb_min, dtype=np.float64), np.asarray(aabb_max, dtype=np.float64))
    return Ray(b.origins[0], b.directions[0], float(b.near[0]), float(b.far[0]))


def all_pixels(camera):
    v, u = np.mgrid[0:camera.height, 0:camera.width]
    return u.ravel(), v.ravel()


def render_ground_truth(spec, camera):
    """Analytic render: nearest-hit primitive color (else background) and hit distance (else 0)."""
    u, v = all_pixels(camera)
    dirs = pixel_directions(camera, u, v)
    origins = np.broadcast_to(camera.translation, dirs.shape)
    n = len(u)
    best = np.full(n, np.inf)
    color = np.broadcast_to(spec.background, (n, 3)).copy()
    for prim in spec.primitives:
        t = prim.intersect(origins, dirs)
        closer = t < best
        best[closer] = t[closer]
        color[closer] = prim.color
    depth = np.where(np.isfinite(best), best, 0.0)
    shape = (camera.height, camera.width)
    return color.reshape(*shape, 3), depth.reshape(shape)


def voxel_centers(resolution, aabb_min, aabb_max):
    """Lattice of grid sample points, (Nx, Ny, Nz, 3), spanning the AABB corner to corner."""
    axes = [np.linspace(aabb_min[i], aabb_max[i], resolution[i]) for i in range(3)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


def default_scene(tiles=6):
    """Desk-scale test scene: three objects over a checkerboard of box tiles."""
    prims = [
        Primitive("sphere", (0.0, 0.05, 0.0), 0.45, (0.85, 0.2, 0.15), 40.0),
        Primitive("box", (0.5, -0.4, 0.45), (0.25, 0.25, 0.25), (0.15, 0.7, 0.25), 40.0),
        Primitive("sphere", (-0.5, 0.5, 0.35), 0.3, (0.2, 0.35, 0.9), 40.0),
    ]
    w = 1.8 / tiles
    tile_colors = [(0.9, 0.85, 0.5), (0.35, 0.3, 0.55)]
    for i in range(tiles):
        for j in range(tiles):
            center = (-0.9 + w * (i + 0.5), -0.8, -0.9 + w * (j + 0.5))
            prims.append(Primitive("box", center, (w / 2, 0.1, w / 2), tile_colors[(i + j) % 2], 40.0))
    return SceneSpec((-1, -1, -1), (1, 1, 1), prims, (0.0, 0.0, 0.0))


def arc_camera(azimuth_deg, elevation_deg=20.0, radius=3.2, size=64, fov_deg=45.0):
    az, el = np.radians(azimuth_deg), np.radians(elevation_deg)
    eye = radius * np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
    return Camera.from_fov(size, size, fov_deg, eye, (0.0, 0.0, 0.0))


def default_rig(size=64):
    """Three narrow-baseline training views and one held-out view between them."""
    train = [arc_camera(a, size=size) for a in (-25.0, 0.0, 25.0)]
    return train, [arc_camera(12.0, size=size)]


def orbit_cameras(n_views, radius=3.2, elevation_deg=25.0, size=64, fov_deg=45.0, phase_deg=0.0):
    cams = []
    for k in range(n_views):
        az = np.radians(phase_deg + 360.0 * k / n_views)
        el = np.radians(elevation_deg)
        eye = radius * np.array([np.cos(el) * np.sin(az), np.sin(el), np.cos(el) * np.cos(az)])
        cams.append(Camera.from_fov(size, size, fov_deg, eye, (0.0, 0.0, 0.0)))
    return cams


def _signed_distance(prim, points):
    d = points - prim.center
    if prim.kind == "sphere":
        return np.linalg.norm(d, axis=-1) - prim.size
    q = np.abs(d) - prim.size
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    return outside + np.minimum(q.max(axis=-1), 0.0)


def voxelize(spec, resolution, color_eps=1e-3):
    """Ground-truth RadianceGrid for `spec`.

    Lattice points inside or on a primitive take its density and color
    (the first primitive wins where they overlap). Every other point gets
    numerically zero density; its color is copied from the closest
    primitive so interpolation near surfaces does not bleed gray.
    """
    from .grid import EMPTY_DENSITY_RAW, RadianceGrid, inverse_softplus, logit

    res = tuple(int(r) for r in resolution)
    if min(res) < 2:
        raise ValueError("resolution must be >= 2 per axis")
    pts = voxel_centers(res, spec.aabb_min, spec.aabb_max)
    grid = RadianceGrid.constant(res, spec.aabb_min, spec.aabb_max, EMPTY_DENSITY_RAW, 0.0)
    if not spec.primitives:
        return grid
    sdf = np.stack([_signed_distance(p, pts) for p in spec.primitives], axis=0)
    nearest = np.argmin(sdf, axis=0)
    colors = np.stack([p.color for p in spec.primitives])
    grid.params[..., 1:] = logit(np.clip(colors[nearest], color_eps, 1 - color_eps))
    filled = np.zeros(res, dtype=bool)
    for prim in spec.primitives:
        inside = prim.contains(pts) & ~filled
        grid.params[inside, 0] = inverse_softplus(prim.density)
        grid.params[inside, 1:] = logit(np.clip(prim.color, color_eps, 1 - color_eps))
        filled |= inside
    return grid
