"""File formats: scene JSON, PFM float maps, 8-bit PNG, grid checkpoints.

Scene JSON::

    {
      "aabb": {"min": [x, y, z], "max": [x, y, z]},
      "background": [r, g, b],
      "primitives": [
        {"kind": "sphere", "center": [...], "radius": r, "color": [...], "density": s},
        {"kind": "box", "center": [...], "half_extents": [...], "color": [...], "density": s}
      ],
      "cameras": [                                   # optional
        {"eye": [...], "target": [...], "up": [0, 1, 0],
         "width": 64, "height": 64, "fov_deg": 45}
      ],
      "train_views": [0, 1, 2], "eval_views": [3]    # optional
    }

Without "cameras" the default rig is used (three training views, one
held-out view).

Checkpoint layout (all little-endian)::

    8 bytes   magic b"RSGRID01"
    3 x u32   Nx, Ny, Nz
    6 x f32   aabb min xyz, aabb max xyz
    Nx*Ny*Nz*4 f32   raw parameters, C order over (x, y, z, channel);
                     channel 0 density, 1..3 color
"""

from __future__ import annotations

import json
import struct

import numpy as np
from PIL import Image

from .grid import RadianceGrid
from .scene import Camera, Primitive, SceneSpec, default_rig

CHECKPOINT_MAGIC = b"RSGRID01"


class FormatError(ValueError):
    pass


# viridis sampled at 9 evenly spaced stops
_VIRIDIS = np.array([
    [0.267004, 0.004874, 0.329415],
    [0.282623, 0.140926, 0.457517],
    [0.253935, 0.265254, 0.529983],
    [0.206756, 0.371758, 0.553117],
    [0.163625, 0.471133, 0.558148],
    [0.127568, 0.566949, 0.550556],
    [0.134692, 0.658636, 0.517649],
    [0.266941, 0.748751, 0.440573],
    [0.993248, 0.906157, 0.143936],
])


# --- scenes -----------------------------------------------------------------

def scene_from_dict(d):
    prims = []
    for p in d.get("primitives", []):
        kind = p["kind"]
        size = p["radius"] if kind == "sphere" else p["half_extents"]
        prims.append(Primitive(kind, p["center"], size, p["color"], p["density"]))
    spec = SceneSpec(d["aabb"]["min"], d["aabb"]["max"], prims, d.get("background", [0, 0, 0]))
    if "cameras" in d:
        cams = [Camera.from_fov(c.get("width", 64), c.get("height", 64), c.get("fov_deg", 45.0),
                                c["eye"], c.get("target", [0, 0, 0]), c.get("up", [0, 1, 0]))
                for c in d["cameras"]]
        train = [cams[i] for i in d.get("train_views", range(len(cams) - 1))]
        held = [cams[i] for i in d.get("eval_views", [len(cams) - 1])]
    else:
        train, held = default_rig()
    return spec, train, held


def scene_to_dict(spec):
    prims = []
    for p in spec.primitives:
        entry = {"kind": p.kind, "center": p.center.tolist(), "color": p.color.tolist(),
                 "density": float(p.density)}
        if p.kind == "sphere":
            entry["radius"] = float(p.size)
        else:
            entry["half_extents"] = p.size.tolist()
        prims.append(entry)
    return {"aabb": {"min": spec.aabb_min.tolist(), "max": spec.aabb_max.tolist()},
            "background": spec.background.tolist(), "primitives": prims}


def load_scene(path):
    """(SceneSpec, training cameras, held-out cameras) from a scene JSON file."""
    with open(path) as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as e:
            raise FormatError(f"{path}: invalid JSON ({e})") from e
    try:
        return scene_from_dict(d)
    except KeyError as e:
        raise FormatError(f"{path}: missing field {e}") from e


def save_scene(spec, path):
    with open(path, "w") as fh:
        json.dump(scene_to_dict(spec), fh, indent=2)


def all_cameras(train, held):
    return list(train) + list(held)


# --- PFM --------------------------------------------------------------------

def write_pfm(path, data):
    """Write a float map as little-endian PFM (bottom row first)."""
    data = np.asarray(data, dtype=np.float32)
    if data.ndim == 2:
        header = b"Pf"
    elif data.ndim == 3 and data.shape[2] == 3:
        header = b"PF"
    else:
        raise ValueError("PFM holds (H, W) or (H, W, 3) arrays")
    h, w = data.shape[:2]
    with open(path, "wb") as fh:
        fh.write(header + b"\n" + f"{w} {h}\n".encode() + b"-1.0\n")
        fh.write(np.flipud(data).astype("<f4").tobytes())


def read_pfm(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    try:
        header, dims, scale, body = raw.split(b"\n", 3)
        channels = {b"Pf": 1, b"PF": 3}[header.strip()]
        w, h = (int(x) for x in dims.split())
        scale = float(scale)
    except (ValueError, KeyError) as e:
        raise FormatError(f"{path}: malformed PFM header") from e
    dtype = "<f4" if scale < 0 else ">f4"
    count = w * h * channels
    if len(body) < 4 * count:
        raise FormatError(f"{path}: truncated PFM data")
    data = np.frombuffer(body[:4 * count], dtype=dtype).astype(np.float32)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return np.flipud(data.reshape(shape)).copy()


# --- PNG --------------------------------------------------------------------

def write_png(path, image):
    """Quantize [0, 1] values by 255x, no gamma."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    Image.fromarray(np.rint(arr * 255).astype(np.uint8)).save(path)


def read_png(path):
    try:
        with Image.open(path) as im:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64) / 255.0
    except (OSError, ValueError) as e:
        raise FormatError(f"{path}: cannot read image ({e})") from e
    return arr


def heatmap(values):
    """Map values linearly onto the viridis stops; returns (H, W, 3) in [0, 1]."""
    v = np.asarray(values, dtype=np.float64)
    lo, hi = v.min(), v.max()
    x = (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)
    pos = x * (len(_VIRIDIS) - 1)
    i = np.minimum(pos.astype(int), len(_VIRIDIS) - 2)
    f = (pos - i)[..., None]
    return _VIRIDIS[i] * (1 - f) + _VIRIDIS[i + 1] * f


# --- checkpoints ------------------------------------------------------------

def save_checkpoint(grid, path):
    nx, ny, nz = grid.resolution
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<3I", nx, ny, nz))
        fh.write(struct.pack("<6f", *grid.aabb_min, *grid.aabb_max))
        fh.write(np.ascontiguousarray(grid.params, dtype="<f4").tobytes())


def load_checkpoint(path):
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:8] != CHECKPOINT_MAGIC:
        raise FormatError(f"{path}: not a grid checkpoint (bad magic)")
    try:
        nx, ny, nz = struct.unpack_from("<3I", raw, 8)
        box = struct.unpack_from("<6f", raw, 20)
    except struct.error as e:
        raise FormatError(f"{path}: truncated header") from e
    count = nx * ny * nz * 4
    body = raw[44:]
    if len(body) != 4 * count:
        raise FormatError(f"{path}: expected {count} parameters, found {len(body) // 4}")
    params = np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(nx, ny, nz, 4)
    return RadianceGrid(box[:3], box[3:], params)
