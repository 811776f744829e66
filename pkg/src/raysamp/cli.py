"""Command-line interface.

    raysamp probmap   --image IMG [--depth PFM] [--n 3] [--beta B] --out-prefix P
    raysamp render-gt --scene S --out DIR [--views 0,1]
    raysamp train     --scene S --strategy fused --iters N --batch M --seed X --out DIR
    raysamp eval      --checkpoint C --scene S --views 3 [--out DIR]
    raysamp compare   --scene S --strategies uniform,fused --iters N --seed X --out DIR

Training options may also come from `--config FILE` (one `key = value` per
line, `#` comments); explicit flags win over the file. Exit codes: 0 success,
2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import io
from . import probmap as pm
from .metrics import psnr, ssim
from .optim import NumericalError
from .renderer import render_image
from .scene import render_ground_truth
from .trainer import (STRATEGIES, TrainConfig, canonical_strategy, compare_strategies,
                      train, write_comparison_csv)

log = logging.getLogger("raysamp")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

# flag name -> TrainConfig field
TRAIN_FLAGS = {
    "iters": "iterations", "batch": "batch_size", "lr": "lr", "lr_halve_at": "lr_halve_at",
    "samples": "samples_per_ray", "eval_samples": "eval_samples", "strategy": "strategy",
    "n": "window", "s_coef": "s_coef", "perceptual": "perceptual",
    "perceptual_weight": "perceptual_weight", "seed": "seed", "deterministic": "deterministic",
    "depth_refresh": "depth_refresh", "eval_every": "eval_every", "grid_res": "grid_resolution",
    "init_density": "init_density", "tv_weight": "tv_weight", "jitter": "jitter",
    "beta_max": "beta_max",
}


class UsageError(Exception):
    pass


def _parse_bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise UsageError(f"not a boolean: {text!r}")


def read_config_file(path):
    """Parse `key = value` lines into a dict of TrainConfig fields (strings converted)."""
    types = {"int": int, "float": float, "bool": _parse_bool, "str": str}
    field_types = TrainConfig.field_types()
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            key = key.replace("-", "_")
            key = TRAIN_FLAGS.get(key, key)
            if key not in field_types:
                raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = types[field_types[key]](value)
    return out


def resolve_config(args, **forced):
    values = read_config_file(args.config) if getattr(args, "config", None) else {}
    for flag, name in TRAIN_FLAGS.items():
        v = getattr(args, flag, None)
        if v is not None:
            values[name] = v
    values.update({k: v for k, v in forced.items() if v is not None})
    try:
        return TrainConfig(**values)
    except ValueError as e:
        raise UsageError(str(e)) from e


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 16), b""):
            h.update(block)
    return h.hexdigest()


def write_manifest(path, command, config, inputs):
    manifest = {"command": command, "config": config,
                "inputs": {str(p): _sha256(p) for p in inputs if p}}
    text = json.dumps(manifest, indent=2, sort_keys=True)
    print(json.dumps({"command": command, "config": config}, sort_keys=True))
    Path(path).write_text(text + "\n")


def _parse_views(text, count):
    if text is None:
        return None
    try:
        views = [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise UsageError(f"bad view list {text!r}") from e
    if not views:
        raise UsageError("empty view list")
    bad = [v for v in views if not 0 <= v < count]
    if bad:
        raise UsageError(f"view index out of range: {bad} (scene has {count} cameras)")
    return views


def _thread_limit(args):
    n = getattr(args, "threads", None)
    if n is None and os.environ.get("RAYSAMP_THREADS"):
        n = int(os.environ["RAYSAMP_THREADS"])
    if getattr(args, "deterministic", False):
        n = 1
    if n is None:
        return nullcontext()
    from threadpoolctl import threadpool_limits
    return threadpool_limits(n)


# --- subcommands ------------------------------------------------------------

def cmd_probmap(args):
    if args.beta is not None and args.depth is None:
        raise UsageError("--beta requires --depth")
    image = io.read_png(args.image)
    prefix = args.out_prefix
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    pc = pm.normalize_map(pm.pixel_std_map(image, args.n), "pixel")
    io.write_pfm(f"{prefix}.pc.pfm", pc.values)
    io.write_png(f"{prefix}.pc.png", io.heatmap(pc.values))
    if args.depth is not None:
        depth = io.read_pfm(args.depth)
        if depth.ndim != 2 or depth.shape != pc.shape:
            raise io.FormatError("depth map must be single channel and match the image size")
        pd = pm.normalize_map(pm.depth_std_map(depth, args.n), "depth")
        io.write_pfm(f"{prefix}.pd.pfm", pd.values)
        io.write_png(f"{prefix}.pd.png", io.heatmap(pd.values))
        if args.beta is not None:
            fused = pm.fuse(pc, pd, args.beta)
            io.write_pfm(f"{prefix}.fused.pfm", fused.values)
            io.write_png(f"{prefix}.fused.png", io.heatmap(fused.values))
    write_manifest(f"{prefix}.manifest.json", "probmap",
                   {"n": args.n, "beta": args.beta, "image": args.image, "depth": args.depth},
                   [args.image, args.depth])
    return EXIT_OK


def cmd_render_gt(args):
    spec, train_cams, held = io.load_scene(args.scene)
    cams = io.all_cameras(train_cams, held)
    views = _parse_views(args.views, len(cams)) or list(range(len(cams)))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for i in views:
        img, depth = render_ground_truth(spec, cams[i])
        io.write_png(out / f"view{i:03d}.png", img)
        io.write_pfm(out / f"view{i:03d}.depth.pfm", depth)
    write_manifest(out / "manifest.json", "render-gt", {"scene": args.scene, "views": views},
                   [args.scene])
    return EXIT_OK


def cmd_train(args):
    config = resolve_config(args)
    spec, train_cams, held = io.load_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.json", "train", config.to_dict(), [args.scene, args.config])
    grid, curve = train(spec, train_cams, held, config)
    curve.write_csv(out / "curve.csv")
    io.save_checkpoint(grid, out / "grid.ckpt")
    if curve.records:
        last = curve.records[-1]
        print(f"final iter={last.iteration} psnr={last.psnr:.3f} ssim={last.ssim:.4f}")
    return EXIT_OK


def cmd_eval(args):
    spec, train_cams, held = io.load_scene(args.scene)
    cams = io.all_cameras(train_cams, held)
    views = _parse_views(args.views, len(cams))
    if views is None:
        raise UsageError("--views is required")
    grid = io.load_checkpoint(args.checkpoint)
    if not (np.allclose(grid.aabb_min, spec.aabb_min, atol=1e-6)
            and np.allclose(grid.aabb_max, spec.aabb_max, atol=1e-6)):
        raise UsageError("checkpoint bounds do not match the scene bounding box")
    rows = []
    for i in views:
        gt, _ = render_ground_truth(spec, cams[i])
        img, _ = render_image(grid, cams[i], args.samples, spec.background)
        rows.append((str(i), psnr(img, gt), ssim(img, gt)))
    rows.append(("mean", float(np.mean([r[1] for r in rows])), float(np.mean([r[2] for r in rows]))))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "eval.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["view", "psnr", "ssim"])
        for view, p, s in rows:
            w.writerow([view, repr(p), repr(s)])
            print(f"{view:>6} psnr={p:.3f} ssim={s:.4f}")
    write_manifest(out / "eval_manifest.json", "eval",
                   {"checkpoint": args.checkpoint, "views": views, "samples": args.samples},
                   [args.checkpoint, args.scene])
    return EXIT_OK


def cmd_compare(args):
    names = []
    for raw in args.strategies.split(","):
        raw = raw.strip()
        if not raw:
            continue
        try:
            name = canonical_strategy(raw)
        except ValueError as e:
            raise UsageError(str(e)) from e
        if name in names:
            print(f"warning: duplicate strategy {raw!r} ignored", file=sys.stderr)
            continue
        names.append(name)
    if not names:
        raise UsageError("no strategies given")
    config = resolve_config(args, strategy=names[0])
    spec, train_cams, held = io.load_scene(args.scene)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.json", "compare", {**config.to_dict(), "strategies": names},
                   [args.scene, args.config])
    rows, curves, threshold = compare_strategies(spec, train_cams, held, config, names)
    for row, curve in zip(rows, curves):
        curve.write_csv(out / f"curve_{row.strategy.replace('+', '_')}.csv")
    write_comparison_csv(rows, out / "comparison.csv")
    print(f"threshold psnr={threshold:.3f}")
    for r in rows:
        print(f"{r.strategy:>15} iters_to_thresh={r.iters_to_thresh} final_psnr={r.final_psnr:.3f}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def _add_train_flags(p, with_strategy=True):
    p.add_argument("--scene", required=True)
    p.add_argument("--config")
    if with_strategy:
        p.add_argument("--strategy", help="one of: " + ", ".join(STRATEGIES))
    p.add_argument("--iters", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--lr-halve-at", type=float)
    p.add_argument("--samples", type=int)
    p.add_argument("--eval-samples", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--depth-refresh", type=int)
    p.add_argument("--grid-res", type=int)
    p.add_argument("--init-density", type=float)
    p.add_argument("--tv-weight", type=float)
    p.add_argument("--s-coef", type=float)
    p.add_argument("--beta-max", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--perceptual", action="store_const", const=True)
    p.add_argument("--perceptual-weight", type=float)
    p.add_argument("--no-jitter", dest="jitter", action="store_const", const=False)
    p.add_argument("--deterministic", action="store_const", const=True)
    p.add_argument("--out", required=True)


def build_parser():
    parser = argparse.ArgumentParser(prog="raysamp", description=__doc__.split("\n")[0])
    parser.add_argument("--threads", type=int, help="cap worker threads (env RAYSAMP_THREADS)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("probmap", help="sampling maps for an image (and depth map)")
    p.add_argument("--image", required=True)
    p.add_argument("--depth")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--beta", type=float)
    p.add_argument("--out-prefix", required=True)
    p.set_defaults(func=cmd_probmap)

    p = sub.add_parser("render-gt", help="analytic ground-truth images and depth maps")
    p.add_argument("--scene", required=True)
    p.add_argument("--views")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_render_gt)

    p = sub.add_parser("train", help="train a voxel grid with one sampling strategy")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="PSNR/SSIM of a checkpoint on selected views")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scene", required=True)
    p.add_argument("--views")
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compare", help="train every strategy with equal seeds and tabulate")
    _add_train_flags(p, with_strategy=False)
    p.add_argument("--strategies", required=True)
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        with _thread_limit(args):
            return args.func(args)
    except NumericalError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except pm.DegenerateMapError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, io.FormatError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
