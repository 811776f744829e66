"""Render the default rig and write color, depth and fused sampling maps for each training view.

    python scripts/make_probmaps.py --out runs/probmaps --beta 0.25
"""

import argparse
from pathlib import Path

import numpy as np

from raysamp import io
from raysamp.probmap import depth_std_map, fuse, normalize_map, pixel_std_map
from raysamp.scene import default_rig, default_scene, render_ground_truth


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="runs/probmaps")
    ap.add_argument("--beta", type=float, default=0.25)
    ap.add_argument("--n", type=int, default=3)
    args = ap.parse_args()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    spec = default_scene()
    train_cams, _ = default_rig()
    for i, cam in enumerate(train_cams):
        img, depth = render_ground_truth(spec, cam)
        raw_pc = pixel_std_map(img, args.n)
        pc = normalize_map(raw_pc, "pixel")
        pd = normalize_map(depth_std_map(depth, args.n), "depth")
        fused = fuse(pc, pd, args.beta)
        io.write_png(out / f"view{i}.png", img)
        for name, m in (("pc", pc), ("pd", pd), ("fused", fused)):
            io.write_pfm(out / f"view{i}.{name}.pfm", m.values)
            io.write_png(out / f"view{i}.{name}.png", io.heatmap(m.values))
        floor = np.mean(pc.values <= pc.s / raw_pc.max() * (1 + 1e-9))
        share = pc.values[pc.values > 0.05].sum() / pc.values.sum()
        print(f"view {i}: s_pc={pc.s:.2e} s_pd={pd.s:.2e} "
              f"pixels at floor {100 * floor:.1f}%  mass on pixels > 0.05: {100 * share:.1f}%")


if __name__ == "__main__":
    main()
