"""How closely a voxelized scene reproduces the analytic renders, per grid resolution.

    python scripts/ground_truth_sweep.py --res 32 64 128
"""

import argparse

from raysamp.metrics import psnr, ssim
from raysamp.renderer import render_image
from raysamp.scene import default_rig, default_scene, render_ground_truth, voxelize


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--res", type=int, nargs="+", default=[32, 64, 128])
    args = ap.parse_args()

    spec = default_scene()
    train_cams, held = default_rig()
    cams = list(train_cams) + list(held)
    gts = [render_ground_truth(spec, c)[0] for c in cams]
    for r in args.res:
        grid = voxelize(spec, (r, r, r))
        scores = []
        for cam, gt in zip(cams, gts):
            img, _ = render_image(grid, cam, 4 * r, spec.background)
            scores.append((psnr(img, gt), ssim(img, gt)))
        text = "  ".join(f"{p:6.2f} dB/{s:.3f}" for p, s in scores)
        print(f"{r:4d}^3, K={4 * r:4d}: {text}")


if __name__ == "__main__":
    main()
