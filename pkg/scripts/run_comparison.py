"""Desk-scale ablation: train every sampling strategy on the default scene and tabulate.

    python scripts/run_comparison.py --out runs/ablation
    python scripts/run_comparison.py --strategies uniform,fused --iters 300 --tv-weight 0.01
"""

import argparse
import dataclasses
from pathlib import Path

from raysamp.scene import default_rig, default_scene
from raysamp.trainer import STRATEGIES, compare_strategies, desk_config, write_comparison_csv


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--strategies", default=",".join(STRATEGIES))
    ap.add_argument("--iters", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--tv-weight", type=float)
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()

    overrides = {k: v for k, v in dict(iterations=args.iters, seed=args.seed,
                                       tv_weight=args.tv_weight).items() if v is not None}
    config = desk_config(**overrides)
    names = [s.strip() for s in args.strategies.split(",") if s.strip()]
    train_cams, held = default_rig()
    rows, curves, threshold = compare_strategies(default_scene(), train_cams, held, config, names)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_comparison_csv(rows, out / "comparison.csv")
    for row, curve in zip(rows, curves):
        curve.write_csv(out / f"curve_{row.strategy.replace('+', '_')}.csv")

    print(f"config: {dataclasses.asdict(config)}")
    print(f"threshold = 95% of uniform final = {threshold:.3f} dB\n")
    print(f"{'strategy':>16} {'iters_to_thresh':>16} {'final_psnr':>11} {'final_ssim':>11} {'wall_s':>8}")
    for r in rows:
        its = "-" if r.iters_to_thresh is None else str(r.iters_to_thresh)
        print(f"{r.strategy:>16} {its:>16} {r.final_psnr:>11.3f} {r.final_ssim:>11.4f} {r.wall_ms / 1e3:>8.1f}")


if __name__ == "__main__":
    main()
