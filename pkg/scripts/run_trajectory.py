"""Trajectory benchmark: generate the punctured-grid walks, evaluate every method, print medians.

    python scripts/run_trajectory.py --seeds 5 --out runs/trajectory
"""

import argparse
import time
from dataclasses import replace

from sheaflab import io as sio
from sheaflab.trajectory import METHODS, NsdConfig, evaluate, gen_punctured_grid, gen_trajectories


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--data-seed", type=int, default=0)
    ap.add_argument("--epochs", type=int, default=None)
    ap.add_argument("--methods", nargs="+", default=list(METHODS), choices=METHODS)
    ap.add_argument("--out", default="runs/trajectory")
    args = ap.parse_args()

    grid = gen_punctured_grid()
    data = gen_trajectories(grid, 250, 10, 0.8, seed=args.data_seed)
    cfg = NsdConfig() if args.epochs is None else replace(NsdConfig(), epochs=args.epochs)
    t0 = time.perf_counter()
    report = evaluate(args.methods, grid, data, seeds=range(args.seeds), cfg=cfg, out_dir=args.out)
    sio.save_dataset(data, f"{args.out}/trajectories.jsonl")
    print(f"chance {report['chance']:.3f}   ({time.perf_counter() - t0:.0f} s)")
    print(f"{'method':<16}{'overall':>9}{'harmonic':>10}{'curl':>7}")
    for m, acc in report["median"].items():
        print(f"{m:<16}{acc['overall']:>9.3f}{acc['harmonic']:>10.3f}{acc['curl']:>7.3f}")


if __name__ == "__main__":
    main()
