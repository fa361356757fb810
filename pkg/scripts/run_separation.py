"""Separation rates of each sheaf family on random labelled graphs.

    python scripts/run_separation.py --trials 50 --nodes 20
"""

import argparse

import numpy as np

from sheaflab.errors import HypothesisViolated
from sheaflab.generators import random_connected_graph, random_labels
from sheaflab.poset import graph_poset
from sheaflab.separation import ClassTask, run_hierarchy

FAMILIES = ("unnormalized", "normalized-sym", "asym-positive", "lying-1d", "lying-ld")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trials", type=int, default=50)
    ap.add_argument("--nodes", type=int, default=20)
    ap.add_argument("--classes", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"{'family':<16}" + "".join(f"{f'{c} classes':>12}" for c in args.classes))
    for fam in FAMILIES:
        cells = []
        for c in args.classes:
            rng = np.random.default_rng([args.seed, c])
            hits = ran = 0
            for t in range(args.trials):
                nodes, edges = random_connected_graph(rng, args.nodes, 0.15)
                G = graph_poset(nodes, edges)
                task = ClassTask(G, 0, random_labels(rng, G.stratum(0), c))
                try:
                    v = run_hierarchy(G, task, fam, seed=args.seed * 10_000 + t)
                except HypothesisViolated:
                    continue
                ran += 1
                hits += bool(v.separable)
            cells.append(f"{hits}/{ran}" if ran else "n/a")
        print(f"{fam:<16}" + "".join(f"{s:>12}" for s in cells))


if __name__ == "__main__":
    main()
