"""Θ₂ depth against interaction strength, extended into the coupling-dominated regime.

Prints the CLI's coupling CSV plus log-log slopes of depth vs ||H_in|| for each
method.  The default grid reaches 3.2e5 rad/s and takes about ten minutes on
one core; pass --quick for the small-norm part only.
"""

import argparse
from collections import defaultdict

from spinmagnus.bench_cli import cmd_coupling
from spinmagnus.sweeps import csv_to_rows, loglog_slope

SMALL = [2500, 5000, 10000, 20000]
LARGE = [40000, 80000, 160000, 320000]


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--quick", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--methods", nargs="+", default=["yoshida_theta2_iso", "strang_theta1"])
    args = p.parse_args(argv)
    grid = SMALL if args.quick else SMALL + LARGE
    cfg = {"system": {"example": "1i"}, "hin_grid": grid, "methods": args.methods, "targets": [0.1],
           "baseline": args.methods[0]}
    text = cmd_coupling(cfg, seed=args.seed, threads=args.threads)
    print(text)
    by_method = defaultdict(list)
    for r in csv_to_rows(text):
        by_method[r["method"]].append((r["hin_norm"], r["depth_measured"]))
    for m, pts in by_method.items():
        hin, depth = zip(*pts)
        line = f"{m}: slope over all {loglog_slope(hin, depth):.2f}"
        big = [(h, d) for h, d in pts if h >= 40000]
        if len(big) >= 2:
            line += f", over ||H_in|| >= 4e4 {loglog_slope(*zip(*big)):.2f}"
        print(line)


if __name__ == "__main__":
    main()
