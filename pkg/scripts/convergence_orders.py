"""Fit observed orders of convergence from a sweep CSV.

    python scripts/convergence_orders.py results/convergence_1iii.csv [--floor 1e-9]

Points with error below the floor (reference/rounding saturation) are dropped.
"""

import argparse
from collections import defaultdict

from spinmagnus.sweeps import csv_to_rows, loglog_slope


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("csv")
    p.add_argument("--floor", type=float, default=1e-9)
    p.add_argument("--ceiling", type=float, default=0.5, help="drop pre-asymptotic points above this error")
    args = p.parse_args(argv)
    with open(args.csv) as fh:
        rows = csv_to_rows(fh.read())
    groups = defaultdict(list)
    for r in rows:
        if args.floor < r.error < args.ceiling:
            groups[(r.method, r.quadrature)].append((r.N, r.error))
    print(f"{'method':24s} {'quadrature':10s} points  order")
    for (m, q), pts in groups.items():
        if len(pts) < 2:
            print(f"{m:24s} {q:10s} {len(pts):6d}  (too few points in range)")
            continue
        Ns, errs = zip(*sorted(pts))
        print(f"{m:24s} {q:10s} {len(pts):6d}  {-loglog_slope(Ns, errs):5.2f}")


if __name__ == "__main__":
    main()
