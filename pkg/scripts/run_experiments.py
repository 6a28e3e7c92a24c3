"""Run the bundled experiment configs through the CLI and write CSVs to results/.

    python scripts/run_experiments.py                 # everything
    python scripts/run_experiments.py bandwidth sweep # a subset, by config stem or command
"""

import argparse
import sys
import time
from pathlib import Path

from spinmagnus.bench_cli import run

HERE = Path(__file__).resolve().parent
CONFIGS = HERE / "configs"

# config stem -> subcommand
JOBS = {
    "simulate_strang_1i": "simulate",
    "convergence_1iii": "sweep",
    "convergence_2ii": "sweep",
    "gl_orders_1iii": "sweep",
    "bandwidth": "bandwidth",
    "coupling": "coupling",
    "observables_chirp": "observables",
    "observables_gaussian": "observables",
}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("only", nargs="*", help="config stems or subcommands to run")
    p.add_argument("--out-dir", default="results")
    p.add_argument("--threads", type=int, default=1)
    args = p.parse_args(argv)
    selected = {k: v for k, v in JOBS.items() if not args.only or k in args.only or v in args.only}
    if not selected:
        p.error(f"nothing matches {args.only}; known: {sorted(JOBS)}")
    out_dir = Path(args.out_dir)
    status = 0
    for stem, cmd in selected.items():
        t0 = time.perf_counter()
        argv_cli = [cmd, "--config", str(CONFIGS / f"{stem}.json"), "--out", str(out_dir / f"{stem}.csv")]
        if cmd in ("sweep", "bandwidth", "coupling"):
            argv_cli += ["--threads", str(args.threads)]
        code = run(argv_cli)
        print(f"{stem:24s} {cmd:12s} exit {code}  {time.perf_counter() - t0:7.1f} s", flush=True)
        status = status or code
    # closed-form costs need no config
    run(["cost-table", "--M", "3", "--M", "4", "--M", "6", "--N", "1", "--N", "100",
         "--out", str(out_dir / "cost_table.csv")])
    return status


if __name__ == "__main__":
    sys.exit(main())
