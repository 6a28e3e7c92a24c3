"""Command-line harness for the accuracy, cost and observable experiments.

Subcommands: simulate, sweep, bandwidth, coupling, observables, cost-table.
Configs are JSON files whose physical fields carry their unit in the name
(``offsets_kHz``, ``couplings_Hz``, ``T_ms``); everything internal is rad/s
and seconds.

CSV columns
  simulate, sweep:
    method, quadrature, h, N, error, one_qubit, two_qubit, depth_measured,
    depth_closed_form, qvolume, wall_time_s
    (h in s; error is the Frobenius norm of U - U_ref; depth_closed_form is
    nan where no closed form exists; -1 marks counts of dense-only methods)
  bandwidth:
    delta_f_kHz, target, method, quadrature, N, h, error, depth_measured
  coupling:
    hin_norm, target, method, quadrature, N, depth_measured, ratio
  observables:
    t, X1, Y1, Z1, X2, Y2, Z2, ...

Exit codes: 0 success, 2 config error, 3 reference or step search failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import sweeps
from .circuit import closed_form_cost
from .reference import ReferenceError, observables
from .sweeps import ConfigError

EXIT_OK, EXIT_CONFIG, EXIT_ORACLE = 0, 2, 3


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _n_grid(cfg: dict, T: float) -> list:
    if "N" in cfg:
        grid = cfg["N"] if isinstance(cfg["N"], list) else [cfg["N"]]
        grid = [int(n) for n in grid]
    elif "h_ms" in cfg:
        hs = cfg["h_ms"] if isinstance(cfg["h_ms"], list) else [cfg["h_ms"]]
        grid = [max(1, round(T / (1e-3 * float(h)))) for h in hs]
    else:
        raise ConfigError("need an N grid or an h_ms grid")
    if not grid or any(n < 1 for n in grid):
        raise ConfigError("step counts must be positive")
    return grid


def _methods(cfg: dict) -> list:
    entries = cfg.get("methods") or ([cfg["method"]] if "method" in cfg else None)
    if not entries:
        raise ConfigError("no methods given")
    return [sweeps.method_spec(m) for m in entries]


def _map(fn, items, threads: int):
    """Ordered map; a process pool when threads > 1."""
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def _timing(cfg, row):
    if cfg.get("timing", True):
        return row
    return sweeps.SweepRow(**{**row.__dict__, "wall_time_s": 0.0})


# --- sweep/simulate --------------------------------------------------------


def _sweep_point(args):
    cfg, m_entry, N = args
    system = sweeps.cached_system(cfg.get("system", {}))
    U_ref = sweeps.reference_for(system, sweeps.reference_config(cfg.get("reference")))
    row = sweeps.evaluate(sweeps.method_spec(m_entry), system, N, U_ref, cfg.get("norm", sweeps.ERROR_NORM))
    return _timing(cfg, row)


def cmd_sweep(cfg: dict, threads: int = 1) -> str:
    system = sweeps.cached_system(cfg.get("system", {}))
    _methods(cfg)
    grid = _n_grid(cfg, system.T)
    entries = cfg.get("methods") or [cfg["method"]]
    # reference once in the parent so serial runs share it
    sweeps.reference_for(system, sweeps.reference_config(cfg.get("reference")))
    points = [(cfg, m, N) for m in entries for N in grid]
    return sweeps.rows_to_csv(_map(_sweep_point, points, threads))


def cmd_simulate(cfg: dict, state_out: str | None = None) -> str:
    system = sweeps.build_system(cfg.get("system", {}))
    specs = _methods(cfg)
    if len(specs) != 1:
        raise ConfigError("simulate takes exactly one method")
    grid = _n_grid(cfg, system.T)
    if len(grid) != 1:
        raise ConfigError("simulate takes exactly one step count")
    U_ref = sweeps.reference_for(system, sweeps.reference_config(cfg.get("reference")))
    row = _timing(cfg, sweeps.evaluate(specs[0], system, grid[0], U_ref, cfg.get("norm", sweeps.ERROR_NORM)))
    if state_out:
        from .integrators import propagate

        U = propagate(specs[0], system, N=grid[0], build_circuit=False).U
        psi = U[:, 0]
        np.savetxt(state_out, np.column_stack([psi.real, psi.imag]), header="re im", fmt="%.17g")
    return sweeps.rows_to_csv([row])


# --- bandwidth ---------------------------------------------------------------


def _bandwidth_point(args):
    cfg, df, m_entry, target = args
    # amplitude follows the bandwidth through Q0 unless pinned by the config
    sys_cfg = {**cfg.get("system", {}), "delta_f_kHz": df}
    if not cfg.get("fixed_amplitude", False):
        sys_cfg["a_max_rad_s"] = None
    system = sweeps.cached_system(sys_cfg)
    spec = sweeps.method_spec(m_entry)
    U_ref = sweeps.reference_for(system, sweeps.reference_config(cfg.get("reference")))
    norm = cfg.get("norm", sweeps.ERROR_NORM)
    N, err, _ = sweeps.steps_for_accuracy(spec, system, target, U_ref, norm,
                                          n_start=int(cfg.get("n_start", 64)),
                                          max_solves=int(cfg.get("max_solves", 40)))
    depth = sweeps.evaluate(spec, system, N, U_ref, norm).depth_measured
    return {"delta_f_kHz": float(df), "target": float(target), "method": spec.name,
            "quadrature": spec.quadrature, "N": N, "h": system.T / N, "error": err, "depth_measured": depth}


def cmd_bandwidth(cfg: dict, threads: int = 1) -> str:
    grid = cfg.get("delta_f_kHz_grid")
    targets = cfg.get("targets", [0.1])
    if not grid or any(not math.isfinite(float(x)) or float(x) < 0 for x in grid):
        raise ConfigError("delta_f_kHz_grid must be a non-empty list of finite, nonnegative values")
    entries = cfg.get("methods") or ["yoshida_theta2_iso"]
    for m in entries:
        sweeps.method_spec(m)
    points = [(cfg, float(df), m, float(t)) for df in grid for m in entries for t in targets]
    rows = _map(_bandwidth_point, points, threads)
    return sweeps.rows_to_csv(rows, ("delta_f_kHz", "target", "method", "quadrature", "N", "h", "error",
                                     "depth_measured"))


# --- coupling ----------------------------------------------------------------


def _coupling_point(args):
    cfg, idx, hin, m_entry, target, seed = args
    system = _coupling_system(cfg, hin, seed, idx)
    spec = sweeps.method_spec(m_entry)
    U_ref = sweeps.reference_for(system, sweeps.reference_config(cfg.get("reference")))
    norm = cfg.get("norm", sweeps.ERROR_NORM)
    N, err, _ = sweeps.steps_for_accuracy(spec, system, target, U_ref, norm,
                                          n_start=int(cfg.get("n_start", 16)),
                                          max_solves=int(cfg.get("max_solves", 40)))
    depth = sweeps.evaluate(spec, system, N, U_ref, norm).depth_measured
    return {"hin_norm": float(hin), "target": float(target), "method": spec.name, "quadrature": spec.quadrature,
            "N": N, "depth_measured": depth}


def _coupling_system(cfg, hin, seed, idx):
    from .systems import SpinSystem

    key = (json.dumps(cfg.get("system", {}), sort_keys=True), float(hin), int(seed), int(idx))
    if key in _COUPLING_SYSTEMS:
        return _COUPLING_SYSTEMS[key]
    base = sweeps.cached_system(cfg.get("system", {}))
    # one random coupling pattern per seed, rescaled to each grid norm
    rng = np.random.default_rng(int(seed))
    C = sweeps.random_isotropic(base.M, rng, float(hin))
    _COUPLING_SYSTEMS[key] = SpinSystem(base.control, C, base.T, name=f"{base.name}-hin{hin:g}")
    return _COUPLING_SYSTEMS[key]


_COUPLING_SYSTEMS: dict = {}


def cmd_coupling(cfg: dict, seed: int = 0, threads: int = 1) -> str:
    grid = cfg.get("hin_grid")
    if not grid or any(not math.isfinite(float(x)) or float(x) < 0 for x in grid):
        raise ConfigError("hin_grid must be a non-empty list of finite, nonnegative values")
    targets = cfg.get("targets", [0.1])
    entries = cfg.get("methods") or ["yoshida_theta2_iso", "strang_theta1"]
    specs = [sweeps.method_spec(m) for m in entries]
    baseline = cfg.get("baseline", "yoshida_theta2_iso")
    if baseline not in [s.name for s in specs]:
        raise ConfigError("baseline method must be among the methods")
    points = [(cfg, i, float(h), m, float(t), seed) for i, h in enumerate(grid) for m in entries for t in targets]
    rows = _map(_coupling_point, points, threads)
    base_depth = {(r["hin_norm"], r["target"]): r["depth_measured"] for r in rows if r["method"] == baseline}
    for r in rows:
        r["ratio"] = r["depth_measured"] / base_depth[(r["hin_norm"], r["target"])]
    return sweeps.rows_to_csv(rows, ("hin_norm", "target", "method", "quadrature", "N", "depth_measured", "ratio"))


# --- observables -------------------------------------------------------------


def cmd_observables(cfg: dict) -> str:
    system = sweeps.build_system(cfg.get("system", {}))
    samples = int(cfg.get("samples", 101))
    if samples < 2:
        raise ConfigError("need at least two samples")
    method = cfg.get("method")
    spec = sweeps.method_spec(method) if method else None
    t, vals = observables(system, samples=samples, N=cfg.get("N"), method=spec)
    M = system.M
    cols = ["t"] + [f"{a}{k}" for k in range(1, M + 1) for a in "XYZ"]
    rows = []
    for i in range(samples):
        r = {"t": float(t[i])}
        for k in range(M):
            for a, ax in zip("XYZ", range(3)):
                r[f"{a}{k + 1}"] = float(vals[i, ax, k])
        rows.append(r)
    return sweeps.rows_to_csv(rows, cols)


# --- cost table ---------------------------------------------------------------


def cmd_cost_table(methods, M_values, N_values, c_count=None) -> str:
    rows = []
    for m in methods:
        for M in M_values:
            c = M * (M - 1) // 2 if c_count is None else c_count
            for N in N_values:
                nat = closed_form_cost(m, M, N, c_count=c, native_coupling_gates=True)
                dec = closed_form_cost(m, M, N, c_count=c, native_coupling_gates=False)
                rows.append({"method": m, "M": M, "N": N, "C": c,
                             "one_qubit": nat.one_qubit, "two_qubit": nat.two_qubit, "depth": nat.depth_closed_form,
                             "one_qubit_cnot": dec.one_qubit, "cnot": dec.two_qubit, "depth_cnot": dec.depth_closed_form})
    return sweeps.rows_to_csv(rows, tuple(rows[0].keys()))


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="spinmagnus", description=__doc__,
                                formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    for name in ("simulate", "sweep", "bandwidth", "coupling", "observables"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=True, help="JSON config path")
        sp.add_argument("--out", help="CSV output path (stdout if omitted)")
        sp.add_argument("--seed", type=int, default=0, help="seed for random coupling draws")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for grid points")
        if name == "simulate":
            sp.add_argument("--state-out", help="write U|0...0> as (re, im) columns")
    ct = sub.add_parser("cost-table")
    ct.add_argument("--method", action="append", help="trotter | strang | yoshida | modified_yoshida")
    ct.add_argument("--M", type=int, action="append")
    ct.add_argument("--N", type=int, action="append")
    ct.add_argument("--c-count", type=int, help="coupled pairs per block; default M(M-1)/2 (all pairs)")
    ct.add_argument("--config", help="unused; accepted for symmetry")
    ct.add_argument("--out")
    ct.add_argument("--seed", type=int, default=0)
    ct.add_argument("--threads", type=int, default=1)
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "cost-table":
            text = cmd_cost_table(args.method or ["trotter", "strang", "yoshida", "modified_yoshida"],
                                  args.M or [3], args.N or [1], args.c_count)
        else:
            if args.threads < 1:
                raise ConfigError("--threads must be positive")
            cfg = load_config(args.config)
            if args.command == "simulate":
                text = cmd_simulate(cfg, args.state_out)
            elif args.command == "sweep":
                text = cmd_sweep(cfg, args.threads)
            elif args.command == "bandwidth":
                text = cmd_bandwidth(cfg, args.threads)
            elif args.command == "coupling":
                text = cmd_coupling(cfg, args.seed, args.threads)
            else:
                text = cmd_observables(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ReferenceError, RuntimeError) as exc:
        print(f"oracle failure: {exc}", file=sys.stderr)
        return EXIT_ORACLE
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        os.makedirs(os.path.dirname(os.path.abspath(args.out)), exist_ok=True)
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
