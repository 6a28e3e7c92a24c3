"""Experiment plumbing shared by the CLI and the scripts: JSON system configs,
error evaluation against the reference, step-count search and CSV rows."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import dataclass, fields

import numpy as np

from .integrators import MethodSpec, propagate
from .pulses import ChirpParams, GaussianParams, chirp_amax, chirp_xy, constant_control, gaussian_xy, pulse_control
from .reference import ReferenceConfig, propagator_error, reference_result
from .spin_algebra import InteractionTensor
from .systems import OFFSETS_HZ, J_GENERAL_HZ, J_ISO_HZ, SpinSystem, coupling_matrix_hz, offsets_to_z

ERROR_NORM = "fro"


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


# ---------------------------------------------------------------------------
# configs


def _pair_key(key) -> tuple:
    if isinstance(key, (tuple, list)):
        j, k = key
    else:
        j, k = (int(p) for p in str(key).replace(",", "-").split("-"))
    if j == k:
        raise ConfigError(f"self-coupling {key!r}")
    return int(j), int(k)


def _pairs(d: dict) -> dict:
    return {_pair_key(k): float(v) for k, v in d.items()}


def _per_spin(val, M, name):
    arr = np.broadcast_to(np.asarray(val, dtype=float), (M,))
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name} must be finite")
    return arr


_GENERAL_KEYS = ("XX", "YY", "ZZ", "XY", "XZ", "YZ", "YX", "ZX", "ZY")

SYSTEM_DEFAULTS = {
    "coupling": "isotropic",
    "pulse": "chirp",
    "offsets_kHz": [o / 1e3 for o in OFFSETS_HZ],
    "couplings_Hz": {f"{j}-{k}": v for (j, k), v in J_ISO_HZ.items()},
    "T_ms": 10.0,
    "tau_p_ms": 10.0,
    "eta": 40,
    "phi0_rad": 0.0,
    "delta_f_kHz": 30.0,
    "q0": 5.0,
}


def example_system_config(name: str) -> dict:
    """Config dicts for the worked examples: 1i, 1ii, 1iii, 2i, 2ii."""
    base = dict(SYSTEM_DEFAULTS)
    if name == "1i":
        base["pulse"] = "free"
    elif name == "1ii":
        base.update(pulse="gaussian", eta=2, gaussian_theta_rad=math.pi, gaussian_omega_Hz=OFFSETS_HZ[0])
    elif name == "1iii":
        base["a_max_rad_s"] = 2 * math.pi * 1545.0
    elif name in ("2i", "2ii"):
        mixed = name == "2ii"
        base.update(coupling="general", phi0_rad=[math.pi, math.pi / 6, -math.pi / 6],
                    delta_f_kHz=[30.0, 15.0, 45.0], a_max_rad_s=2 * math.pi * 1545.0)
        base["couplings_Hz"] = {
            key: {f"{j}-{k}": v[i] for (j, k), v in J_GENERAL_HZ.items()}
            for i, key in enumerate(_GENERAL_KEYS) if mixed or key[0] == key[1]
        }
    else:
        raise ConfigError(f"unknown example {name!r}")
    return base


def build_system(cfg: dict) -> SpinSystem:
    """SpinSystem from a config dict with unit-suffixed fields (see README)."""
    if "example" in cfg:
        merged = example_system_config(str(cfg["example"]))
        merged.update({k: v for k, v in cfg.items() if k != "example"})
        cfg = merged
    else:
        cfg = {**SYSTEM_DEFAULTS, **cfg}
    try:
        offsets_hz = 1e3 * np.asarray(cfg["offsets_kHz"], dtype=float)
        M = offsets_hz.size
        T = 1e-3 * float(cfg["T_ms"])
        tau = 1e-3 * float(cfg["tau_p_ms"])
        eta = int(cfg["eta"])
        if cfg["coupling"] == "isotropic":
            C = InteractionTensor.isotropic(coupling_matrix_hz(M, _pairs(cfg["couplings_Hz"])))
        elif cfg["coupling"] == "general":
            blocks = {}
            for key, pairs in cfg["couplings_Hz"].items():
                if key.upper() not in _GENERAL_KEYS:
                    raise ConfigError(f"unknown coupling block {key!r}")
                blocks[key.upper()] = coupling_matrix_hz(M, _pairs(pairs))
            C = InteractionTensor.from_blocks(M, blocks)
        else:
            raise ConfigError(f"unknown coupling kind {cfg['coupling']!r}")
        z = offsets_to_z(offsets_hz)
        pulse = cfg["pulse"]
        if pulse == "free":
            ctrl = constant_control(np.stack([np.zeros(M), np.zeros(M), z]), T=T)
        elif pulse == "gaussian":
            params = GaussianParams(theta=float(cfg.get("gaussian_theta_rad", math.pi)), eta=eta,
                                    omega=float(cfg.get("gaussian_omega_Hz", offsets_hz[0])), tau_p=tau,
                                    phi0=float(cfg["phi0_rad"]))
            ctrl = pulse_control(lambda t: gaussian_xy(params, t, clip=False), z, T, label="gaussian")
        elif pulse == "chirp":
            df = 1e3 * _per_spin(cfg["delta_f_kHz"], M, "delta_f_kHz")
            phi = _per_spin(cfg["phi0_rad"], M, "phi0_rad")
            if cfg.get("a_max_rad_s") is not None:
                amax = _per_spin(cfg["a_max_rad_s"], M, "a_max_rad_s")
            else:
                amax = np.array([chirp_amax(d, tau, float(cfg["q0"])) for d in df])
            params = [ChirpParams(A_max=float(amax[m]), delta_f=float(df[m]), tau_p=tau, phi0=float(phi[m]), eta=eta)
                      for m in range(M)]
            if cfg["coupling"] == "isotropic" and len(set(params)) == 1:
                ctrl = pulse_control(lambda t, p=params[0]: chirp_xy(p, t, clip=False), z, T, label="chirp")
            else:
                ctrl = pulse_control([lambda t, p=p: chirp_xy(p, t, clip=False) for p in params], z, T, label="chirp-per-spin")
        else:
            raise ConfigError(f"unknown pulse {pulse!r}")
    except ConfigError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid system config: {exc}") from exc
    return SpinSystem(ctrl, C, T, name=str(cfg.get("name", cfg["pulse"])))


_SYSTEMS: dict = {}


def cached_system(cfg: dict) -> SpinSystem:
    """build_system memoised on the canonical JSON of the config, so references are reused."""
    key = json.dumps(cfg, sort_keys=True, default=str)
    if key not in _SYSTEMS:
        _SYSTEMS[key] = build_system(cfg)
    return _SYSTEMS[key]


def method_spec(entry) -> MethodSpec:
    if isinstance(entry, str):
        entry = {"name": entry}
    try:
        asg = entry.get("assignment")
        return MethodSpec(entry["name"], entry.get("quadrature"), None, tuple(asg) if asg else None)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid method entry {entry!r}: {exc}") from exc


def reference_config(cfg: dict | None) -> ReferenceConfig:
    cfg = cfg or {}
    try:
        return ReferenceConfig(**cfg)
    except TypeError as exc:
        raise ConfigError(f"invalid reference config: {exc}") from exc


# ---------------------------------------------------------------------------
# rows


@dataclass(frozen=True)
class SweepRow:
    method: str
    quadrature: str
    h: float
    N: int
    error: float
    one_qubit: int
    two_qubit: int
    depth_measured: int
    depth_closed_form: float
    qvolume: int
    wall_time_s: float


COLUMNS = tuple(f.name for f in fields(SweepRow))


def evaluate(spec: MethodSpec, system: SpinSystem, N: int, U_ref: np.ndarray, norm: str = ERROR_NORM,
             circuit: bool = True) -> SweepRow:
    t0 = time.perf_counter()
    res = propagate(spec, system, N=N, build_circuit=circuit and spec.name != "dense_theta2_mixed")
    wall = time.perf_counter() - t0
    err = propagator_error(res.U, U_ref, norm)
    c = res.cost
    nan = float("nan")
    return SweepRow(spec.name, spec.quadrature, system.T / N, N, err,
                    c.one_qubit if c else -1, c.two_qubit if c else -1,
                    c.depth_measured if c else -1,
                    float(c.depth_closed_form) if c and c.depth_closed_form is not None else nan,
                    c.qvolume if c else -1, wall)


def error_at(spec: MethodSpec, system: SpinSystem, N: int, U_ref: np.ndarray, norm: str = ERROR_NORM) -> float:
    res = propagate(spec, system, N=N, build_circuit=False)
    return propagator_error(res.U, U_ref, norm)


def steps_for_accuracy(spec: MethodSpec, system: SpinSystem, target: float, U_ref: np.ndarray,
                       norm: str = ERROR_NORM, n_start: int = 8, max_solves: int = 40,
                       n_max: int = 2 ** 20) -> tuple:
    """Smallest N with error <= target, assuming error decreases with N.

    Doubles from ``n_start`` to bracket, then bisects.  Returns (N, error,
    solves).  Raises RuntimeError if the budget is exhausted.
    """
    solves = 0
    cache = {}

    def err(n):
        nonlocal solves
        if n not in cache:
            if solves >= max_solves:
                raise RuntimeError(f"step search exceeded {max_solves} solves")
            solves += 1
            cache[n] = error_at(spec, system, n, U_ref, norm)
        return cache[n]

    hi = max(1, n_start)
    if err(hi) <= target:
        while hi > 1 and err(hi // 2) <= target:
            hi //= 2
        lo = hi // 2  # fails, or 0 when N = 1 already suffices
    else:
        lo = hi
        while True:
            if hi >= n_max:
                raise RuntimeError(f"{spec.label} did not reach {target:g} by N={n_max}")
            lo, hi = hi, 2 * hi
            if err(hi) <= target:
                break
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if err(mid) <= target:
            hi = mid
        else:
            lo = mid
    return hi, cache[hi], solves


def _fmt(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows, columns=None) -> str:
    """CSV text; floats use repr so parsing restores them bit-exactly."""
    rows = list(rows)
    if columns is None:
        columns = COLUMNS if rows and isinstance(rows[0], SweepRow) else tuple(rows[0].keys()) if rows else COLUMNS
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        d = r.__dict__ if isinstance(r, SweepRow) else r
        w.writerow([_fmt(d[c]) for c in columns])
    return buf.getvalue()


def _parse(v: str):
    for conv in (int, float):
        try:
            return conv(v)
        except ValueError:
            pass
    return v


def csv_to_rows(text: str) -> list:
    """Inverse of rows_to_csv: SweepRow objects when the header matches, dicts otherwise."""
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    out = []
    for rec in reader:
        d = {k: _parse(v) for k, v in zip(header, rec)}
        if tuple(header) == COLUMNS:
            d["method"], d["quadrature"] = str(d["method"]), str(d["quadrature"])
            d["h"], d["error"], d["wall_time_s"] = float(d["h"]), float(d["error"]), float(d["wall_time_s"])
            d["depth_closed_form"] = float(d["depth_closed_form"])
            out.append(SweepRow(**d))
        else:
            out.append(d)
    return out


def reference_for(system: SpinSystem, cfg: ReferenceConfig | None = None) -> np.ndarray:
    return reference_result(system, cfg=cfg or ReferenceConfig()).U


def random_isotropic(M: int, rng: np.random.Generator, hin_target: float) -> InteractionTensor:
    """Random symmetric isotropic coupling scaled so that ||1/2 S^T C S||_F = hin_target."""
    from .systems import hin_norm

    A = rng.uniform(0.0, 1.0, size=(M, M))
    A = np.triu(A, 1)
    A = A + A.T
    C = InteractionTensor.isotropic(A)
    if hin_target == 0:
        return InteractionTensor.isotropic(np.zeros((M, M)))
    return C.scaled(hin_target / hin_norm(C))


def loglog_slope(x, y) -> float:
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])
