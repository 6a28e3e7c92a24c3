"""Dense oracle: matrix exponentials, high-accuracy reference propagators, error norms
and observable trajectories.

The reference propagator steps the full fourth-order Magnus exponent (with its
commutator) on a fine uniform grid, halving the step until two refinements
agree, and then cross-checks against a Richardson-extrapolated midpoint
exponential scheme, which shares no discretisation with the first method.
All steps are built in batches; the ordered product is a pairwise tree.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass, field

import numpy as np

from .quadrature import gauss_legendre, ordered_lagrange_weights
from .spin_algebra import operator_norm, pauli_stack
from .systems import SpinSystem


class ReferenceError(RuntimeError):
    """The reference construction failed to reach its tolerance."""


def expm_skew(theta: np.ndarray) -> np.ndarray:
    """exp(theta) for skew-Hermitian theta via the eigendecomposition of i*theta.

    Accepts a single matrix or a stack of shape (n, d, d).
    """
    H = 1j * np.asarray(theta)
    H = 0.5 * (H + np.swapaxes(H.conj(), -1, -2))
    w, V = np.linalg.eigh(H)
    return (V * np.exp(-1j * w)[..., None, :]) @ np.swapaxes(V.conj(), -1, -2)


def ordered_product(mats: np.ndarray) -> np.ndarray:
    """mats[n-1] @ ... @ mats[0] by pairwise reduction (index 0 applied first)."""
    mats = np.asarray(mats)
    if mats.shape[0] == 0:
        raise ValueError("empty product")
    while mats.shape[0] > 1:
        n = mats.shape[0]
        if n % 2:
            tail = mats[-1:]
            mats = mats[:-1]
        else:
            tail = None
        mats = mats[1::2] @ mats[0::2]
        if tail is not None:
            mats = np.concatenate([mats, tail])
    return mats[0]


def propagator_error(U: np.ndarray, V: np.ndarray, norm: str = "spectral") -> float:
    """||U - V|| without global-phase alignment; spectral by default, or 'fro'."""
    return operator_norm(np.asarray(U) - np.asarray(V), norm)


def phase_aligned_error(U: np.ndarray, V: np.ndarray, norm: str = "spectral") -> float:
    """min over global phases of ||U - e^{i phi} V||."""
    tr = np.trace(np.asarray(V).conj().T @ np.asarray(U))
    phase = tr / abs(tr) if abs(tr) > 0 else 1.0
    return operator_norm(np.asarray(U) - phase * np.asarray(V), norm)


# ---------------------------------------------------------------------------
# batched dense steppers


def _theta2_batch(system: SpinSystem, t0: float, h: float, n: int, k: int) -> np.ndarray:
    M = system.M
    P = pauli_stack(M)
    rule = gauss_legendre(k, h)
    v = ordered_lagrange_weights(rule)
    W = v - v.T
    starts = t0 + h * np.arange(n)
    nodes = starts[:, None] + rule.knots[None, :]
    F = system.control.flat(nodes.ravel()).reshape(n, k, 3 * M)
    mu = np.einsum("i,nid->nd", rule.weights, F)
    cen = np.einsum("i,nid->nd", rule.weights * (rule.knots - 0.5 * h), F)
    A = np.einsum("nid,ij,nje->nde", F, W, F)
    m = np.arange(M)
    x, y, z = m, M + m, 2 * M + m
    wedge = np.stack([A[:, y, z], A[:, z, x], A[:, x, y]], axis=1)
    r = mu.reshape(n, 3, M) - wedge
    u = -0.5 * cen.reshape(n, 3, M)
    SCS = system.coupling_dense
    rS = np.tensordot(r, P, axes=([1, 2], [0, 1]))
    uS = np.tensordot(u, P, axes=([1, 2], [0, 1]))
    theta = -1j * rS - 0.5j * h * SCS + (uS @ SCS - SCS @ uS)
    return expm_skew(theta)


def _midpoint_batch(system: SpinSystem, t0: float, h: float, n: int) -> np.ndarray:
    M = system.M
    P = pauli_stack(M)
    mids = t0 + h * (np.arange(n) + 0.5)
    e = system.control.evaluate(mids)
    H = np.tensordot(e, P, axes=([1, 2], [0, 1])) + 0.5 * system.coupling_dense
    return expm_skew(-1j * h * H)


def _chunked_propagator(batch, system, t0, t1, N, chunk=8192):
    h = (t1 - t0) / N
    U = np.eye(2 ** system.M, dtype=complex)
    done = 0
    while done < N:
        n = min(chunk, N - done)
        U = ordered_product(batch(system, t0 + done * h, h, n)) @ U
        done += n
    return U


def dense_theta2_propagator(system: SpinSystem, N: int, t0: float = 0.0, t1: float | None = None,
                            k: int = 8) -> np.ndarray:
    """Product of N dense fourth-order Magnus exponentials (integrals by GLk per step)."""
    t1 = system.T if t1 is None else t1
    return _chunked_propagator(lambda s, a, h, n: _theta2_batch(s, a, h, n, k), system, t0, t1, N)


def dense_midpoint_propagator(system: SpinSystem, N: int, t0: float = 0.0,
                              t1: float | None = None) -> np.ndarray:
    t1 = system.T if t1 is None else t1
    return _chunked_propagator(_midpoint_batch, system, t0, t1, N)


def richardson_midpoint(system: SpinSystem, N: int, levels: int = 4, t0: float = 0.0,
                        t1: float | None = None) -> np.ndarray:
    """Midpoint exponential scheme extrapolated over N, 2N, ..., 2^(levels-1) N.

    The scheme is symmetric, so its global error expands in even powers of h
    and each Richardson column removes one of them.
    """
    row = [dense_midpoint_propagator(system, N * 2 ** j, t0, t1) for j in range(levels)]
    for col in range(1, levels):
        fac = 4.0 ** col
        row = [(fac * row[j + 1] - row[j]) / (fac - 1.0) for j in range(len(row) - 1)]
    return row[0]


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ReferenceConfig:
    tol: float = 1e-10
    n_start: int = 64
    max_halvings: int = 14
    quad_k: int = 8
    verify: bool = True
    verify_levels: int = 4
    norm: str = "spectral"


@dataclass(frozen=True)
class ReferenceResult:
    U: np.ndarray
    N: int
    refinement_diff: float
    verification_diff: float | None
    history: tuple = field(default=())


_REF_CACHE: "weakref.WeakKeyDictionary[SpinSystem, dict]" = weakref.WeakKeyDictionary()


def reference_result(system: SpinSystem, T: float | None = None, cfg: ReferenceConfig = ReferenceConfig(),
                     t0: float = 0.0) -> ReferenceResult:
    """Certified reference propagator on [t0, T] with diagnostics."""
    T = system.T if T is None else float(T)
    if T <= t0:
        raise ValueError("empty time window")
    key = (float(t0), T, cfg)
    store = _REF_CACHE.setdefault(system, {})
    if key in store:
        return store[key]
    N = cfg.n_start
    prev = dense_theta2_propagator(system, N, t0, T, cfg.quad_k)
    history = []
    for _ in range(cfg.max_halvings):
        N *= 2
        cur = dense_theta2_propagator(system, N, t0, T, cfg.quad_k)
        diff = propagator_error(cur, prev, cfg.norm)
        history.append((N, diff))
        prev = cur
        if diff <= cfg.tol:
            break
    else:
        raise ReferenceError(f"step halving did not reach tol {cfg.tol:g} (last difference {diff:.3e} at N={N})")
    vdiff = None
    if cfg.verify:
        n_mid = _verification_start(N, cfg.verify_levels)
        V = richardson_midpoint(system, n_mid, cfg.verify_levels, t0, T)
        vdiff = propagator_error(cur, V, cfg.norm)
        if vdiff > 10 * cfg.tol:
            raise ReferenceError(
                f"reference methods disagree: {vdiff:.3e} > {10 * cfg.tol:g} (N={N}, midpoint base {n_mid})")
    res = ReferenceResult(U=cur, N=N, refinement_diff=diff, verification_diff=vdiff, history=tuple(history))
    store[key] = res
    return res


def _verification_start(N: int, levels: int) -> int:
    # finest midpoint level uses N/2 steps
    return max(16, N // 2 ** levels)


def reference_propagator(system: SpinSystem, T: float | None = None, cfg: ReferenceConfig = ReferenceConfig(),
                         t0: float = 0.0) -> np.ndarray:
    return reference_result(system, T, cfg, t0).U


# ---------------------------------------------------------------------------


def _spin_expectations(psi: np.ndarray, M: int) -> np.ndarray:
    P = pauli_stack(M)
    vals = np.einsum("i,amij,j->am", psi.conj(), P, psi)
    return vals.real


def observables(system: SpinSystem, T: float | None = None, samples: int = 101, N: int | None = None,
                psi0: np.ndarray | None = None, method=None):
    """Expectation values <X_k>, <Y_k>, <Z_k> at ``samples`` equally spaced times.

    Returns (times, values) with values of shape (samples, 3, M).  The state
    starts in |0...0> (all spins Z-up) unless ``psi0`` is given.  Without
    ``method`` the dense fourth-order stepper is used with N steps (default:
    the reference resolution); otherwise ``method`` is an integrator name.
    """
    T = system.T if T is None else float(T)
    M = system.M
    d = 2 ** M
    if psi0 is None:
        psi = np.zeros(d, dtype=complex)
        psi[0] = 1.0
    else:
        psi = np.asarray(psi0, dtype=complex).copy()
        if psi.shape != (d,):
            raise ValueError("initial state has the wrong dimension")
    intervals = samples - 1
    if N is None:
        N = 32 * intervals
    per = max(1, math.ceil(N / intervals))
    N = per * intervals
    h = T / N
    times = np.linspace(0.0, T, samples)
    out = np.empty((samples, 3, M))
    out[0] = _spin_expectations(psi, M)
    if method is not None:
        from .integrators import MethodSpec, step_unitaries

        spec = method if isinstance(method, MethodSpec) else MethodSpec(method)
        steps = step_unitaries(spec, system, N)
        for s in range(intervals):
            for U in steps[s * per:(s + 1) * per]:
                psi = U @ psi
            out[s + 1] = _spin_expectations(psi, M)
        return times, out
    for s in range(intervals):
        Us = _theta2_batch(system, s * per * h, h, per, 8)
        for U in Us:
            psi = U @ psi
        out[s + 1] = _spin_expectations(psi, M)
    return times, out
