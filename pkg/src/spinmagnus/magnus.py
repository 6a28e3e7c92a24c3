"""Second- and fourth-order Magnus exponents for H(t) = e(t)^T S + 1/2 S^T C S.

Exponents are kept in structured form (coefficient vectors plus a coupling
scale) and only turned into dense matrices on request.  Notation per step
[t_n, t_n + h]:

    mu = int e,   u = -1/2 int (z - h/2) e,   r = mu - intint (e ^ e)

The fourth-order exponent is
``-i r^T S - i (h/2) S^T C S + [u^T S, S^T C S]`` and the commutator can be
moved into a conjugation ``e^{-E} e^{W} e^{E}`` with ``E = -i (2/h) u^T S``.
"""

from __future__ import annotations

import math
import weakref
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .pulses import ControlSpec
from .quadrature import StepMoments, adaptive_moments, fixed_moments
from .spin_algebra import (
    PAULI,
    InteractionTensor,
    as_spin_vector,
    commutator,
    coupling_operator,
    spin_operator,
)


class StructureError(ValueError):
    """The system does not have the structure a fast path requires."""


class NewtonError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# quadrature selection and integral cache


def parse_quad(quad) -> tuple[str, int]:
    """Normalise a quadrature choice to ('adaptive'|'start'|'midpoint'|'gl', k)."""
    if isinstance(quad, (int, np.integer)):
        return "gl", int(quad)
    q = str(quad).strip().lower()
    if q in ("adaptive", "scipy"):
        return "adaptive", 0
    if q in ("start", "midpoint"):
        return q, 0
    if q.startswith("gl"):
        k = int(q[2:])
        if k < 1:
            raise ValueError("GLk needs k >= 1")
        return "gl", k
    raise ValueError(f"unknown quadrature {quad!r}")


_CACHE: "weakref.WeakKeyDictionary[ControlSpec, OrderedDict]" = weakref.WeakKeyDictionary()
_CACHE_SIZE = 200_000


def _cached(e: ControlSpec, key, compute):
    store = _CACHE.get(e)
    if store is None:
        store = OrderedDict()
        _CACHE[e] = store
    hit = store.get(key)
    if hit is not None:
        return hit
    val = compute()
    store[key] = val
    if len(store) > _CACHE_SIZE:
        store.popitem(last=False)
    return val


def clear_cache():
    _CACHE.clear()


def _moments(e: ControlSpec, t_n: float, h: float, quad, func=None, tag="full") -> StepMoments:
    kind, k = parse_quad(quad)
    if h <= 0:
        raise ValueError("step size must be positive")
    f = e.flat if func is None else func
    if kind == "adaptive":
        compute = lambda: adaptive_moments(f, t_n, h)
    elif kind == "gl":
        compute = lambda: fixed_moments(f, t_n, h, k)
    else:
        raise ValueError(f"quadrature {quad!r} only defines the first-order integral")
    return _cached(e, (tag, float(t_n), float(h), kind, k), compute)


def _wedge_from_matrix(A: np.ndarray, M: int) -> np.ndarray:
    """Per-spin channel pairing (Y,Z), (Z,X), (X,Y) of an antisymmetric moment matrix."""
    m = np.arange(M)
    x, y, z = m, M + m, 2 * M + m
    return np.stack([A[y, z], A[z, x], A[x, y]])


# ---------------------------------------------------------------------------
# structured exponents


@dataclass(frozen=True)
class OmegaExponent:
    """Omega = -i a^T S - i * coupling_scale * S^T C S."""

    a: np.ndarray
    coupling_scale: float
    C: InteractionTensor

    def dense(self) -> np.ndarray:
        return -1j * spin_operator(self.a, self.C.M) - 1j * self.coupling_scale * coupling_operator(self.C)


@dataclass(frozen=True)
class Theta2Structured:
    r: np.ndarray
    u: np.ndarray
    h: float
    C: InteractionTensor

    @property
    def coupling_scale(self) -> float:
        return 0.5 * self.h

    def dense(self) -> np.ndarray:
        M = self.C.M
        SCS = coupling_operator(self.C)
        out = -1j * spin_operator(self.r, M) - 1j * self.coupling_scale * SCS
        if np.any(self.u):
            out = out + commutator(spin_operator(self.u, M), SCS)
        return out


@dataclass(frozen=True)
class EliminatedPair:
    """Conjugation form: eliminator E (exponent -i E^T S) and commutator-free W."""

    E: np.ndarray
    W: OmegaExponent

    def dense_eliminator(self) -> np.ndarray:
        return -1j * spin_operator(self.E, self.W.C.M)


# ---------------------------------------------------------------------------
# integrals


def mu(e: ControlSpec, t_n: float, h: float, quad="adaptive") -> np.ndarray:
    kind, _ = parse_quad(quad)
    if kind == "start":
        return h * e(t_n)
    if kind == "midpoint":
        return h * e(t_n + 0.5 * h)
    return _moments(e, t_n, h, quad).integral.reshape(3, e.M)


def u_vec(e: ControlSpec, t_n: float, h: float, quad="adaptive") -> np.ndarray:
    return -0.5 * _moments(e, t_n, h, quad).centered.reshape(3, e.M)


def wedge(a, b) -> np.ndarray:
    """Wedge of a (sampled at t) and b (sampled at s), each given as a pair.

    ``a`` and ``b`` are tuples ``(value_at_t, value_at_s)`` of (3, M) arrays;
    c^x = a^y(t) b^z(s) - b^z(t) a^y(s) and cyclically.
    """
    at, as_ = (as_spin_vector(v) for v in a)
    bt, bs = (as_spin_vector(v) for v in b)
    if at.shape != bt.shape:
        raise ValueError("wedge operands must have equal M")
    out = np.empty_like(at)
    for c, (p, q) in enumerate(((1, 2), (2, 0), (0, 1))):
        out[c] = at[p] * bs[q] - bt[q] * as_[p]
    return out


def wedge_integral(e: ControlSpec, t_n: float, h: float, quad="adaptive") -> np.ndarray:
    """int_0^h int_0^z (e ^ e)(t_n + x, t_n + z) dx dz."""
    A = _moments(e, t_n, h, quad).wedge
    return _wedge_from_matrix(A, e.M)


def r_vec(e: ControlSpec, t_n: float, h: float, quad="adaptive") -> np.ndarray:
    return mu(e, t_n, h, quad) - wedge_integral(e, t_n, h, quad)


def theta1(e: ControlSpec, C: InteractionTensor, t_n: float, h: float, quad="adaptive") -> OmegaExponent:
    """Second-order exponent; 'start' gives the piecewise-constant first-order variant."""
    if h <= 0:
        raise ValueError("step size must be positive")
    return OmegaExponent(mu(e, t_n, h, quad), 0.5 * h, C)


def theta2_general(e: ControlSpec, C: InteractionTensor, t_n: float, h: float, quad="adaptive") -> Theta2Structured:
    if h <= 0:
        raise ValueError("step size must be positive")
    kind, _ = parse_quad(quad)
    if kind in ("start", "midpoint"):
        raise ValueError("the fourth-order exponent needs 'adaptive' or a GLk rule")
    m = _moments(e, t_n, h, quad)
    M = e.M
    mu_ = m.integral.reshape(3, M)
    u = -0.5 * m.centered.reshape(3, M)
    r = mu_ - _wedge_from_matrix(m.wedge, M)
    return Theta2Structured(r=r, u=u, h=float(h), C=C)


def check_isotropic(e: ControlSpec, C: InteractionTensor):
    if not C.isotropic_flag:
        raise StructureError("coupling tensor is not isotropic")
    if not (e.identical_xy and e.constant_z):
        raise StructureError("control must have identical x/y channels and a constant z channel")
    if e.M != C.M:
        raise StructureError("control and coupling tensor disagree on M")


def theta2_isotropic(e: ControlSpec, C: InteractionTensor, t_n: float, h: float, quad="adaptive") -> OmegaExponent:
    """Fourth-order exponent for isotropic couplings with shared x/y pulses.

    The commutator term vanishes and r follows from five scalar integrals of
    the shared channels f = e^x, g = e^y and the constant z vector w:

        r^x = int f + w int (2z - h) g
        r^y = int g - w int (2z - h) f
        r^z = h w - intint (f(x) g(z) - f(z) g(x))
    """
    check_isotropic(e, C)
    kind, _ = parse_quad(quad)
    if kind in ("start", "midpoint"):
        raise ValueError("the fourth-order exponent needs 'adaptive' or a GLk rule")

    def fg(t):
        v = e.evaluate(t)
        return v[:, :2, 0]

    m = _moments(e, t_n, h, quad, func=fg, tag="xy")
    If, Ig = m.integral
    cf, cg = 2.0 * m.centered  # int (2z - h) f = 2 int (z - h/2) f
    D = m.wedge[0, 1]
    w = e.z_offsets
    ones = np.ones(e.M)
    r = np.stack([If * ones + cg * w, Ig * ones - cf * w, -D * ones + h * w])
    return OmegaExponent(r, 0.5 * h, C)


def spin_cross(u, r) -> np.ndarray:
    """Per-spin R^3 cross product of two (3, M) vectors."""
    u = as_spin_vector(u)
    r = as_spin_vector(r)
    return np.cross(u, r, axis=0)


def eliminate(theta: Theta2Structured) -> EliminatedPair:
    h = theta.h
    if h <= 0:
        raise ValueError("step size must be positive")
    E = (2.0 / h) * theta.u
    r_t = theta.r + (4.0 / h) * spin_cross(theta.u, theta.r)
    return EliminatedPair(E=E, W=OmegaExponent(r_t, 0.5 * h, theta.C))


# ---------------------------------------------------------------------------
# single-spin exponentials as three rotation layers

_SIG = (PAULI["X"], PAULI["Y"], PAULI["Z"])


def su2_exp(a_m) -> np.ndarray:
    """exp(-i a . sigma) = cos|a| I - i sin|a| (n . sigma)."""
    a_m = np.asarray(a_m, dtype=float)
    d = math.sqrt(float(a_m @ a_m))
    if d == 0.0:
        return np.eye(2, dtype=complex)
    n = a_m / d
    return math.cos(d) * np.eye(2) - 1j * math.sin(d) * (n[0] * _SIG[0] + n[1] * _SIG[1] + n[2] * _SIG[2])


def _axis_exp(lam, s):
    return math.cos(lam) * np.eye(2) - 1j * math.sin(lam) * s


def xyz_product(lam) -> np.ndarray:
    """exp(-i l_x X) exp(-i l_y Y) exp(-i l_z Z)."""
    return _axis_exp(lam[0], _SIG[0]) @ _axis_exp(lam[1], _SIG[1]) @ _axis_exp(lam[2], _SIG[2])


def _solve_spin(a_m, tol=1e-13, max_iter=50):
    target = su2_exp(a_m)
    lam = np.array(a_m, dtype=float)

    def residual(l):
        R = xyz_product(l) - target
        return np.concatenate([R.real.ravel(), R.imag.ravel()])

    res = residual(lam)
    nrm = np.linalg.norm(res)
    for _ in range(max_iter):
        if nrm <= tol:
            return lam, nrm
        Ex, Ey, Ez = (_axis_exp(lam[i], _SIG[i]) for i in range(3))
        dP = (-1j * _SIG[0] @ Ex @ Ey @ Ez,
              Ex @ (-1j * _SIG[1]) @ Ey @ Ez,
              Ex @ Ey @ Ez @ (-1j * _SIG[2]))
        J = np.stack([np.concatenate([d.real.ravel(), d.imag.ravel()]) for d in dP], axis=1)
        step = np.linalg.lstsq(J, -res, rcond=None)[0]
        t = 1.0
        while True:
            cand = lam + t * step
            cres = residual(cand)
            cn = np.linalg.norm(cres)
            if cn < nrm or t < 1e-4:
                break
            t *= 0.5
        lam, res, nrm = cand, cres, cn
    return lam, nrm


def single_spin_exp_params(a, tol: float = 1e-13, max_iter: int = 50) -> np.ndarray:
    """Solve exp(-i a_m . sigma) = exp(-i l_x X) exp(-i l_y Y) exp(-i l_z Z) per spin."""
    a = as_spin_vector(a)
    lam = np.zeros_like(a)
    for m in range(a.shape[1]):
        if not np.any(a[:, m]):
            continue
        lm, nrm = _solve_spin(a[:, m], tol, max_iter)
        if nrm > max(tol, 1e-12):
            raise NewtonError(f"single-spin parameter solve failed for spin {m + 1} (residual {nrm:.3e})")
        lam[:, m] = lm
    return lam


def p_func(x: float) -> float:
    """arccos(x) / sin(arccos(x)), with a series near the removable point x = 1."""
    y = 1.0 - x
    if y < 1e-6:
        return 1.0 + y / 3.0 + 2.0 * y * y / 15.0
    if x <= -1.0:
        raise ValueError("p(x) is singular at x = -1")
    return math.acos(x) / math.sqrt(1.0 - x * x)


def xyz_coefficients(lam) -> np.ndarray:
    """Closed-form single-spin coefficients a_m reproduced by the layers lam (per spin)."""
    lam = as_spin_vector(lam)
    cx, cy, cz = np.cos(lam)
    sx, sy, sz = np.sin(lam)
    arg = cx * cy * cz - sx * sy * sz
    q = np.array([p_func(v) for v in np.clip(arg, -1.0, 1.0)])
    return q * np.stack([
        sz * sy * cx + sx * cz * cy,
        sy * cz * cx - sz * cy * sx,
        sz * cy * cx + sy * cz * sx,
    ])
