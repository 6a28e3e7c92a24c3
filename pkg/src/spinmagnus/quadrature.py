"""Gauss-Legendre rules, triangle weights and adaptive integration.

Two integration paths feed the Magnus exponents:

* fixed rules (``GLk``): ``k`` Legendre knots on the step interval, with the
  antisymmetric triangle weights ``w_ij`` for the ordered double integral;
* an adaptive path: composite Gauss-Legendre panels whose count is doubled
  until the step moments stop changing at the requested relative tolerance.

``integrate_adaptive`` and ``integrate_triangle_adaptive`` are general purpose
Gauss-Kronrod (7/15) integrators with global bisection; they are slower and
serve as independent oracles.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from functools import lru_cache

import numpy as np


class QuadratureError(RuntimeError):
    """Adaptive integration did not converge; ``estimate`` holds the best value."""

    def __init__(self, message, estimate=None, error=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error


# ---------------------------------------------------------------------------
# Gauss-Legendre


@lru_cache(maxsize=128)
def _legendre_unit(k: int):
    """Roots/weights of P_k on [-1, 1] by Newton from Chebyshev guesses."""
    if k < 1:
        raise ValueError("k must be >= 1")
    i = np.arange(1, k + 1)
    x = np.cos(np.pi * (i - 0.25) / (k + 0.5))
    for _ in range(100):
        p0 = np.ones_like(x)
        p1 = x.copy()
        for n in range(2, k + 1):
            p0, p1 = p1, ((2 * n - 1) * x * p1 - (n - 1) * p0) / n
        if k == 1:
            p0, p1 = np.ones_like(x), x
        dp = k * (x * p1 - p0) / (x * x - 1.0)
        dx = p1 / dp
        x = x - dx
        if np.max(np.abs(dx)) <= 1e-15:
            break
    # recompute derivative at the converged roots for the weights
    p0 = np.ones_like(x)
    p1 = x.copy()
    for n in range(2, k + 1):
        p0, p1 = p1, ((2 * n - 1) * x * p1 - (n - 1) * p0) / n
    if k == 1:
        p0, p1 = np.ones_like(x), x
    dp = k * (x * p1 - p0) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dp * dp)
    order = np.argsort(x)
    x, w = x[order], w[order]
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class QuadRule1D:
    knots: np.ndarray
    weights: np.ndarray
    h: float

    @property
    def k(self) -> int:
        return len(self.knots)

    def integrate(self, f, t0: float = 0.0):
        vals = np.asarray(f(t0 + self.knots))
        return np.tensordot(self.weights, vals, axes=(0, 0))


@dataclass(frozen=True)
class QuadRule2DTri:
    """Antisymmetric weights for ``int_0^h int_0^zeta a(xi) b(zeta) - b(xi) a(zeta)``.

    With knot samples ``a_i``, ``b_j`` that double integral is ``sum_ij w_ij a_i b_j``.
    """

    knots: np.ndarray
    weights: np.ndarray
    h: float


def gauss_legendre(k: int, h: float = 1.0) -> QuadRule1D:
    """k-point Gauss-Legendre rule on [0, h]; exact for degree <= 2k - 1."""
    if h <= 0:
        raise ValueError("interval length must be positive")
    x, w = _legendre_unit(k)
    return QuadRule1D(knots=0.5 * h * (x + 1.0), weights=0.5 * h * w, h=float(h))


@lru_cache(maxsize=64)
def _ordered_lagrange_unit(k: int) -> np.ndarray:
    """v_ij = int_0^1 int_0^zeta l_i(xi) l_j(zeta) dxi dzeta for GLk knots on [0,1]."""
    rule = gauss_legendre(k, 1.0)
    x = rule.knots
    # high-order rule; the integrands are polynomials of degree <= 2k - 1
    hi = gauss_legendre(k + 2, 1.0)

    def lagrange(i, t):
        t = np.asarray(t, dtype=float)
        out = np.ones_like(t)
        for m in range(k):
            if m != i:
                out = out * (t - x[m]) / (x[i] - x[m])
        return out

    v = np.empty((k, k))
    for i in range(k):
        # L_i(zeta) = zeta * int_0^1 l_i(zeta s) ds, evaluated at the outer knots
        inner = np.array([z * np.dot(hi.weights, lagrange(i, z * hi.knots)) for z in hi.knots])
        for j in range(k):
            v[i, j] = np.dot(hi.weights, inner * lagrange(j, hi.knots))
    v.setflags(write=False)
    return v


def ordered_lagrange_weights(rule: QuadRule1D) -> np.ndarray:
    """Non-antisymmetrized ordered weights ``v_ij`` scaled to [0, h]."""
    return _ordered_lagrange_unit(rule.k) * rule.h ** 2


def triangular_weights(rule: QuadRule1D) -> QuadRule2DTri:
    v = ordered_lagrange_weights(rule)
    return QuadRule2DTri(knots=rule.knots, weights=v - v.T, h=rule.h)


# ---------------------------------------------------------------------------
# Gauss-Kronrod 7/15 with global bisection

_XGK = np.array([
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000,
])
_WGK = np.array([
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
])
_WG = np.array([
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
])
_NODES = np.concatenate([-_XGK[:-1], _XGK[::-1]])
_KW = np.concatenate([_WGK[:-1], _WGK[::-1]])
_GW = np.zeros(15)
# Gauss nodes are the odd-indexed Kronrod nodes xgk[1], xgk[3], xgk[5], xgk[7]
for _i, _g in zip((1, 3, 5), _WG[:3]):
    _GW[_i] = _g
    _GW[14 - _i] = _g
_GW[7] = _WG[3]


def _gk15(f, a, b):
    c, r = 0.5 * (a + b), 0.5 * (b - a)
    vals = np.asarray(f(c + r * _NODES), dtype=float)
    k = r * np.tensordot(_KW, vals, axes=(0, 0))
    g = r * np.tensordot(_GW, vals, axes=(0, 0))
    return k, float(np.max(np.abs(k - g), initial=0.0))


def integrate_adaptive(f, interval, rel_tol: float = 1e-12, abs_tol: float = 1e-15,
                       max_depth: int = 60, max_intervals: int = 50000):
    """Integrate ``f`` over ``interval`` with 15-point Kronrod estimates and bisection.

    ``f`` must accept a 1-D array of abscissae and return values with that
    length as leading axis (vector-valued integrands are allowed).
    """
    a, b = map(float, interval)
    if rel_tol < 1e-14:
        raise ValueError("rel_tol below 1e-14 is not attainable in double precision")
    if a == b:
        probe = np.asarray(f(np.array([a])))
        return np.zeros(probe.shape[1:]) if probe.ndim > 1 else 0.0
    val, err = _gk15(f, a, b)
    heap = [(-err, 0, a, b, 0, val)]
    total, total_err = val, err
    counter = 1
    while True:
        scale = float(np.max(np.abs(total), initial=0.0))
        if total_err <= max(rel_tol * scale, abs_tol):
            return total
        neg_err, _, lo, hi, depth, v = heapq.heappop(heap)
        if depth >= max_depth or counter >= max_intervals:
            raise QuadratureError(
                f"adaptive quadrature did not converge (error {total_err:.3e})",
                estimate=total, error=total_err)
        mid = 0.5 * (lo + hi)
        v1, e1 = _gk15(f, lo, mid)
        v2, e2 = _gk15(f, mid, hi)
        total = total - v + v1 + v2
        total_err = total_err + neg_err + e1 + e2
        heapq.heappush(heap, (-e1, counter, lo, mid, depth + 1, v1))
        heapq.heappush(heap, (-e2, counter + 1, mid, hi, depth + 1, v2))
        counter += 2


def integrate_triangle_adaptive(f, h: float, rel_tol: float = 1e-10, abs_tol: float = 1e-15):
    """Integrate ``f(xi, zeta)`` over ``0 <= xi <= zeta <= h`` by nested adaptive quadrature.

    ``f`` is called with an array ``xi`` and a scalar ``zeta``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    inner_tol = max(rel_tol * 1e-2, 1e-14)

    def outer(zetas):
        out = []
        for z in zetas:
            if z == 0.0:
                probe = np.asarray(f(np.array([0.0]), 0.0))
                out.append(np.zeros(probe.shape[1:]) if probe.ndim > 1 else 0.0)
            else:
                out.append(integrate_adaptive(lambda xi: f(xi, z), (0.0, z), inner_tol, abs_tol * 1e-3))
        return np.array(out)

    return integrate_adaptive(outer, (0.0, h), rel_tol, abs_tol)


# ---------------------------------------------------------------------------
# Step moments used by the Magnus exponents


@dataclass(frozen=True)
class StepMoments:
    """Moments of a vector-valued function f on one step [t0, t0 + h].

    integral: int_0^h f(t0+z) dz
    centered: int_0^h (z - h/2) f(t0+z) dz
    wedge:    matrix A[p, q] = int_0^h int_0^z f_p(x) f_q(z) - f_q(x) f_p(z) dx dz
    """

    integral: np.ndarray
    centered: np.ndarray
    wedge: np.ndarray
    evaluations: int


def _panel_moments(f, t0, h, k, panels):
    unit = gauss_legendre(k, 1.0)
    hp = h / panels
    starts = np.arange(panels) * hp
    nodes = (starts[:, None] + hp * unit.knots[None, :])  # (P, k) offsets from t0
    vals = np.asarray(f(t0 + nodes.ravel()), dtype=float)
    d = vals.shape[1:]
    F = vals.reshape((panels, k) + d)
    F2 = F.reshape(panels, k, -1)
    w = hp * unit.weights
    J = np.einsum("i,pid->pd", w, F2)  # per-panel integrals
    integral = J.sum(axis=0)
    centered = np.einsum("i,pi,pid->d", w, nodes - 0.5 * h, F2)
    W = (_ordered_lagrange_unit(k) - _ordered_lagrange_unit(k).T) * hp ** 2
    local = np.einsum("pid,ij,pje->de", F2, W, F2)
    cum = np.cumsum(J, axis=0) - J
    S = cum.T @ J
    wedge = local + S - S.T
    scale = float(np.max(np.abs(F2), initial=0.0))
    return integral.reshape(d), centered.reshape(d), wedge, scale, F2.shape[0] * k


def fixed_moments(f, t0: float, h: float, k: int) -> StepMoments:
    """Step moments from a single k-point Gauss-Legendre rule (the GLk path)."""
    i0, i1, wd, _, n = _panel_moments(f, t0, h, k, 1)
    return StepMoments(i0, i1, wd, n)


def adaptive_moments(f, t0: float, h: float, rel_tol: float = 1e-13, k: int = 20,
                     max_panels: int = 4096) -> StepMoments:
    """Step moments by composite Gauss-Legendre panels, doubling until stable.

    Convergence is declared when successive refinements agree to ``rel_tol``
    relative to the natural scales ``h*|f|``, ``h^2*|f|`` and ``h^2*|f|^2``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    panels = 1
    prev = _panel_moments(f, t0, h, k, panels)
    evals = prev[4]
    while True:
        panels *= 2
        cur = _panel_moments(f, t0, h, k, panels)
        evals += cur[4]
        fs = max(cur[3], prev[3])
        if fs == 0.0:
            return StepMoments(cur[0], cur[1], cur[2], evals)
        d0 = np.max(np.abs(cur[0] - prev[0]), initial=0.0) / (h * fs)
        d1 = np.max(np.abs(cur[1] - prev[1]), initial=0.0) / (h * h * fs)
        d2 = np.max(np.abs(cur[2] - prev[2]), initial=0.0) / (h * h * fs * fs)
        if max(d0, d1, d2) <= rel_tol:
            return StepMoments(cur[0], cur[1], cur[2], evals)
        if panels >= max_panels:
            raise QuadratureError(
                f"step moments did not converge on [{t0}, {t0 + h}] "
                f"(relative change {max(d0, d1, d2):.3e})")
        prev = cur
