"""Control pulses: chirped and Gaussian shapes plus the ``ControlSpec`` container.

A control ``e(t)`` is a real (3, M) array per time point: the x, y and z
channel coefficients multiplying the single-spin Paulis.  Vectorised
evaluation at n times returns shape (n, 3, M).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np

from .quadrature import integrate_adaptive


def _check_eta(eta):
    if int(eta) != eta or eta < 0 or int(eta) % 2:
        raise ValueError(f"eta must be an even nonnegative integer, got {eta}")


@dataclass(frozen=True)
class ChirpParams:
    """Super-Gaussian chirp. A_max in rad/s, delta_f in Hz, tau_p in s, phi0 in rad."""

    A_max: float
    delta_f: float
    tau_p: float
    phi0: float = 0.0
    eta: int = 40

    def __post_init__(self):
        _check_eta(self.eta)
        if self.tau_p <= 0:
            raise ValueError("tau_p must be positive")
        if self.delta_f < 0:
            raise ValueError("delta_f must be nonnegative")


@dataclass(frozen=True)
class GaussianParams:
    """Normalised shaped pulse with flip angle ``theta``; ``omega`` in Hz."""

    theta: float
    eta: int
    omega: float
    tau_p: float
    phi0: float = 0.0

    def __post_init__(self):
        _check_eta(self.eta)
        if self.tau_p <= 0:
            raise ValueError("tau_p must be positive")


def _envelope(eta, tau_p, t):
    s = 2.0 * t / tau_p - 1.0
    return np.exp(-4.0 * s ** int(eta))


def chirp_amplitude(params: ChirpParams, t, clip: bool = True):
    """A(t) = A_max exp(-4 (2t/tau_p - 1)^eta) on [0, tau_p], zero outside.

    With ``clip=False`` the formula is used everywhere (smooth continuation).
    """
    t = np.asarray(t, dtype=float)
    if not clip:
        return params.A_max * _envelope(params.eta, params.tau_p, t)
    inside = (t >= 0.0) & (t <= params.tau_p)
    return np.where(inside, params.A_max * _envelope(params.eta, params.tau_p, t), 0.0)


def chirp_phase(params: ChirpParams, t):
    t = np.asarray(t, dtype=float)
    return params.phi0 + math.pi * params.delta_f * t * (t / params.tau_p - 1.0)


def chirp_frequency(params: ChirpParams, t):
    """Instantaneous angular frequency d(phase)/dt."""
    t = np.asarray(t, dtype=float)
    return math.pi * params.delta_f * (2.0 * t / params.tau_p - 1.0)


def chirp_xy(params: ChirpParams, t, clip: bool = True):
    amp = chirp_amplitude(params, t, clip)
    ph = chirp_phase(params, t)
    return amp * np.cos(ph), amp * np.sin(ph)


def chirp_amax(delta_f: float, tau_p: float, q0: float) -> float:
    """Peak amplitude sqrt(2 pi dF Q0 / tau_p) for adiabaticity factor Q0."""
    if delta_f < 0 or tau_p <= 0 or q0 < 0:
        raise ValueError("delta_f, q0 must be nonnegative and tau_p positive")
    return math.sqrt(2.0 * math.pi * delta_f * q0 / tau_p)


def q0_from_flip(theta: float) -> float:
    """Adiabaticity factor (2/pi) ln(2 / (cos theta + 1)); diverges at theta = pi."""
    c = math.cos(theta) + 1.0
    if c <= 1e-15:
        raise ValueError("q0 diverges for a full inversion (theta = pi); use Q0 = 5 instead")
    return 2.0 / math.pi * math.log(2.0 / c)


@lru_cache(maxsize=64)
def gaussian_denominator(eta: int, tau_p: float) -> float:
    """int_0^tau_p exp(-4 (2t/tau_p - 1)^eta) dt to 1e-12 relative accuracy."""
    return float(integrate_adaptive(lambda t: _envelope(eta, tau_p, t), (0.0, tau_p), rel_tol=1e-13))


def gaussian_xy(params: GaussianParams, t, clip: bool = True):
    """Shaped pulse whose envelope integrates to ``theta``.

    The carrier follows ``phi0 + 2 pi omega t`` so that it is resonant with a
    spin whose z coefficient is ``pi * omega`` (offset ``omega`` in Hz).
    """
    t = np.asarray(t, dtype=float)
    den = gaussian_denominator(int(params.eta), float(params.tau_p))
    inside = (t >= 0.0) & (t <= params.tau_p) if clip else np.ones(t.shape, dtype=bool)
    env = np.where(inside, params.theta * _envelope(params.eta, params.tau_p, t) / den, 0.0)
    ph = params.phi0 + 2.0 * math.pi * params.omega * t
    return env * np.cos(ph), env * np.sin(ph)


# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ControlSpec:
    """Vector control e(t) for M spins.

    ``func`` maps a 1-D array of times to an array of shape (n, 3, M).
    ``derivative``, when given, has the same signature and returns e'(t).
    Structure tags are checked by sampling at construction.
    """

    M: int
    func: Callable
    T: float = 1.0
    derivative: Callable | None = None
    identical_xy: bool = False
    constant_z: bool = False
    label: str = ""
    _z: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be positive")
        if self.T <= 0:
            raise ValueError("T must be positive")
        ts = np.linspace(0.0, self.T, 257)
        vals = self.evaluate(ts)
        if vals.shape != (len(ts), 3, self.M):
            raise ValueError(f"control returned shape {vals.shape}, expected (n, 3, {self.M})")
        if self.identical_xy:
            dev = np.max(np.abs(vals[:, :2, :] - vals[:, :2, :1]))
            if dev > 1e-12:
                raise ValueError(f"identical_xy tag violated (deviation {dev:.3e})")
        if self.constant_z:
            dev = np.max(np.abs(vals[:, 2, :] - vals[:1, 2, :]))
            if dev > 1e-12:
                raise ValueError(f"constant_z tag violated (deviation {dev:.3e})")
            object.__setattr__(self, "_z", vals[0, 2, :].copy())

    def evaluate(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return np.asarray(self.func(t), dtype=float)

    def __call__(self, t):
        if np.ndim(t) == 0:
            return self.evaluate(np.array([float(t)]))[0]
        return self.evaluate(t)

    @property
    def z_offsets(self) -> np.ndarray:
        if not self.constant_z:
            raise ValueError("control is not tagged constant_z")
        return self._z

    def flat(self, t) -> np.ndarray:
        """Evaluation reshaped to (n, 3M) in (x, y, z) channel order."""
        v = self.evaluate(t)
        return v.reshape(v.shape[0], -1)


def constant_control(e0, T: float = 1.0) -> ControlSpec:
    e0 = np.asarray(e0, dtype=float)
    if e0.ndim == 1:
        e0 = e0.reshape(3, -1)
    M = e0.shape[1]

    def func(t):
        return np.broadcast_to(e0, (len(t), 3, M)).copy()

    def deriv(t):
        return np.zeros((len(t), 3, M))

    same_xy = bool(np.all(e0[:2] == e0[:2, :1]))
    return ControlSpec(M=M, func=func, T=T, derivative=deriv, identical_xy=same_xy,
                       constant_z=True, label="constant")


def pulse_control(pulses: Sequence[Callable] | Callable, z, T: float, xy_scale: float = 0.5,
                  label: str = "") -> ControlSpec:
    """Control ``(s*p_x, s*p_y, z)`` from per-spin pulses ``p(t) -> (p_x, p_y)``.

    A single callable is shared by all spins (identical x/y channels).  ``z``
    is the constant z-channel vector in rad/s.
    """
    z = np.asarray(z, dtype=float)
    M = z.size
    shared = callable(pulses)

    def func(t):
        out = np.empty((len(t), 3, M))
        if shared:
            px, py = pulses(t)
            out[:, 0, :] = xy_scale * np.asarray(px)[:, None]
            out[:, 1, :] = xy_scale * np.asarray(py)[:, None]
        else:
            for m, p in enumerate(pulses):
                px, py = p(t)
                out[:, 0, m] = xy_scale * px
                out[:, 1, m] = xy_scale * py
        out[:, 2, :] = z
        return out

    if not shared and len(pulses) != M:
        raise ValueError("need one pulse per spin")
    return ControlSpec(M=M, func=func, T=T, identical_xy=shared, constant_z=True, label=label)


def sampled_control(t_grid, values, label: str = "sampled") -> ControlSpec:
    """Control interpolated by cubic splines from samples of shape (n, 3, M)."""
    from scipy.interpolate import CubicSpline

    t_grid = np.asarray(t_grid, dtype=float)
    values = np.asarray(values, dtype=float)
    if values.ndim != 3 or values.shape[1] != 3 or values.shape[0] != t_grid.size:
        raise ValueError("values must have shape (len(t_grid), 3, M)")
    if t_grid[0] != 0.0:
        raise ValueError("sample grid must start at t = 0")
    spline = CubicSpline(t_grid, values, axis=0)
    dspline = spline.derivative()
    M = values.shape[2]
    same_xy = bool(np.all(values[:, :2, :] == values[:, :2, :1]))
    const_z = bool(np.all(values[:, 2, :] == values[:1, 2, :]))
    return ControlSpec(M=M, func=lambda t: spline(t), T=float(t_grid[-1]),
                       derivative=lambda t: dspline(t), identical_xy=same_xy,
                       constant_z=const_z, label=label)


def control_bounds(e: ControlSpec, window=None, n: int = 100_000):
    """(gamma, nu): max |e'(t)|_inf and max |e(t)|_inf over the window.

    Uses the analytic derivative when present, otherwise central differences
    on an n-point grid.
    """
    t0, t1 = (0.0, e.T) if window is None else map(float, window)
    ts = np.linspace(t0, t1, n)
    vals = e.evaluate(ts)
    nu = float(np.max(np.abs(vals)))
    if e.derivative is not None:
        d = np.asarray(e.derivative(ts))
    else:
        d = np.gradient(vals, ts, axis=0)
    gamma = float(np.max(np.abs(d)))
    return gamma, nu
