"""Spin systems (control + couplings + horizon) and the two worked three-spin examples."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .pulses import (
    ChirpParams,
    ControlSpec,
    GaussianParams,
    chirp_xy,
    constant_control,
    gaussian_xy,
    pulse_control,
)
from .spin_algebra import InteractionTensor, build_hamiltonian, coupling_operator

OFFSETS_HZ = (2000.0, 1500.0, 1600.0)
J_ISO_HZ = {(1, 2): 7.0, (1, 3): 12.0, (2, 3): 20.0}
A_MAX_EX1 = 2 * math.pi * 1545.0

# pair -> (XX, YY, ZZ, XY, XZ, YZ, YX, ZX, ZY) in Hz
J_GENERAL_HZ = {
    (1, 2): (10, 5, 12, 13, 18, 4, 15, 15, 6),
    (1, 3): (2, 8, 4, 19, 10, 14, 9, 13, 9),
    (2, 3): (4, 9, 11, 2, 11, 10, 6, 4, 5),
}
_GENERAL_ORDER = ("XX", "YY", "ZZ", "XY", "XZ", "YZ", "YX", "ZX", "ZY")


@dataclass(frozen=True, eq=False)
class SpinSystem:
    control: ControlSpec
    C: InteractionTensor
    T: float
    name: str = ""

    def __post_init__(self):
        if self.control.M != self.C.M:
            raise ValueError("control and coupling tensor disagree on M")
        if self.T <= 0:
            raise ValueError("T must be positive")

    @property
    def M(self) -> int:
        return self.C.M

    @cached_property
    def coupling_dense(self) -> np.ndarray:
        """Dense S^T C S, cached."""
        return coupling_operator(self.C)

    def hamiltonian(self, t: float) -> np.ndarray:
        return build_hamiltonian(self.control(t), self.C)


def coupling_matrix_hz(M: int, pairs: dict) -> np.ndarray:
    """Symmetric M x M matrix (pi/2) J from {(j, k): J_jk in Hz} with 1-based spins."""
    C = np.zeros((M, M))
    for (j, k), val in pairs.items():
        C[j - 1, k - 1] = C[k - 1, j - 1] = 0.5 * math.pi * val
    return C


def isotropic_tensor_hz(M: int, pairs: dict) -> InteractionTensor:
    return InteractionTensor.isotropic(coupling_matrix_hz(M, pairs))


def offsets_to_z(offsets_hz) -> np.ndarray:
    """z-channel coefficients pi * Omega (rad/s) for offsets in Hz."""
    return math.pi * np.asarray(offsets_hz, dtype=float)


def example1(pulse: str = "chirp", *, delta_f: float = 30e3, a_max: float | None = None,
             tau_p: float = 0.01, eta: int | None = None, phi0: float = 0.0,
             offsets_hz=OFFSETS_HZ, couplings_hz=None, T: float = 0.01) -> SpinSystem:
    """Three isotropically coupled spins driven by a shared pulse.

    ``pulse`` is 'free' (no drive), 'gaussian' (pi pulse tuned to spin 1) or
    'chirp'.  The chirp defaults to A_max = 2 pi * 1545 rad/s.
    """
    pairs = J_ISO_HZ if couplings_hz is None else couplings_hz
    M = len(offsets_hz)
    C = isotropic_tensor_hz(M, pairs)
    z = offsets_to_z(offsets_hz)
    if pulse == "free":
        ctrl = constant_control(np.stack([np.zeros(M), np.zeros(M), z]), T=T)
    elif pulse == "gaussian":
        params = GaussianParams(theta=math.pi, eta=2 if eta is None else eta,
                                omega=float(offsets_hz[0]), tau_p=tau_p, phi0=phi0)
        ctrl = pulse_control(lambda t: gaussian_xy(params, t, clip=False), z, T, label="gaussian")
    elif pulse == "chirp":
        params = ChirpParams(A_max=A_MAX_EX1 if a_max is None else a_max, delta_f=delta_f,
                             tau_p=tau_p, phi0=phi0, eta=40 if eta is None else eta)
        ctrl = pulse_control(lambda t: chirp_xy(params, t, clip=False), z, T, label="chirp")
    else:
        raise ValueError(f"unknown pulse {pulse!r}")
    return SpinSystem(ctrl, C, T, name=f"example1-{pulse}")


def general_tensor_hz(mixed: bool) -> InteractionTensor:
    blocks = {}
    for idx, key in enumerate(_GENERAL_ORDER):
        if not mixed and key[0] != key[1]:
            continue
        blocks[key] = coupling_matrix_hz(3, {p: v[idx] for p, v in J_GENERAL_HZ.items()})
    return InteractionTensor.from_blocks(3, blocks)


def example2(mixed: bool = False, *, phi0=(math.pi, math.pi / 6, -math.pi / 6),
             delta_f=(30e3, 15e3, 45e3), a_max=None, tau_p: float = 0.01, eta: int = 40,
             offsets_hz=OFFSETS_HZ, T: float = 0.01) -> SpinSystem:
    """Three spins with individual chirps and anisotropic (optionally mixed) couplings.

    Each spin's chirp amplitude defaults to A_max = 2 pi * 1545 rad/s, the
    value used for the shared chirp.
    """
    amax = [A_MAX_EX1] * 3 if a_max is None else list(np.broadcast_to(a_max, (3,)))
    pulses = []
    for k in range(3):
        p = ChirpParams(A_max=float(amax[k]), delta_f=delta_f[k], tau_p=tau_p, phi0=phi0[k], eta=eta)
        pulses.append(lambda t, p=p: chirp_xy(p, t, clip=False))
    ctrl = pulse_control(pulses, offsets_to_z(offsets_hz), T, label="chirp-per-spin")
    return SpinSystem(ctrl, general_tensor_hz(mixed), T, name=f"example2-{'mixed' if mixed else 'nomixed'}")


def hin_norm(C: InteractionTensor, norm: str = "fro") -> float:
    """Norm of the interaction Hamiltonian 1/2 S^T C S."""
    H = 0.5 * coupling_operator(C)
    return float(np.linalg.norm(H, "fro" if norm == "fro" else 2))
