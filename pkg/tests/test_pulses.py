import math

import numpy as np
import pytest
from scipy.special import erf

from spinmagnus.pulses import (
    ChirpParams,
    ControlSpec,
    GaussianParams,
    chirp_amax,
    chirp_amplitude,
    chirp_frequency,
    chirp_phase,
    chirp_xy,
    constant_control,
    control_bounds,
    gaussian_denominator,
    gaussian_xy,
    pulse_control,
    q0_from_flip,
    sampled_control,
)
from spinmagnus.reference import ReferenceConfig, reference_result
from spinmagnus.spin_algebra import InteractionTensor, pauli_embed
from spinmagnus.systems import A_MAX_EX1, SpinSystem, example1

TAU = 0.01


def test_chirp_amplitude_examples():
    p = ChirpParams(A_max=3.0, delta_f=30e3, tau_p=TAU)
    assert chirp_amplitude(p, TAU / 2) == 3.0
    p2 = ChirpParams(A_max=3.0, delta_f=30e3, tau_p=TAU, eta=2)
    assert math.isclose(chirp_amplitude(p2, 0.0), 3.0 * math.exp(-4), rel_tol=1e-15)
    # 4 * 0.5^40 = 3.638e-12
    assert math.isclose(chirp_amplitude(p, 0.25 * TAU), 3.0 * math.exp(-4 * 0.5 ** 40), rel_tol=1e-15)
    assert abs(chirp_amplitude(p, 0.25 * TAU) / 3.0 - (1 - 3.637978807091713e-12)) <= 1e-18


def test_chirp_amplitude_outside_support():
    p = ChirpParams(A_max=3.0, delta_f=30e3, tau_p=TAU, eta=2)
    assert chirp_amplitude(p, -1e-4) == 0.0 and chirp_amplitude(p, TAU + 1e-4) == 0.0
    assert chirp_amplitude(p, TAU + 1e-4, clip=False) > 0.0


def test_chirp_params_validation():
    with pytest.raises(ValueError):
        ChirpParams(1.0, 1.0, TAU, eta=3)
    with pytest.raises(ValueError):
        ChirpParams(1.0, -1.0, TAU)
    with pytest.raises(ValueError):
        ChirpParams(1.0, 1.0, 0.0)


def test_chirp_xy_examples():
    p0 = ChirpParams(A_max=2.0, delta_f=0.0, tau_p=TAU, eta=2)
    t = np.linspace(0, TAU, 11)
    px, py = chirp_xy(p0, t)
    assert not np.any(py) and np.array_equal(px, chirp_amplitude(p0, t))
    p = ChirpParams(A_max=2.0, delta_f=30e3, tau_p=TAU, eta=2)
    px, py = chirp_xy(p, TAU)
    assert chirp_phase(p, TAU) == 0.0
    assert px == chirp_amplitude(p, TAU) and py == 0.0
    assert math.isclose(chirp_phase(p, 0.0025), -56.25 * math.pi, rel_tol=1e-14)


def test_chirp_instantaneous_frequency():
    p = ChirpParams(A_max=1.0, delta_f=30e3, tau_p=TAU)
    t = np.linspace(1e-4, TAU - 1e-4, 50)
    d = 1e-8
    fd = (chirp_phase(p, t + d) - chirp_phase(p, t - d)) / (2 * d)
    exact = chirp_frequency(p, t)
    assert np.max(np.abs(fd - exact) / np.max(np.abs(exact))) <= 1e-6


def test_chirp_amax_examples():
    a = chirp_amax(30e3, TAU, 5.0)
    assert math.isclose(a, 9.708e3, rel_tol=1e-3)
    assert math.isclose(a, 2 * math.pi * 1545, rel_tol=1e-4)
    assert chirp_amax(30e3, TAU, 0.0) == 0.0
    assert math.isclose(chirp_amax(60e3, TAU, 5.0) / a, math.sqrt(2), rel_tol=1e-14)
    assert A_MAX_EX1 == 2 * math.pi * 1545


def test_q0_from_flip():
    assert q0_from_flip(0.0) == 0.0
    assert math.isclose(q0_from_flip(math.pi / 2), 2 / math.pi * math.log(2), rel_tol=1e-14)
    assert math.isclose(q0_from_flip(2 * math.pi / 3), 2 / math.pi * math.log(4), rel_tol=1e-14)
    assert math.isclose(q0_from_flip(math.pi / 2), 0.4413, abs_tol=1e-4)
    with pytest.raises(ValueError):
        q0_from_flip(math.pi)


def test_gaussian_denominator_matches_erf():
    # substitute s = 2t/tau - 1: (tau/2) int_{-1}^{1} exp(-4 s^2) ds
    oracle = TAU / 2 * math.sqrt(math.pi) / 2 * erf(2.0)
    assert math.isclose(gaussian_denominator(2, TAU), oracle, rel_tol=1e-12)


def test_gaussian_normalisation_and_phase():
    p = GaussianParams(theta=math.pi, eta=2, omega=2000.0, tau_p=TAU)
    t = np.linspace(0, TAU, 200001)
    px, py = gaussian_xy(p, t)
    from scipy.integrate import simpson
    assert math.isclose(simpson(np.hypot(px, py), x=t), math.pi, rel_tol=1e-9)
    peak = np.hypot(*gaussian_xy(p, TAU / 2))
    assert math.isclose(peak, math.pi / gaussian_denominator(2, TAU), rel_tol=1e-14)
    p0 = GaussianParams(theta=1.0, eta=4, omega=0.0, tau_p=TAU)
    assert not np.any(gaussian_xy(p0, t)[1])


@pytest.mark.parametrize("theta", [math.pi / 2, math.pi])
def test_gaussian_flip_angle(theta):
    """A single spin at the tuning offset ends with <Z> close to cos(theta)."""
    omega = 2000.0
    p = GaussianParams(theta=theta, eta=2, omega=omega, tau_p=TAU)
    ctrl = pulse_control(lambda t: gaussian_xy(p, t), [math.pi * omega], TAU)
    sys1 = SpinSystem(ctrl, InteractionTensor.zeros(1), TAU)
    U = reference_result(sys1, cfg=ReferenceConfig(tol=1e-8)).U
    psi = U[:, 0]
    z = float(np.real(psi.conj() @ pauli_embed("Z", 1, 1) @ psi))
    assert abs(z - math.cos(theta)) <= 5e-2


def test_control_tags_verified():
    with pytest.raises(ValueError):
        ControlSpec(M=2, func=lambda t: np.stack([np.stack([t, 2 * t], -1)] * 3, axis=1), T=1.0,
                    identical_xy=True)
    ctrl = example1("chirp").control
    v = ctrl.evaluate(np.linspace(0, TAU, 1001))
    assert ctrl.identical_xy and ctrl.constant_z
    assert np.array_equal(v[:, 0, 0], v[:, 0, 1]) and np.array_equal(v[:, 1, 0], v[:, 1, 2])


def test_control_bounds_examples():
    c = np.array([[0.5, -1.5], [0.2, 0.1], [3.0, -4.0]])
    gamma, nu = control_bounds(constant_control(c, T=2.0))
    assert gamma == 0.0 and nu == 4.0

    def sin_ctrl(t):
        out = np.zeros((len(t), 3, 1))
        out[:, 0, 0] = np.sin(t)
        return out

    e = ControlSpec(M=1, func=sin_ctrl, T=1.0)
    gamma, nu = control_bounds(e, window=(0.0, 1.0), n=20001)
    assert math.isclose(gamma, 1.0, rel_tol=1e-6)
    assert math.isclose(nu, math.sin(1.0), rel_tol=1e-12)
    gamma, _ = control_bounds(e, window=(0.5, 1.0), n=20001)
    assert math.isclose(gamma, math.cos(0.5), rel_tol=1e-4)  # one-sided difference at the window edge


def test_control_bounds_grow_with_bandwidth():
    gammas = [control_bounds(example1("chirp", delta_f=df).control)[0] for df in (15e3, 30e3, 60e3)]
    assert gammas[0] < gammas[1] < gammas[2]


def test_sampled_control_interpolates():
    t = np.linspace(0, 1, 201)
    vals = np.zeros((t.size, 3, 1))
    vals[:, 0, 0] = np.sin(2 * t)
    vals[:, 2, 0] = 0.3
    e = sampled_control(t, vals)
    assert e.constant_z
    assert abs(e(0.3337)[0, 0] - math.sin(0.6674)) <= 1e-7
    with pytest.raises(ValueError):
        sampled_control(t + 0.1, vals)
