import math

import numpy as np
import pytest
from scipy.linalg import expm

from spinmagnus.pulses import constant_control
from spinmagnus.reference import (
    ReferenceConfig,
    ReferenceError,
    dense_theta2_propagator,
    expm_skew,
    observables,
    ordered_product,
    phase_aligned_error,
    propagator_error,
    reference_result,
    richardson_midpoint,
)
from spinmagnus.spin_algebra import InteractionTensor
from spinmagnus.systems import SpinSystem


def _random_unitary(rng, d):
    q, r = np.linalg.qr(rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_expm_skew_examples(rng):
    assert np.allclose(expm_skew(np.zeros((4, 4))), np.eye(4), atol=0)
    X = np.array([[0, 1], [1, 0]], dtype=complex)
    assert np.allclose(expm_skew(-1j * math.pi / 2 * X), -1j * X, atol=1e-15)
    A = rng.normal(size=(3, 8, 8)) + 1j * rng.normal(size=(3, 8, 8))
    A = A - np.swapaxes(A.conj(), -1, -2)
    out = expm_skew(A)
    for i in range(3):
        assert np.max(np.abs(out[i] - expm(A[i]))) <= 1e-12


def test_ordered_product(rng):
    mats = np.array([_random_unitary(rng, 4) for _ in range(7)])
    naive = np.eye(4)
    for m in mats:
        naive = m @ naive
    assert np.max(np.abs(ordered_product(mats) - naive)) <= 1e-13
    with pytest.raises(ValueError):
        ordered_product(np.zeros((0, 2, 2)))


def test_error_norms(rng):
    U = _random_unitary(rng, 8)
    assert propagator_error(U, U) == 0.0
    for phi in (0.3, math.pi / 2, math.pi):
        assert math.isclose(propagator_error(U, np.exp(1j * phi) * U), abs(np.exp(1j * phi) - 1), rel_tol=1e-12)
        assert phase_aligned_error(U, np.exp(1j * phi) * U) <= 1e-14
    V = _random_unitary(rng, 8)
    assert propagator_error(U, V) <= 2.0 + 1e-12
    assert phase_aligned_error(U, V) <= propagator_error(U, V) + 1e-12
    assert math.isclose(propagator_error(U, -U, "fro"), 2 * math.sqrt(8), rel_tol=1e-14)


def _static_system(rng, M=3, T=0.01):
    e0 = rng.normal(scale=300.0, size=(3, M))
    A = rng.uniform(50, 150, (M, M))
    A = np.triu(A, 1) + np.triu(A, 1).T
    return SpinSystem(constant_control(e0, T), InteractionTensor.isotropic(A), T)


def test_time_independent_matches_closed_form(rng):
    sys3 = _static_system(rng)
    U = reference_result(sys3).U
    exact = expm(-1j * sys3.T * sys3.hamiltonian(0.0))
    assert propagator_error(U, exact) <= 1e-10


def test_zero_hamiltonian_is_identity():
    sys0 = SpinSystem(constant_control(np.zeros((3, 2)), 1.0), InteractionTensor.zeros(2), 1.0)
    assert np.array_equal(reference_result(sys0).U, np.eye(4))


def test_composition_over_halves(ex1iii):
    cfg = ReferenceConfig(tol=1e-9)
    full = reference_result(ex1iii, cfg=cfg).U
    half = ex1iii.T / 2
    first = reference_result(ex1iii, T=half, cfg=cfg).U
    second = reference_result(ex1iii, T=ex1iii.T, cfg=cfg, t0=half).U
    assert propagator_error(second @ first, full) <= 5 * cfg.tol


def test_reference_diagnostics(ex1iii, ref1iii):
    res = reference_result(ex1iii)
    assert res.U is ref1iii or np.array_equal(res.U, ref1iii)
    assert res.refinement_diff <= 1e-10 and res.verification_diff <= 1e-9
    assert res.N == res.history[-1][0]
    assert np.max(np.abs(res.U.conj().T @ res.U - np.eye(8))) <= 1e-10  # 65536 products accumulate rounding


def test_independent_schemes_agree(ex1i):
    """Dense Magnus and extrapolated midpoint, both far from the certified tolerance."""
    A = dense_theta2_propagator(ex1i, 2048)
    B = richardson_midpoint(ex1i, 256, levels=3)
    assert propagator_error(A, B) <= 1e-7


def test_reference_failure_is_reported(ex1iii):
    with pytest.raises(ReferenceError):
        reference_result(ex1iii, cfg=ReferenceConfig(tol=1e-14, n_start=16, max_halvings=2))
    with pytest.raises(ValueError):
        reference_result(ex1iii, T=0.0)


# --- observables -------------------------------------------------------------------


def test_observables_initial_values_and_bloch_ball(ex1iii):
    t, v = observables(ex1iii, samples=41, N=4000)
    assert t[0] == 0.0 and math.isclose(t[-1], ex1iii.T)
    assert np.allclose(v[0, 2], 1.0) and np.allclose(v[0, :2], 0.0)
    assert np.all(np.linalg.norm(v, axis=1) <= 1 + 1e-10)


def test_free_evolution_keeps_z(ex1i):
    _, v = observables(ex1i, samples=21, N=2000)
    assert np.max(np.abs(v[:, 2] - 1.0)) <= 1e-3


def test_chirp_inverts_spins(ex1iii):
    _, v = observables(ex1iii, samples=101, N=8000)
    assert np.min(v[:, 2]) < -0.8


def test_observables_by_integrator_match_dense(ex1iii):
    _, a = observables(ex1iii, samples=11, N=2000)
    _, b = observables(ex1iii, samples=11, N=2000, method="yoshida_theta2_iso")
    assert np.max(np.abs(a - b)) <= 1e-3
    with pytest.raises(ValueError):
        observables(ex1iii, psi0=np.ones(4))
