import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import cumulative_simpson, simpson
from scipy.linalg import expm

from spinmagnus.magnus import (
    NewtonError,
    StructureError,
    eliminate,
    mu,
    p_func,
    r_vec,
    single_spin_exp_params,
    spin_cross,
    su2_exp,
    theta1,
    theta2_general,
    theta2_isotropic,
    u_vec,
    wedge,
    wedge_integral,
    xyz_coefficients,
    xyz_product,
)
from spinmagnus.pulses import ChirpParams, ControlSpec, chirp_xy, constant_control, pulse_control
from spinmagnus.reference import dense_theta2_propagator, expm_skew
from spinmagnus.spin_algebra import (
    PAULI,
    InteractionTensor,
    commutator,
    spin_operator,
)
from spinmagnus.systems import A_MAX_EX1, SpinSystem


def _channel_control(funcs, T=10.0):
    """Single-spin control with channels given as callables of t (None = zero)."""

    def f(t):
        out = np.zeros((len(t), 3, 1))
        for c, g in enumerate(funcs):
            if g is not None:
                out[:, c, 0] = g(t)
        return out

    return ControlSpec(M=1, func=f, T=T)


def _skew_defect(A):
    return float(np.max(np.abs(A + A.conj().T)))


# --- integrals -----------------------------------------------------------------


def test_mu_examples():
    c = np.array([[0.3, -1.0], [2.0, 0.5], [1.0, 4.0]])
    assert np.allclose(mu(constant_control(c, 5.0), 0.7, 0.25), 0.25 * c, rtol=1e-14)
    e = _channel_control([np.sin, None, None])
    assert np.allclose(mu(e, 0.0, math.pi), [[2.0], [0.0], [0.0]], atol=1e-13)


def test_mu_chirp_vs_simpson(ex1iii):
    e, h = ex1iii.control, 5e-5
    z = np.linspace(0, h, 1_000_001)
    oracle = simpson(e.evaluate(z), x=z, axis=0)
    assert np.max(np.abs(mu(e, 0.0, h) - oracle)) <= 1e-10


def test_mu_variants(ex1iii):
    e, t, h = ex1iii.control, 0.003, 4e-5
    assert np.array_equal(mu(e, t, h, "start"), h * e(t))
    assert np.allclose(mu(e, t, h, "midpoint"), mu(e, t, h, "GL1"), rtol=1e-14, atol=0)


def test_u_vec_examples(ex1iii):
    assert not np.any(np.abs(u_vec(constant_control(np.ones((3, 2))), 0.0, 0.5)) > 1e-16)
    h = 0.3
    e = _channel_control([lambda t: t, None, None])
    assert math.isclose(u_vec(e, 0.0, h)[0, 0], -h ** 3 / 24, rel_tol=1e-13)
    h = 3e-5
    u = u_vec(ex1iii.control, 0.0041, h)
    # constant z channel: zero up to rounding of the symmetric rule
    assert np.max(np.abs(u[2])) <= 1e-14 * h * h * np.max(np.abs(ex1iii.control.z_offsets))
    assert np.max(np.abs(u[:2])) > 0


def test_wedge_examples(rng):
    a = rng.normal(size=(3, 3))
    assert not np.any(wedge((a, a), (a, a)))
    ay = np.zeros((3, 3)); ay[1] = rng.normal(size=3)
    bz = np.zeros((3, 3)); bz[2] = rng.normal(size=3)
    c = wedge((ay, 2 * ay), (bz, 3 * bz))
    assert np.any(c[0]) and not np.any(c[1:])
    with pytest.raises(ValueError):
        wedge((a, a), (np.zeros((3, 2)), np.zeros((3, 2))))


def test_wedge_is_single_spin_commutator(rng):
    et, es = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
    c = wedge((et, es), (et, es))
    lhs = commutator(spin_operator(et), spin_operator(es))
    assert np.max(np.abs(lhs - 2j * spin_operator(c))) <= 1e-12


def test_r_vec_examples():
    c = np.array([[0.3], [2.0], [1.0]])
    e = constant_control(c)
    assert np.allclose(r_vec(e, 0.1, 0.2), mu(e, 0.1, 0.2), rtol=0, atol=1e-15)
    e1 = _channel_control([None, lambda t: np.cos(3 * t), None])
    assert np.allclose(r_vec(e1, 0.1, 0.4), mu(e1, 0.1, 0.4), rtol=0, atol=1e-15)


def test_wedge_integral_channel_antisymmetry(ex1iii):
    """Swapping the x and y pulse channels flips the z component of the wedge integral."""
    e = ex1iii.control
    sw = ControlSpec(M=3, func=lambda t: e.evaluate(t)[:, [1, 0, 2], :], T=e.T)
    t, h = 0.0051, 4e-5
    assert math.isclose(wedge_integral(sw, t, h)[2, 0], -wedge_integral(e, t, h)[2, 0], rel_tol=1e-12)


# --- exponents -----------------------------------------------------------------


def test_theta1_examples(ex1iii):
    e0 = np.array([[0.2, 0.1, 0.0], [0.0, 0.4, 0.3], [1.0, 2.0, 3.0]])
    sys0 = SpinSystem(constant_control(e0, 0.01), ex1iii.C, 0.01)
    h = 1e-3
    th = theta1(sys0.control, sys0.C, 0.0, h)
    assert np.allclose(th.dense(), -1j * h * sys0.hamiltonian(0.0), atol=1e-14)
    n1 = np.linalg.norm(theta1(ex1iii.control, ex1iii.C, 0.0, 1e-5).dense())
    n2 = np.linalg.norm(theta1(ex1iii.control, ex1iii.C, 0.0, 5e-6).dense())
    assert abs(n1 / n2 - 2.0) < 0.05
    with pytest.raises(ValueError):
        theta1(ex1iii.control, ex1iii.C, 0.0, 0.0)


def test_theta2_general_examples(ex2i):
    e0 = np.array([[0.2, 0.1, 0.0], [0.0, 0.4, 0.3], [1.0, 2.0, 3.0]])
    sys0 = SpinSystem(constant_control(e0, 0.01), ex2i.C, 0.01)
    h = 2e-3
    th = theta2_general(sys0.control, sys0.C, 0.0, h)
    assert np.max(np.abs(th.u)) <= 1e-15
    assert np.allclose(th.dense(), -1j * h * sys0.hamiltonian(0.0), atol=1e-13)
    thz = theta2_general(ex2i.control, InteractionTensor.zeros(3), 0.002, 3e-5)
    assert np.allclose(thz.dense(), -1j * spin_operator(thz.r), atol=1e-15)
    with pytest.raises(ValueError):
        theta2_general(ex2i.control, ex2i.C, 0.0, 1e-5, "midpoint")


def test_theta2_general_vs_double_integral(rng):
    """Two-term Magnus series by brute-force nested integration, M = 2, chirp on spin 1."""
    p = ChirpParams(A_max=A_MAX_EX1, delta_f=30e3, tau_p=0.01)
    ctrl = pulse_control([lambda t: chirp_xy(p, t, clip=False), lambda t: (0 * t, 0 * t)],
                         [math.pi * 2000, math.pi * 1500], 0.01)
    blocks = rng.normal(size=(3, 3, 2, 2)) * 300.0
    blocks[:, :, [0, 1], [0, 1]] = 0.0
    C = InteractionTensor(blocks)
    sys2 = SpinSystem(ctrl, C, 0.01)
    t0, h = 0.0037, 4e-5
    A = lambda t: -1j * sys2.hamiltonian(t)  # noqa: E731
    z = np.linspace(0, h, 4001)
    Az = np.array([A(t0 + s) for s in z])

    def cs(v, **kw):
        return cumulative_simpson(v.real, **kw) + 1j * cumulative_simpson(v.imag, **kw)

    def sp(v, **kw):
        return simpson(v.real, **kw) + 1j * simpson(v.imag, **kw)

    B = cs(Az, x=z, axis=0, initial=0)
    oracle = sp(Az, x=z, axis=0) + 0.5 * sp(Az @ B - B @ Az, x=z, axis=0)
    th = theta2_general(ctrl, C, t0, h).dense()
    assert np.max(np.abs(th - oracle)) <= 1e-9
    assert _skew_defect(th) <= 1e-12


def test_theta2_isotropic_matches_general(ex1iii, rng):
    for t in rng.uniform(0, ex1iii.T - 1e-4, size=5):
        h = 6.1e-5
        iso = theta2_isotropic(ex1iii.control, ex1iii.C, t, h)
        gen = theta2_general(ex1iii.control, ex1iii.C, t, h)
        assert np.max(np.abs(iso.dense() - gen.dense())) <= 1e-10
        assert np.allclose(iso.a, gen.r, rtol=0, atol=1e-12)


def test_theta2_isotropic_no_pulse():
    z = np.array([1.0, 2.0, 3.0])
    C = InteractionTensor.isotropic(np.array([[0, 1, 2], [1, 0, 3], [2, 3, 0.0]]))
    e = constant_control(np.stack([np.zeros(3), np.zeros(3), z]), 1.0)
    th = theta2_isotropic(e, C, 0.0, 0.1)
    assert np.allclose(th.a, [np.zeros(3), np.zeros(3), 0.1 * z], atol=1e-16)


def test_theta2_isotropic_rejects_structure(ex2i):
    with pytest.raises(StructureError):
        theta2_isotropic(ex2i.control, ex2i.C, 0.0, 1e-5)


def test_structured_exponents_skew_hermitian(ex2ii):
    th = theta2_general(ex2ii.control, ex2ii.C, 0.004, 5e-5)
    assert _skew_defect(th.dense()) <= 1e-12
    p = eliminate(th)
    assert _skew_defect(p.W.dense()) <= 1e-12 and _skew_defect(p.dense_eliminator()) <= 1e-12


def _local_errors(system, exponent, hs, t0=0.0041):
    out = []
    for h in hs:
        U = dense_theta2_propagator(system, 64, t0, t0 + h, k=8)
        out.append(np.linalg.norm(expm_skew(exponent(t0, h)) - U, 2))
    return np.array(out)


def test_local_orders(ex1iii):
    hs = [4e-5 / 2 ** i for i in range(4)]
    e, C = ex1iii.control, ex1iii.C
    e1 = _local_errors(ex1iii, lambda t, h: theta1(e, C, t, h).dense(), hs)
    e2 = _local_errors(ex1iii, lambda t, h: theta2_isotropic(e, C, t, h).dense(), hs)
    s1 = np.polyfit(np.log(hs), np.log(e1), 1)[0]
    s2 = np.polyfit(np.log(hs), np.log(e2), 1)[0]
    assert abs(s1 - 3) <= 0.3
    assert abs(s2 - 5) <= 0.3


# --- elimination -----------------------------------------------------------------


def test_spin_cross_examples(rng):
    u = rng.normal(size=(3, 4))
    assert np.max(np.abs(spin_cross(u, 2.5 * u))) <= 1e-15
    ex = np.zeros((3, 2)); ex[0] = 1
    ey = np.zeros((3, 2)); ey[1] = 1
    ez = np.zeros((3, 2)); ez[2] = 1
    assert np.array_equal(spin_cross(ex, ey), ez)


def test_cross_product_commutator_identity(rng):
    for _ in range(100):
        u, r = rng.normal(size=(3, 3)), rng.normal(size=(3, 3))
        lhs = commutator(spin_operator(u), spin_operator(r))
        assert np.max(np.abs(lhs - 2j * spin_operator(spin_cross(u, r)))) <= 1e-10


def test_eliminate_u_zero_exact(ex2i):
    e0 = np.array([[0.2, 0.1, 0.0], [0.0, 0.4, 0.3], [1.0, 2.0, 3.0]]) * 1e3
    th = theta2_general(constant_control(e0, 0.01), ex2i.C, 0.0, 1e-4)
    p = eliminate(th)
    assert np.max(np.abs(p.E)) <= 1e-15
    comp = expm_skew(-p.dense_eliminator()) @ expm_skew(p.W.dense()) @ expm_skew(p.dense_eliminator())
    assert np.linalg.norm(comp - expm_skew(th.dense()), 2) <= 1e-12


def test_eliminate_isotropic_has_no_z_channel(ex1iii):
    p = eliminate(theta2_general(ex1iii.control, ex1iii.C, 0.0052, 5e-5))
    assert np.max(np.abs(p.E[2])) <= 1e-12 * np.max(np.abs(p.E[:2]))


def test_eliminated_pair_formula(ex2i):
    th = theta2_general(ex2i.control, ex2i.C, 0.0061, 4e-5)
    p = eliminate(th)
    assert np.allclose(p.E, 2 / th.h * th.u, rtol=1e-15, atol=0)
    assert np.allclose(p.W.a, th.r + 4 / th.h * np.cross(th.u, th.r, axis=0), rtol=1e-14, atol=0)
    assert p.W.coupling_scale == th.h / 2


def test_eliminator_shrinks_quadratically(ex2i):
    hs = [8e-5, 4e-5, 2e-5, 1e-5]
    norms = [np.linalg.norm(eliminate(theta2_general(ex2i.control, ex2i.C, 0.004, h)).E) for h in hs]
    assert abs(np.polyfit(np.log(hs), np.log(norms), 1)[0] - 2) <= 0.2


def test_elimination_defect_order(ex2i):
    h0, t = 1e-3, 0.0043
    hs = [h0 / 2 ** i for i in range(3, 9)]
    defects = []
    for h in hs:
        th = theta2_general(ex2i.control, ex2i.C, t, h)
        p = eliminate(th)
        E = p.dense_eliminator()
        comp = expm_skew(-E) @ expm_skew(p.W.dense()) @ expm_skew(E)
        defects.append(np.linalg.norm(comp - expm_skew(th.dense()), 2))
    assert np.polyfit(np.log(hs), np.log(defects), 1)[0] >= 4.7


# --- single-spin parameters ----------------------------------------------------------


def test_single_spin_examples(rng):
    a = np.array([[0.4], [0.0], [0.0]])
    assert np.allclose(single_spin_exp_params(a), a, atol=1e-14)
    assert not np.any(single_spin_exp_params(np.zeros((3, 3))))
    a = rng.normal(size=3)
    a *= 0.3 / np.linalg.norm(a)
    lam = single_spin_exp_params(a.reshape(3, 1))[:, 0]
    d = 0.3
    n = a / d
    rodrigues = math.cos(d) * np.eye(2) - 1j * math.sin(d) * sum(n[i] * PAULI[k] for i, k in enumerate("XYZ"))
    assert np.max(np.abs(xyz_product(lam) - rodrigues)) <= 1e-11


def test_single_spin_reconstruction_1000(rng):
    a = rng.normal(size=(3, 1000))
    a *= rng.uniform(0, 1, size=1000) / np.linalg.norm(a, axis=0)
    lam = single_spin_exp_params(a)
    worst = max(np.max(np.abs(xyz_product(lam[:, m]) - expm(-1j * sum(a[i, m] * PAULI[k] for i, k in enumerate("XYZ")))))
                for m in range(1000))
    assert worst <= 1e-10
    assert np.max(np.abs(xyz_coefficients(lam) - a)) <= 1e-10


def test_single_spin_layers_match_dense_on_register(rng):
    a = rng.uniform(-0.5, 0.5, size=(3, 3))
    lam = single_spin_exp_params(a)
    layers = np.eye(8, dtype=complex)
    for axis in range(3):
        v = np.zeros((3, 3)); v[axis] = lam[axis]
        layers = layers @ expm_skew(-1j * spin_operator(v))
    assert np.max(np.abs(layers - expm_skew(-1j * spin_operator(a)))) <= 1e-11


def test_newton_failure_reported():
    with pytest.raises(NewtonError):
        single_spin_exp_params(np.array([[1.0], [0.5], [0.2]]), max_iter=0)


def test_p_func_removable_point():
    assert p_func(1.0) == 1.0
    x = 1 - 2e-6
    assert math.isclose(p_func(x), math.acos(x) / math.sqrt(1 - x * x), rel_tol=1e-9)
    assert math.isclose(p_func(1 - 5e-7), 1 + 5e-7 / 3, rel_tol=1e-12)
    with pytest.raises(ValueError):
        p_func(-1.0)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=-0.55, max_value=0.55), min_size=3, max_size=3))
def test_su2_exp_matches_expm(v):
    a = np.array(v)
    dense = expm(-1j * sum(a[i] * PAULI[k] for i, k in enumerate("XYZ")))
    assert np.max(np.abs(su2_exp(a) - dense)) <= 1e-13
