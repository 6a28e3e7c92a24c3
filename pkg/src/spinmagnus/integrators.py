"""Time-stepping drivers.

Every circuit-compatible method produces, per step, a list of *stages*: an
axis a together with rotation angles for ``R_a`` on each qubit and coupling
angles for ``R_aa`` on qubit pairs.  All gates inside a stage commute, so a
stage is exactly ``exp(s Omega^a)`` for some component exponent.  Stages are
merged across boundaries when consecutive ones share an axis, then emitted
as gates and applied to a running dense propagator.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .circuit import CircuitBuilder, CircuitIR, CostReport, closed_form_cost, count_gates, coupling_order
from .magnus import (
    OmegaExponent,
    eliminate,
    mu,
    parse_quad,
    single_spin_exp_params,
    theta1,
    theta2_general,
    theta2_isotropic,
    u_vec,
)
from .pulses import control_bounds
from .reference import expm_skew
from .spin_algebra import InteractionTensor, axis_index, spectral_radius_bound, spin_operator
from .systems import SpinSystem

X_YOSHIDA = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
Y_YOSHIDA = 1.0 - 2.0 * X_YOSHIDA


@dataclass(frozen=True)
class YoshidaCoeffs:
    x: float = X_YOSHIDA
    y: float = Y_YOSHIDA


# Sequences as (role, coefficient) in application order (first applied first).
TROTTER = (("C", 1.0), ("B", 1.0), ("A", 1.0))
STRANG = (("A", 0.5), ("B", 0.5), ("C", 1.0), ("B", 0.5), ("A", 0.5))
_x, _y = X_YOSHIDA, Y_YOSHIDA
YOSHIDA = (
    ("A", _x / 2), ("B", _x / 2), ("C", _x), ("B", _x / 2),
    ("A", (_x + _y) / 2), ("B", _y / 2), ("C", _y), ("B", _y / 2),
    ("A", (_x + _y) / 2), ("B", _x / 2), ("C", _x), ("B", _x / 2), ("A", _x / 2),
)
SPLITTINGS = {"trotter": TROTTER, "strang": STRANG, "yoshida": YOSHIDA}
# roles (A, B, C); B=Z keeps the offsets in the doubly-used stage, and
# the autonomised scheme needs B=Z since time rides on the constant z block
DEFAULT_ASSIGNMENT = ("X", "Z", "Y")

METHODS = ("trotter_pc", "strang_mid", "strang_theta1", "yoshida_theta2_iso", "modyoshida_theta2",
           "cf42", "autonomized_yoshida", "dense_theta2_mixed")
ORDER = {"trotter_pc": 1, "strang_mid": 2, "strang_theta1": 2, "yoshida_theta2_iso": 4,
         "modyoshida_theta2": 4, "cf42": 4, "autonomized_yoshida": 4, "dense_theta2_mixed": 4}
_DEFAULT_QUAD = {"trotter_pc": "start", "strang_mid": "midpoint"}
_CLOSED_FORM = {"trotter_pc": "trotter", "strang_mid": "strang", "strang_theta1": "strang",
                "yoshida_theta2_iso": "yoshida", "autonomized_yoshida": "yoshida",
                "modyoshida_theta2": "modified_yoshida"}


class MagnusConvergenceWarning(RuntimeWarning):
    """The sufficient convergence condition h*rho <= pi does not hold."""


class MixedCouplingError(ValueError):
    """A circuit path was asked to split an exponent with mixed couplings."""


@dataclass(frozen=True)
class MethodSpec:
    name: str
    quadrature: str | int | None = None
    N: int | None = None
    assignment: tuple | None = None

    def __post_init__(self):
        if self.name not in METHODS:
            raise ValueError(f"unknown method {self.name!r}; choose from {METHODS}")
        if self.assignment is None:
            object.__setattr__(self, "assignment", DEFAULT_ASSIGNMENT)
        object.__setattr__(self, "assignment", tuple("XYZ"[axis_index(a)] for a in self.assignment))
        q = self.quadrature if self.quadrature is not None else _DEFAULT_QUAD.get(self.name, "adaptive")
        kind, k = parse_quad(q)
        object.__setattr__(self, "quadrature", "adaptive" if kind == "adaptive" else (kind if kind != "gl" else f"GL{k}"))
        if kind == "start" and self.name != "trotter_pc":
            raise ValueError("start-point sampling pairs only with trotter_pc")
        if self.name == "trotter_pc" and kind != "start":
            raise ValueError("trotter_pc samples the Hamiltonian at the step start")
        if self.name == "strang_mid" and kind != "midpoint":
            raise ValueError("strang_mid samples the Hamiltonian at the midpoint")
        if kind == "midpoint" and self.name != "strang_mid":
            raise ValueError("midpoint sampling pairs only with strang_mid")
        if self.name == "autonomized_yoshida" and kind != "adaptive":
            raise ValueError("autonomized_yoshida samples the Hamiltonian directly; no quadrature choice")
        if self.N is not None and self.N < 1:
            raise ValueError("N must be positive")
        roles = tuple(axis_index(a) for a in self.assignment)
        if sorted(roles) != [0, 1, 2]:
            raise ValueError("assignment must be a permutation of X, Y, Z")

    @property
    def order(self) -> int:
        return ORDER[self.name]

    @property
    def label(self) -> str:
        return f"{self.name}[{self.quadrature}]"


# ---------------------------------------------------------------------------
# stages


@dataclass(frozen=True)
class Stage:
    """All-commuting block: R_axis(rot[q]) on every qubit and R_axis,axis on pairs."""

    axis: int
    rot: np.ndarray
    coup: np.ndarray  # (M, M), strictly upper triangular

    def merged(self, other: "Stage") -> "Stage":
        return Stage(self.axis, self.rot + other.rot, self.coup + other.coup)

    @property
    def is_empty(self) -> bool:
        return not (np.any(self.rot) or np.any(self.coup))


def component_stage(omega: OmegaExponent, axis, s: float) -> Stage:
    """exp(s Omega^axis) as a stage: rotation angles 2 s a_l, coupling angles 2 s cs (C_jk + C_kj)."""
    a = axis_index(axis)
    C = omega.C
    blocks = C.blocks
    for b in range(3):
        if b != a and (np.any(blocks[a, b]) or np.any(blocks[b, a])):
            raise MixedCouplingError("exact component exponentials need a coupling tensor without mixed blocks")
    blk = blocks[a, a]
    coup = np.triu(2.0 * s * omega.coupling_scale * (blk + blk.T), k=1)
    return Stage(a, 2.0 * s * np.asarray(omega.a[a], dtype=float), coup)


def rotation_stage(axis, angles) -> Stage:
    angles = np.asarray(angles, dtype=float)
    M = angles.size
    return Stage(axis_index(axis), angles, np.zeros((M, M)))


def split(omega: OmegaExponent, scheme: str, assignment=DEFAULT_ASSIGNMENT) -> list:
    """Stage list of a splitting applied to Omega = Omega^X + Omega^Y + Omega^Z."""
    seq = SPLITTINGS[scheme]
    roles = dict(zip("ABC", (axis_index(a) for a in assignment)))
    return [component_stage(omega, roles[r], c) for r, c in seq]


def split_trotter(omega, assignment=DEFAULT_ASSIGNMENT):
    return split(omega, "trotter", assignment)


def split_strang(omega, assignment=DEFAULT_ASSIGNMENT):
    return split(omega, "strang", assignment)


def split_yoshida(omega, assignment=DEFAULT_ASSIGNMENT):
    return split(omega, "yoshida", assignment)


def merge_stages(stages) -> list:
    out = []
    for st in stages:
        if out and out[-1].axis == st.axis:
            out[-1] = out[-1].merged(st)
        else:
            out.append(st)
    return out


# ---------------------------------------------------------------------------
# dense action of stages


class StageKit:
    """Per-M tables for applying stages densely and emitting them as gates."""

    def __init__(self, M: int):
        self.M = M
        d = 2 ** M
        idx = np.arange(d)
        self.z = np.array([[1.0 - 2.0 * ((i >> q) & 1) for q in range(M)] for i in idx])
        self.pairs = [(j, k) for j in range(M) for k in range(j + 1, M)]
        self.zz = np.array([[self.z[i, j] * self.z[i, k] for j, k in self.pairs] for i in idx]).reshape(d, -1)
        hx = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
        hy = np.array([[1, 1], [1j, -1j]], dtype=complex) / math.sqrt(2)
        self.V = [self._kron_power(hx, M), self._kron_power(hy, M), None]
        self.Vh = [v.conj().T if v is not None else None for v in self.V]

    @staticmethod
    def _kron_power(m, M):
        out = np.ones((1, 1), dtype=complex)
        for _ in range(M):
            out = np.kron(out, m)
        return out

    def phases(self, st: Stage) -> np.ndarray:
        ang = self.z @ st.rot
        if self.pairs:
            ang = ang + self.zz @ np.array([st.coup[j, k] for j, k in self.pairs])
        return np.exp(-0.5j * ang)

    def apply(self, st: Stage, U: np.ndarray) -> np.ndarray:
        ph = self.phases(st)
        if st.axis == 2:
            return ph[:, None] * U if U.ndim == 2 else ph * U
        V, Vh = self.V[st.axis], self.Vh[st.axis]
        if U.ndim == 2:
            return V @ (ph[:, None] * (Vh @ U))
        return V @ (ph * (Vh @ U))

    def unitary(self, st: Stage) -> np.ndarray:
        return self.apply(st, np.eye(2 ** self.M, dtype=complex))

    def emit(self, st: Stage, builder: CircuitBuilder):
        """Emit all M rotations (zero angles included) then nonzero couplings in round order."""
        if st.is_empty:
            return
        M = self.M
        kind = np.full(M, st.axis, dtype=np.int8)
        builder.add_block(kind, st.rot.copy(), np.arange(1, M + 1, dtype=np.int32), np.zeros(M, np.int32))
        nz = tuple((int(j), int(k)) for j, k in zip(*np.nonzero(st.coup)))
        if nz:
            order = coupling_order(nz)
            n = len(order)
            builder.add_block(np.full(n, st.axis + 3, dtype=np.int8),
                              np.array([st.coup[j, k] for j, k in order]),
                              np.array([j + 1 for j, _ in order], np.int32),
                              np.array([k + 1 for _, k in order], np.int32))


@lru_cache(maxsize=16)
def stage_kit(M: int) -> StageKit:
    return StageKit(M)


def exact_component_circuit(omega: OmegaExponent, axis, s: float) -> CircuitIR:
    st = component_stage(omega, axis, s)
    b = CircuitBuilder(omega.C.M)
    stage_kit(omega.C.M).emit(st, b)
    return b.build()


def stages_circuit(stages, M: int) -> CircuitIR:
    b = CircuitBuilder(M)
    kit = stage_kit(M)
    for st in stages:
        kit.emit(st, b)
    return b.build()


def stages_unitary(stages, M: int) -> np.ndarray:
    kit = stage_kit(M)
    U = np.eye(2 ** M, dtype=complex)
    for st in stages:
        U = kit.apply(st, U)
    return U


# ---------------------------------------------------------------------------
# per-step stage generators


def _require_no_mixed(C: InteractionTensor):
    if not C.no_mixed:
        raise MixedCouplingError("circuit methods need a coupling tensor without mixed blocks")


def modified_yoshida_stages(pair, assignment=DEFAULT_ASSIGNMENT) -> list:
    """e^{-E} Yoshida(W) e^{E} with e^{E} as three rotation layers (Z first, then Y, then X)."""
    lam = single_spin_exp_params(pair.E)
    pre = [rotation_stage("Z", 2 * lam[2]), rotation_stage("Y", 2 * lam[1]), rotation_stage("X", 2 * lam[0])]
    post = [rotation_stage("X", -2 * lam[0]), rotation_stage("Y", -2 * lam[1]), rotation_stage("Z", -2 * lam[2])]
    return pre + split_yoshida(pair.W, assignment) + post


def cf42_exponents(e, C, t_n, h, quad="adaptive"):
    """The two CF42 exponents (first applied first) as Omega structures.

    A1 = int A and A2 = 3 int (2z/h - 1) A; the step is
    exp(A1/2 + A2/3) exp(A1/2 - A2/3).  A2 has no coupling part.
    """
    m = mu(e, t_n, h, quad)
    u = u_vec(e, t_n, h, quad)
    first = OmegaExponent(0.5 * m + 4.0 * u / h, 0.25 * h, C)
    second = OmegaExponent(0.5 * m - 4.0 * u / h, 0.25 * h, C)
    return first, second


def cf42_step(e, C, t_n, h, quad="adaptive", assignment=DEFAULT_ASSIGNMENT):
    """Two Yoshida-compiled sub-steps."""
    _require_no_mixed(C)
    first, second = cf42_exponents(e, C, t_n, h, quad)
    return split_yoshida(first, assignment), split_yoshida(second, assignment)


def autonomized_yoshida_step(e, C, t_n, h, assignment=DEFAULT_ASSIGNMENT) -> list:
    """Yoshida on the autonomised flow: the B role (z block) is constant and carries time.

    Internal time starts at t_n and advances by h*c after each B stage of
    coefficient c; A and C stages sample the control at the current time.
    """
    _require_no_mixed(C)
    roles = dict(zip("ABC", (axis_index(a) for a in assignment)))
    b_axis = roles["B"]
    if b_axis != 2 or not e.constant_z:
        raise ValueError("autonomised splitting needs a constant z channel assigned to the B role")
    tau = t_n
    stages = []
    cache = {}
    for role, c in YOSHIDA:
        if role == "B":
            om = cache.setdefault("B", OmegaExponent(h * e(t_n), 0.5 * h, C))
            stages.append(component_stage(om, b_axis, c))
            tau = tau + h * c
        else:
            om = cache.get(tau)
            if om is None:
                om = OmegaExponent(h * e(tau), 0.5 * h, C)
                cache[tau] = om
            stages.append(component_stage(om, roles[role], c))
    return stages


def step_stages(spec: MethodSpec, system: SpinSystem, t_n: float, h: float) -> list:
    e, C, asg = system.control, system.C, spec.assignment
    name = spec.name
    if name == "trotter_pc":
        return split_trotter(OmegaExponent(h * e(t_n), 0.5 * h, C), asg)
    if name == "strang_mid":
        return split_strang(OmegaExponent(h * e(t_n + 0.5 * h), 0.5 * h, C), asg)
    if name == "strang_theta1":
        return split_strang(theta1(e, C, t_n, h, spec.quadrature), asg)
    if name == "yoshida_theta2_iso":
        return split_yoshida(theta2_isotropic(e, C, t_n, h, spec.quadrature), asg)
    if name == "modyoshida_theta2":
        return modified_yoshida_stages(eliminate(theta2_general(e, C, t_n, h, spec.quadrature)), asg)
    if name == "cf42":
        a, b = cf42_step(e, C, t_n, h, spec.quadrature, asg)
        return a + b
    if name == "autonomized_yoshida":
        return autonomized_yoshida_step(e, C, t_n, h, asg)
    raise ValueError(f"{name} has no circuit form")


def dense_step_mixed(e, C, t_n, h, quad="adaptive") -> np.ndarray:
    """e^{-E} e^{W} e^{E} with dense exponentials; mixed couplings allowed."""
    pair = eliminate(theta2_general(e, C, t_n, h, quad))
    eE = expm_skew(pair.dense_eliminator())
    eW = expm_skew(pair.W.dense())
    return eE.conj().T @ eW @ eE


# ---------------------------------------------------------------------------
# propagation


@dataclass
class PropagationResult:
    U: np.ndarray
    circuit: CircuitIR | None
    cost: CostReport | None
    diagnostics: dict = field(default_factory=dict)


def _diagnostics(system: SpinSystem, h: float) -> dict:
    gamma, nu = control_bounds(system.control, n=2001)
    rho = spectral_radius_bound(nu, system.C, system.M)
    diag = {"rho_bound": rho, "gamma": gamma, "nu": nu, "step_integral_bound": h * rho}
    if h * rho > math.pi:
        diag["convergence_warning"] = True
        # fixed text so the default filter reports it once per call site
        warnings.warn("step bound h*rho exceeds pi; Magnus convergence is not guaranteed "
                      "(see diagnostics['step_integral_bound'])", MagnusConvergenceWarning, stacklevel=3)
    return diag


def propagate(method: MethodSpec | str, system: SpinSystem, N: int | None = None, T: float | None = None,
              build_circuit: bool = True, merge: bool = True) -> PropagationResult:
    """Propagate over [0, T] with N steps; step 0 is applied first."""
    spec = method if isinstance(method, MethodSpec) else MethodSpec(method)
    N = spec.N if N is None else N
    if N is None or N < 1:
        raise ValueError("number of steps N must be a positive integer")
    T = system.T if T is None else float(T)
    h = T / N
    M = system.M
    t_start = time.perf_counter()
    diag = _diagnostics(system, h)
    if spec.name == "dense_theta2_mixed":
        U = np.eye(2 ** M, dtype=complex)
        for n in range(N):
            U = dense_step_mixed(system.control, system.C, n * h, h, spec.quadrature) @ U
        diag["wall_time_s"] = time.perf_counter() - t_start
        return PropagationResult(U, None, None, diag)
    _require_no_mixed(system.C)
    kit = stage_kit(M)
    builder = CircuitBuilder(M) if build_circuit else None
    U = np.eye(2 ** M, dtype=complex)
    pending = None
    for n in range(N):
        if builder is not None:
            builder.mark()
        for st in step_stages(spec, system, n * h, h):
            if pending is None:
                pending = st
            elif merge and pending.axis == st.axis:
                pending = pending.merged(st)
            else:
                U = kit.apply(pending, U)
                if builder is not None:
                    kit.emit(pending, builder)
                pending = st
    U = kit.apply(pending, U)
    circuit = cost = None
    if builder is not None:
        kit.emit(pending, builder)
        circuit = builder.build()
        closed = None
        key = _CLOSED_FORM.get(spec.name)
        if key is not None:
            closed = closed_form_cost(key, M, N, system.C).depth_closed_form
        cost = count_gates(circuit, closed)
    diag["wall_time_s"] = time.perf_counter() - t_start
    return PropagationResult(U, circuit, cost, diag)


def step_unitaries(spec: MethodSpec, system: SpinSystem, N: int, T: float | None = None) -> list:
    """Dense unitary of each step (no cross-step merging; merging is exact anyway)."""
    T = system.T if T is None else float(T)
    h = T / N
    out = []
    for n in range(N):
        if spec.name == "dense_theta2_mixed":
            out.append(dense_step_mixed(system.control, system.C, n * h, h, spec.quadrature))
        else:
            out.append(stages_unitary(step_stages(spec, system, n * h, h), system.M))
    return out
