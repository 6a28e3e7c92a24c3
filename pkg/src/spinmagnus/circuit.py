"""Gate-level IR for Trotterised spin circuits.

Gates are single-qubit rotations ``R_a(theta) = exp(-i theta/2 a)`` and Ising
couplings ``R_aa(theta) = exp(-i theta/2 a (x) a)`` for a in {X, Y, Z}.
Qubit q (1-based) is spin q, i.e. the q-th least-significant tensor slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterator

import numpy as np

from .spin_algebra import PAULI, InteractionTensor

KINDS = ("RX", "RY", "RZ", "RXX", "RYY", "RZZ")
_KIND_CODE = {k: i for i, k in enumerate(KINDS)}


@dataclass(frozen=True)
class Gate:
    kind: str
    theta: float
    qubits: tuple

    def __post_init__(self):
        if self.kind not in _KIND_CODE:
            raise ValueError(f"unknown gate kind {self.kind!r}")
        two = self.kind in ("RXX", "RYY", "RZZ")
        if len(self.qubits) != (2 if two else 1):
            raise ValueError(f"{self.kind} expects {2 if two else 1} qubit(s)")
        if two and self.qubits[0] == self.qubits[1]:
            raise ValueError("two-qubit gate needs distinct qubits")
        if not math.isfinite(self.theta):
            raise ValueError("gate angle must be finite")


@dataclass(frozen=True, eq=False)
class CircuitIR:
    """Ordered gates stored column-wise. ``q2`` is 0 for single-qubit gates."""

    M: int
    kinds: np.ndarray
    thetas: np.ndarray
    q1: np.ndarray
    q2: np.ndarray
    markers: tuple = ()

    def __post_init__(self):
        for name in ("kinds", "thetas", "q1", "q2"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.kinds)
        if not (len(self.thetas) == len(self.q1) == len(self.q2) == n):
            raise ValueError("IR columns must have equal length")
        if n:
            if self.q1.min() < 1 or self.q1.max() > self.M:
                raise ValueError("qubit index out of range")
            two = self.kinds >= 3
            if np.any(two & ((self.q2 < 1) | (self.q2 > self.M) | (self.q2 == self.q1))):
                raise ValueError("invalid second qubit on a coupling gate")

    def __len__(self):
        return len(self.kinds)

    def __iter__(self) -> Iterator[Gate]:
        for k, t, a, b in zip(self.kinds.tolist(), self.thetas.tolist(), self.q1.tolist(), self.q2.tolist()):
            yield Gate(KINDS[k], t, (a, b) if k >= 3 else (a,))

    @property
    def gates(self) -> list:
        return list(self)

    def __eq__(self, other):
        if not isinstance(other, CircuitIR):
            return NotImplemented
        return (self.M == other.M and np.array_equal(self.kinds, other.kinds)
                and np.array_equal(self.thetas, other.thetas) and np.array_equal(self.q1, other.q1)
                and np.array_equal(self.q2, other.q2))

    @classmethod
    def from_gates(cls, M: int, gates, markers=()) -> "CircuitIR":
        gates = list(gates)
        kinds = np.array([_KIND_CODE[g.kind] for g in gates], dtype=np.int8)
        thetas = np.array([g.theta for g in gates], dtype=float)
        q1 = np.array([g.qubits[0] for g in gates], dtype=np.int32)
        q2 = np.array([g.qubits[1] if len(g.qubits) == 2 else 0 for g in gates], dtype=np.int32)
        return cls(M, kinds, thetas, q1, q2, tuple(markers))

    @classmethod
    def empty(cls, M: int) -> "CircuitIR":
        return cls(M, np.zeros(0, np.int8), np.zeros(0), np.zeros(0, np.int32), np.zeros(0, np.int32))


class CircuitBuilder:
    """Accumulates gate blocks; ``build`` freezes them into a CircuitIR."""

    def __init__(self, M: int):
        self.M = M
        self._parts = []
        self._count = 0
        self.markers = []

    def mark(self):
        self.markers.append(self._count)

    def add_block(self, kind: np.ndarray, theta: np.ndarray, q1: np.ndarray, q2: np.ndarray):
        self._parts.append((kind, theta, q1, q2))
        self._count += len(kind)

    def add(self, gate: Gate):
        q2 = gate.qubits[1] if len(gate.qubits) == 2 else 0
        self.add_block(np.array([_KIND_CODE[gate.kind]], np.int8), np.array([gate.theta]),
                       np.array([gate.qubits[0]], np.int32), np.array([q2], np.int32))

    def build(self) -> CircuitIR:
        if not self._parts:
            return CircuitIR.empty(self.M)
        cols = [np.concatenate([p[i] for p in self._parts]) for i in range(4)]
        return CircuitIR(self.M, cols[0].astype(np.int8), cols[1].astype(float),
                         cols[2].astype(np.int32), cols[3].astype(np.int32), tuple(self.markers))


@lru_cache(maxsize=64)
def _round_robin(n: int) -> dict:
    """Round index of every pair (j<k) of n qubits by the circle method.

    n qubits (padded to even with a dummy) give n-1 rounds of disjoint pairs
    for even n and n rounds for odd n, the edge-chromatic optimum.
    """
    m = n + (n % 2)
    ring = list(range(1, m))
    rounds = {}
    for r in range(m - 1):
        rot = ring[r:] + ring[:r]
        line = [0] + rot
        for i in range(m // 2):
            a, b = line[i], line[m - 1 - i]
            if a < n and b < n:
                rounds[(min(a, b), max(a, b))] = r
    # order rounds by their smallest pair so that three qubits come out lexicographic
    first = {}
    for pair, r in rounds.items():
        first[r] = min(first.get(r, pair), pair)
    rank = {r: i for i, r in enumerate(sorted(first, key=first.get))}
    return {pair: rank[r] for pair, r in rounds.items()}


@lru_cache(maxsize=None)
def coupling_order(pairs: tuple) -> tuple:
    """Order pairs (j<k) into rounds of disjoint pairs, emitted round by round.

    Rounds follow the circle-method schedule of all qubits up to the largest
    index, so a stage needs at most M-1 (M even) or M (M odd) coupling
    layers.  For three spins this is the lexicographic order.
    """
    if not pairs:
        return ()
    n = max(max(p) for p in pairs) + 1
    rr = _round_robin(n)
    return tuple(sorted(pairs, key=lambda p: (rr[p], p)))


# ---------------------------------------------------------------------------
# scheduling and counting


def asap_layers(ir: CircuitIR) -> np.ndarray:
    """Earliest layer (1-based) of each gate under per-qubit program order."""
    front = [0] * (ir.M + 1)
    out = np.empty(len(ir), dtype=np.int64)
    for i, (k, a, b) in enumerate(zip(ir.kinds.tolist(), ir.q1.tolist(), ir.q2.tolist())):
        if k >= 3:
            lay = max(front[a], front[b]) + 1
            front[a] = front[b] = lay
        else:
            lay = front[a] + 1
            front[a] = lay
        out[i] = lay
    return out


def schedule_asap(ir: CircuitIR) -> int:
    if len(ir) == 0:
        return 0
    return int(asap_layers(ir).max())


@dataclass(frozen=True)
class CostReport:
    one_qubit: int
    two_qubit: int
    depth_measured: int | None
    depth_closed_form: float | None = None
    M: int = 0

    @property
    def qvolume(self):
        depth = self.depth_measured if self.depth_measured is not None else self.depth_closed_form
        return None if depth is None else self.M * depth


def count_gates(ir: CircuitIR, depth_closed_form=None) -> CostReport:
    two = int(np.count_nonzero(ir.kinds >= 3))
    return CostReport(one_qubit=len(ir) - two, two_qubit=two, depth_measured=schedule_asap(ir),
                      depth_closed_form=depth_closed_form, M=ir.M)


def decompose_couplings(ir: CircuitIR) -> list:
    """Elementary-gate expansion of each coupling gate: basis change, CNOT, R_z, CNOT.

    Returns a list of (name, qubits) tuples with names in
    {RX, RY, RZ, H, CNOT}; used for cost accounting only.
    """
    out = []
    for g in ir:
        if len(g.qubits) == 1:
            out.append((g.kind, g.qubits))
            continue
        j, k = g.qubits
        pre, post = {"RXX": (["H"], ["H"]), "RYY": (["RX"], ["RX"]), "RZZ": ([], [])}[g.kind]
        for name in pre:
            out += [(name, (j,)), (name, (k,))]
        out += [("CNOT", (j, k)), ("RZ", (k,)), ("CNOT", (j, k))]
        for name in post:
            out += [(name, (j,)), (name, (k,))]
    return out


def decomposed_cost(ir: CircuitIR) -> CostReport:
    ops = decompose_couplings(ir)
    front = [0] * (ir.M + 1)
    depth = 0
    one = two = 0
    for name, qs in ops:
        lay = max(front[q] for q in qs) + 1
        for q in qs:
            front[q] = lay
        depth = max(depth, lay)
        if len(qs) == 2:
            two += 1
        else:
            one += 1
    return CostReport(one, two, depth, None, ir.M)


def coupled_pairs(C: InteractionTensor) -> int:
    """Number of spin pairs j<k coupled in any same-axis block."""
    same = np.abs(C.blocks[np.arange(3), np.arange(3)]).sum(axis=0)
    return int(np.count_nonzero(np.triu(same, 1)))


def _c_count(C, c_count):
    if c_count is not None:
        return c_count
    if C is None:
        raise ValueError("need C or c_count")
    return coupled_pairs(C)


def closed_form_cost(method: str, M: int, N: int, C: InteractionTensor | None = None,
                     native_coupling_gates: bool = True, c_count: int | None = None) -> CostReport:
    """Closed-form gate counts and depth for N steps.

    ``|C|`` in the two-qubit counts is the number of coupled pairs per
    coupling block (one Ising gate each), taken from ``C`` unless ``c_count``
    overrides it.  Depth formulas depend only on M, N and the parity of M.
    """
    c = _c_count(C, c_count) if C is not None or c_count is not None else 0
    odd = M % 2 == 1
    m = method.lower()
    if native_coupling_gates:
        table = {
            "trotter": (3 * M * N, 3 * N * c,
                        (9 * M / 2 - 3 / 2) * N if odd else (9 * M / 2 - 3) * N),
            "strang": (4 * M * N + M, 4 * N * c + c,
                       (6 * M - 2) * N + 3 * M / 2 - 1 / 2 if odd else (6 * M - 4) * N + 3 * M / 2 - 1),
            "yoshida": (12 * M * N + M, 12 * N * c + c,
                        (18 * M - 6) * N + 3 * M / 2 - 1 / 2 if odd else (18 * M - 12) * N + 3 * M / 2 - 1),
            "modified_yoshida": (16 * M * N + M, 13 * c * N,
                                 (39 * M / 2 - 7 / 2) * N + 1 if odd else (39 * M / 2 - 10) * N + 1),
        }
    else:
        table = {
            "trotter": ((3 * M + 5 * c) * N, 6 * c * N,
                        (33 * M / 2 - 27 / 2) * N if odd else (33 * M / 2 - 19) * N),
            "strang": ((4 * M + 6 * c) * N + M + c, 8 * c * N + 2 * c,
                       (21 * M - 17) * N + 9 * M / 2 - 7 / 2 if odd else (21 * M - 24) * N + 9 * M / 2 - 5),
            "yoshida": ((12 * M + 18 * c) * N + M + c, 24 * c * N + 2 * c,
                        (63 * M - 51) * N + 9 * M / 2 - 7 / 2 if odd else (63 * M - 72) * N + 9 * M / 2 - 5),
            "modified_yoshida": ((16 * M + 19 * c) * N + M, 26 * c * N,
                                 (135 * M / 2 - 103 / 2) * N + 1 if odd else (135 * M / 2 - 74) * N + 1),
        }
    if m not in table:
        raise ValueError(f"no closed form for method {method!r}")
    one, two, depth = table[m]
    depth = int(depth) if float(depth).is_integer() else depth
    return CostReport(int(one), int(two), None, depth, M)


def lcu_term_count(C: InteractionTensor, M: int, symmetric: bool = True) -> int:
    """Number of unitaries 3M + |C| (|C|/2 when symmetric pairs are combined)."""
    return 3 * M + (C.nnz // 2 if symmetric else C.nnz)


# ---------------------------------------------------------------------------
# statevector simulation

_P = {0: PAULI["X"], 1: PAULI["Y"], 2: PAULI["Z"]}


def _apply_1q(psi, mat, axis):
    psi = np.tensordot(mat, psi, axes=([1], [axis]))
    return np.moveaxis(psi, 0, axis)


def simulate(ir: CircuitIR, psi: np.ndarray) -> np.ndarray:
    """Apply the IR to a state vector (2^M,) or to the columns of a (2^M, k) matrix."""
    psi = np.asarray(psi, dtype=complex)
    d = 2 ** ir.M
    if psi.shape[0] != d:
        raise ValueError(f"state dimension {psi.shape[0]} does not match 2^{ir.M}")
    extra = psi.shape[1:]
    t = psi.reshape((2,) * ir.M + extra)
    M = ir.M
    for k, th, a, b in zip(ir.kinds.tolist(), ir.thetas.tolist(), ir.q1.tolist(), ir.q2.tolist()):
        c, s = math.cos(0.5 * th), math.sin(0.5 * th)
        p = _P[k % 3]
        if k < 3:
            t = _apply_1q(t, c * PAULI["I"] - 1j * s * p, M - a)
        else:
            flipped = _apply_1q(_apply_1q(t, p, M - a), p, M - b)
            t = c * t - 1j * s * flipped
    return t.reshape(psi.shape)


def circuit_unitary(ir: CircuitIR) -> np.ndarray:
    return simulate(ir, np.eye(2 ** ir.M, dtype=complex))


# ---------------------------------------------------------------------------
# text export


def export_ir(ir: CircuitIR) -> str:
    """One gate per line, ``KIND theta q1 [q2]`` with 17 significant digits."""
    lines = [f"# qubits {ir.M}"]
    marks = set(ir.markers)
    for i, (k, th, a, b) in enumerate(zip(ir.kinds.tolist(), ir.thetas.tolist(), ir.q1.tolist(), ir.q2.tolist())):
        if i in marks:
            lines.append("# step")
        if k >= 3:
            lines.append(f"{KINDS[k]} {th:.17g} {a} {b}")
        else:
            lines.append(f"{KINDS[k]} {th:.17g} {a}")
    for _ in range(sum(1 for m in ir.markers if m >= len(ir))):
        lines.append("# step")
    return "\n".join(lines) + "\n"


def import_ir(text: str, M: int | None = None) -> CircuitIR:
    gates, markers = [], []
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if parts[:1] == ["qubits"] and M is None:
                M = int(parts[1])
            elif parts[:1] == ["step"]:
                markers.append(len(gates))
            continue
        parts = line.split()
        kind, theta = parts[0].upper(), float(parts[1])
        gates.append(Gate(kind, theta, tuple(int(q) for q in parts[2:])))
    if M is None:
        M = max((max(g.qubits) for g in gates), default=1)
    return CircuitIR.from_gates(M, gates, markers)
