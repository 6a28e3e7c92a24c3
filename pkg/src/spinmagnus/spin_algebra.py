"""Tensorized Pauli operators and dense Hamiltonian assembly for M spin-1/2 systems.

Spin k (1-based) sits in the k-th least-significant tensor slot, i.e.
``alpha_k = 1 (x) ... (x) alpha (x) 1^{(x)(k-1)}``.  In the computational basis
the bit ``k - 1`` of a basis index is the state of spin k (0 = Z-up).

Single-spin coefficient vectors ("SpinVector3M") are stored as real arrays of
shape ``(3, M)`` holding the x, y and z channels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

AXES = ("X", "Y", "Z")

PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def axis_index(alpha) -> int:
    """Map 'X'/'Y'/'Z' (or 0/1/2) to 0/1/2."""
    if isinstance(alpha, (int, np.integer)):
        if 0 <= alpha < 3:
            return int(alpha)
        raise ValueError(f"axis index {alpha} out of range")
    key = str(alpha).upper()
    if key not in AXES:
        raise ValueError(f"unknown axis {alpha!r}")
    return AXES.index(key)


def pauli_embed(alpha, k: int, M: int) -> np.ndarray:
    """Return ``1^{(x)(M-k)} (x) alpha (x) 1^{(x)(k-1)}`` as a dense 2^M x 2^M matrix."""
    if M < 1:
        raise ValueError("M must be positive")
    if not 1 <= k <= M:
        raise ValueError(f"spin index k={k} outside 1..{M}")
    a = AXES[axis_index(alpha)]
    left = np.eye(2 ** (M - k), dtype=complex)
    right = np.eye(2 ** (k - 1), dtype=complex)
    return np.kron(np.kron(left, PAULI[a]), right)


@lru_cache(maxsize=16)
def _pauli_stack(M: int) -> np.ndarray:
    ops = np.empty((3, M, 2 ** M, 2 ** M), dtype=complex)
    for a in range(3):
        for k in range(M):
            ops[a, k] = pauli_embed(a, k + 1, M)
    ops.setflags(write=False)
    return ops


def pauli_stack(M: int) -> np.ndarray:
    """All embedded Paulis, indexed ``[axis, spin-1]``. Read-only and cached."""
    return _pauli_stack(M)


def as_spin_vector(a, M: int | None = None) -> np.ndarray:
    """Coerce to a real (3, M) array; a flat length-3M vector is read as (x, y, z)."""
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:
        if arr.size % 3:
            raise ValueError("flat spin vector length must be a multiple of 3")
        arr = arr.reshape(3, -1)
    if arr.ndim != 2 or arr.shape[0] != 3:
        raise ValueError(f"spin vector must have shape (3, M), got {arr.shape}")
    if M is not None and arr.shape[1] != M:
        raise ValueError(f"spin vector has M={arr.shape[1]}, expected {M}")
    return arr


def spin_operator(a, M: int | None = None) -> np.ndarray:
    """Dense ``a^T S = sum_{alpha,k} a^alpha_k alpha_k`` (a may be complex)."""
    arr = np.asarray(a)
    if arr.ndim == 1:
        arr = arr.reshape(3, -1)
    M = arr.shape[1] if M is None else M
    if arr.shape != (3, M):
        raise ValueError(f"spin vector shape {arr.shape} incompatible with M={M}")
    return np.tensordot(arr, pauli_stack(M), axes=([0, 1], [0, 1]))


@dataclass(frozen=True)
class InteractionTensor:
    """Pairwise coupling tensor: ``blocks[a, b]`` is the M x M block C^{ab}.

    The interaction Hamiltonian is ``1/2 sum C^{ab}_{jk} a_j b_k``.
    """

    blocks: np.ndarray
    M: int = field(init=False)

    def __post_init__(self):
        b = np.array(self.blocks, dtype=float)
        if b.ndim != 4 or b.shape[:2] != (3, 3) or b.shape[2] != b.shape[3]:
            raise ValueError(f"coupling blocks must have shape (3, 3, M, M), got {b.shape}")
        M = b.shape[2]
        diag = b[:, :, np.arange(M), np.arange(M)]
        if np.any(diag != 0.0):
            raise ValueError("coupling blocks must have zero diagonals (pairwise terms only)")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)
        object.__setattr__(self, "M", M)

    @classmethod
    def zeros(cls, M: int) -> "InteractionTensor":
        return cls(np.zeros((3, 3, M, M)))

    @classmethod
    def isotropic(cls, C) -> "InteractionTensor":
        C = np.asarray(C, dtype=float)
        b = np.zeros((3, 3) + C.shape)
        for a in range(3):
            b[a, a] = C
        return cls(b)

    @classmethod
    def from_blocks(cls, M: int, blocks: dict) -> "InteractionTensor":
        """Build from a mapping like ``{"XX": C, "XY": C2}``; missing blocks are zero."""
        b = np.zeros((3, 3, M, M))
        for key, val in blocks.items():
            a, c = axis_index(key[0]), axis_index(key[1])
            b[a, c] = np.asarray(val, dtype=float)
        return cls(b)

    def block(self, a, b) -> np.ndarray:
        return self.blocks[axis_index(a), axis_index(b)]

    @property
    def nnz(self) -> int:
        """Nonzero entries over all nine blocks."""
        return int(np.count_nonzero(self.blocks))

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.blocks))) if self.blocks.size else 0.0

    @property
    def no_mixed(self) -> bool:
        off = [self.blocks[a, b] for a in range(3) for b in range(3) if a != b]
        return all(not np.any(x) for x in off)

    @property
    def symmetric(self) -> bool:
        b = self.blocks
        return all(np.array_equal(b[a, c].T, b[c, a]) for a in range(3) for c in range(3))

    @property
    def isotropic_flag(self) -> bool:
        b = self.blocks
        return (
            self.no_mixed
            and self.symmetric
            and np.array_equal(b[0, 0], b[1, 1])
            and np.array_equal(b[1, 1], b[2, 2])
        )

    def scaled(self, factor: float) -> "InteractionTensor":
        return InteractionTensor(self.blocks * factor)


def coupling_operator(C: InteractionTensor) -> np.ndarray:
    """Dense ``S^T C S = sum C^{ab}_{jk} a_j b_k`` (no 1/2 factor)."""
    M = C.M
    P = pauli_stack(M)
    d = 2 ** M
    out = np.zeros((d, d), dtype=complex)
    for a in range(3):
        for b in range(3):
            blk = C.blocks[a, b]
            for j, k in zip(*np.nonzero(blk)):
                out += blk[j, k] * (P[a, j] @ P[b, k])
    return out


def build_hamiltonian(e, C: InteractionTensor) -> np.ndarray:
    """Dense ``H = e^T S + 1/2 S^T C S``."""
    e = as_spin_vector(e)
    if e.shape[1] != C.M:
        raise ValueError(f"control has M={e.shape[1]} but coupling tensor has M={C.M}")
    return spin_operator(e, C.M) + 0.5 * coupling_operator(C)


def commutator(P: np.ndarray, Q: np.ndarray) -> np.ndarray:
    if P.shape != Q.shape:
        raise ValueError(f"shape mismatch {P.shape} vs {Q.shape}")
    return P @ Q - Q @ P


def spectral_radius_bound(e_max_inf: float, C: InteractionTensor, M: int) -> float:
    """Upper bound ``3M |e|_inf + 1/2 |C| |C|_max`` on the operator 2-norm of H."""
    if e_max_inf < 0:
        raise ValueError("e_max_inf must be nonnegative")
    return 3 * M * e_max_inf + 0.5 * C.nnz * C.max_abs


def operator_norm(A: np.ndarray, norm: str = "spectral") -> float:
    """Spectral (largest singular value) or Frobenius norm."""
    if norm == "spectral":
        return float(np.linalg.norm(A, 2))
    if norm in ("fro", "frobenius"):
        return float(np.linalg.norm(A, "fro"))
    raise ValueError(f"unknown norm {norm!r}")


def is_hermitian(A: np.ndarray, tol: float = 1e-12) -> bool:
    return bool(np.max(np.abs(A - A.conj().T), initial=0.0) <= tol)
