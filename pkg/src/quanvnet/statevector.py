"""Dense state-vector simulation.

States are plain ``complex128`` arrays of length ``2**n``. Qubit 0 is the
most significant bit of the basis index, so ``|q0 q1 q2 q3>`` sits at
index ``q0*8 + q1*4 + q2*2 + q3``. Gate matrices follow the same
convention over their own targets: the first target is the most
significant local bit (control before target for controlled gates).

Gates are applied by mixing amplitudes along the target axes of the
reshaped ``(2, 2, ..., 2)`` register. The dense ``2**n`` unitary is only
ever built by :func:`circuit_unitary`, which serves as an oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    ApplicationError,
    ArgumentError,
    ConsistencyError,
    SizeError,
)

MAX_QUBITS = 20
MAX_ORACLE_QUBITS = 8
NORM_TOLERANCE = 1e-8

_SQRT1_2 = 1.0 / math.sqrt(2.0)


def _check_angle(theta):
    theta = float(theta)
    if not math.isfinite(theta):
        raise ArgumentError(f"rotation angle must be finite, got {theta!r}")
    return theta


def n_qubits_of(state):
    """Register size implied by the length of ``state``."""
    dim = np.shape(state)[-1]
    n = dim.bit_length() - 1
    if dim < 2 or (1 << n) != dim:
        raise SizeError(f"state length {dim} is not a power of two")
    return n


def zero_state(n_qubits):
    """Return ``|0...0>`` on ``n_qubits`` qubits."""
    if not isinstance(n_qubits, (int, np.integer)) or not 1 <= n_qubits <= MAX_QUBITS:
        raise SizeError(f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits!r}")
    state = np.zeros(1 << int(n_qubits), dtype=np.complex128)
    state[0] = 1.0
    return state


def basis_state(bits):
    """Computational basis state for a bit string such as ``"0110"``."""
    bits = str(bits)
    state = zero_state(len(bits))
    state[0] = 0.0
    state[int(bits, 2)] = 1.0
    return state


# -- gate matrices ---------------------------------------------------------

def gate_rx(theta):
    theta = _check_angle(theta)
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=np.complex128)


def gate_hadamard():
    return np.array([[_SQRT1_2, _SQRT1_2], [_SQRT1_2, -_SQRT1_2]], dtype=np.complex128)


def gate_crz(theta):
    theta = _check_angle(theta)
    return np.diag(
        [1.0, 1.0, np.exp(-0.5j * theta), np.exp(0.5j * theta)]
    ).astype(np.complex128)


def gate_crx(theta):
    theta = _check_angle(theta)
    u = np.eye(4, dtype=np.complex128)
    u[2:, 2:] = gate_rx(theta)
    return u


def gate_cz():
    return np.diag([1.0, 1.0, 1.0, -1.0]).astype(np.complex128)


def gate_cswap():
    """Controlled-SWAP on (control, a, b): swaps ``|1 0 1>`` and ``|1 1 0>``."""
    u = np.eye(8, dtype=np.complex128)
    u[[5, 6]] = u[[6, 5]]
    return u


@dataclass(frozen=True)
class GateOp:
    """One gate application: kind, optional angle, target qubits."""

    kind: str
    targets: tuple
    param: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", self.kind.upper())
        object.__setattr__(self, "targets", tuple(int(q) for q in self.targets))
        if self.kind not in GATE_ARITY:
            raise ArgumentError(f"unknown gate kind {self.kind!r}")
        if len(self.targets) != GATE_ARITY[self.kind]:
            raise ApplicationError(
                f"{self.kind} acts on {GATE_ARITY[self.kind]} qubits, "
                f"got targets {self.targets}"
            )
        if self.kind in PARAMETRIC_GATES:
            if self.param is None:
                raise ArgumentError(f"{self.kind} requires an angle")
            object.__setattr__(self, "param", _check_angle(self.param))
        elif self.param is not None:
            raise ArgumentError(f"{self.kind} takes no angle")

    def matrix(self):
        return gate_matrix(self.kind, self.param)


GATE_ARITY = {"RX": 1, "H": 1, "CRZ": 2, "CRX": 2, "CZ": 2, "CSWAP": 3}
PARAMETRIC_GATES = frozenset({"RX", "CRZ", "CRX"})


def gate_matrix(kind, param=None):
    kind = kind.upper()
    if kind == "RX":
        return gate_rx(param)
    if kind == "H":
        return gate_hadamard()
    if kind == "CRZ":
        return gate_crz(param)
    if kind == "CRX":
        return gate_crx(param)
    if kind == "CZ":
        return gate_cz()
    if kind == "CSWAP":
        return gate_cswap()
    raise ArgumentError(f"unknown gate kind {kind!r}")


def is_unitary(u, atol=1e-12):
    u = np.asarray(u)
    return bool(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))) < atol)


# -- application -----------------------------------------------------------

def _check_targets(targets, n_qubits, gate_dim):
    targets = tuple(int(q) for q in targets)
    if (1 << len(targets)) != gate_dim:
        raise ApplicationError(
            f"gate of dimension {gate_dim} cannot act on {len(targets)} target(s)"
        )
    if len(set(targets)) != len(targets):
        raise ApplicationError(f"duplicate target qubits {targets}")
    for q in targets:
        if not 0 <= q < n_qubits:
            raise ApplicationError(f"target qubit {q} outside register of {n_qubits}")
    return targets


def _mix(states, gate, targets, n):
    """Apply ``gate`` to every row of ``states`` (shape ``(batch, 2**n)``)."""
    k = len(targets)
    batch = states.shape[0]
    tensor = states.reshape((batch,) + (2,) * n)
    # Move target axes last, in gate order, so the trailing 2**k index is
    # the gate's local basis index.
    src = [1 + q for q in targets]
    dst = list(range(n + 1 - k, n + 1))
    moved = np.moveaxis(tensor, src, dst).reshape(batch, -1, 1 << k)
    out = np.zeros_like(moved)
    for row in range(1 << k):
        acc = out[..., row]
        for col in range(1 << k):
            u = gate[row, col]
            if u != 0:
                acc += u * moved[..., col]
    out = out.reshape((batch,) + (2,) * n)
    return np.moveaxis(out, dst, src).reshape(batch, 1 << n)


def _check_norms(states):
    norms = np.einsum("ij,ij->i", states.conj(), states).real
    drift = np.max(np.abs(norms - 1.0))
    if drift > NORM_TOLERANCE:
        raise ConsistencyError(f"state norm drifted by {drift:.3e}")


def apply_gate(state, gate, targets):
    """Return ``gate`` applied to ``targets`` of ``state``.

    ``state`` may be a single vector or a 2-D batch with one state per row;
    the input is never modified.
    """
    state = np.asarray(state, dtype=np.complex128)
    gate = np.asarray(gate, dtype=np.complex128)
    if gate.ndim != 2 or gate.shape[0] != gate.shape[1]:
        raise ApplicationError(f"gate must be square, got shape {gate.shape}")
    n = n_qubits_of(state)
    targets = _check_targets(targets, n, gate.shape[0])
    batch = state.reshape(-1, 1 << n)
    out = _mix(batch, gate, targets, n)
    _check_norms(out)
    return out.reshape(state.shape)


def run_ops(state, ops: Iterable[GateOp]):
    """Apply a sequence of :class:`GateOp` to ``state`` (single or batched)."""
    for op in ops:
        state = apply_gate(state, op.matrix(), op.targets)
    return state


# -- readout ---------------------------------------------------------------

def _check_qubit(state, qubit):
    n = n_qubits_of(state)
    if not isinstance(qubit, (int, np.integer)) or not 0 <= qubit < n:
        raise ArgumentError(f"qubit {qubit!r} outside register of {n}")
    return n


def probability_zero(state, qubit):
    """Probability of reading ``0`` on ``qubit``. Works on batches too."""
    state = np.asarray(state)
    n = _check_qubit(state, qubit)
    probs = np.abs(state.reshape(state.shape[:-1] + (2,) * n)) ** 2
    zero = np.take(probs, 0, axis=state.ndim - 1 + qubit)
    return zero.reshape(state.shape[:-1] + (-1,)).sum(axis=-1)


def expectation_z(state, qubit):
    """Pauli-Z expectation ``P(0) - P(1)`` on ``qubit``."""
    state = np.asarray(state)
    n = _check_qubit(state, qubit)
    probs = np.abs(state.reshape(state.shape[:-1] + (2,) * n)) ** 2
    axis = state.ndim - 1 + qubit
    zero = np.take(probs, 0, axis=axis).reshape(state.shape[:-1] + (-1,)).sum(axis=-1)
    one = np.take(probs, 1, axis=axis).reshape(state.shape[:-1] + (-1,)).sum(axis=-1)
    return np.clip(zero - one, -1.0, 1.0)


def make_rng(seed):
    """Seeded PCG64 generator; its stream is identical on every platform."""
    return np.random.Generator(np.random.PCG64(seed))


def sample_z(state, qubit, shots, seed):
    """Mean of ``shots`` simulated Z measurements (+1 for 0, -1 for 1)."""
    if not isinstance(shots, (int, np.integer)) or shots < 1:
        raise ArgumentError(f"shots must be a positive integer, got {shots!r}")
    p0 = float(np.clip(probability_zero(state, qubit), 0.0, 1.0))
    zeros = make_rng(seed).binomial(int(shots), p0)
    return (2 * int(zeros) - int(shots)) / int(shots)


def inner_product(a, b):
    """``<a|b>`` with ``a`` conjugated."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise ArgumentError(f"state sizes differ: {a.shape} vs {b.shape}")
    return complex(np.vdot(a, b))


def tensor(*states):
    """Kronecker product of states, first argument on the leading qubits."""
    out = np.array([1.0 + 0j])
    for s in states:
        out = np.kron(out, np.asarray(s, dtype=np.complex128))
    return out


# -- dense oracle ----------------------------------------------------------

def embed_gate(gate, targets: Sequence[int], n_qubits):
    """Full ``2**n`` matrix of ``gate`` on ``targets``, identity elsewhere.

    Built entry by entry from the basis-index bits, independent of the
    strided application path.
    """
    gate = np.asarray(gate, dtype=np.complex128)
    targets = _check_targets(targets, n_qubits, gate.shape[0])
    dim = 1 << n_qubits
    idx = np.arange(dim)
    shifts = [n_qubits - 1 - q for q in targets]
    local = np.zeros(dim, dtype=np.int64)
    for s in shifts:
        local = (local << 1) | ((idx >> s) & 1)
    target_mask = sum(1 << s for s in shifts)
    rest = idx & ~target_mask
    same_rest = rest[:, None] == rest[None, :]
    return np.where(same_rest, gate[local[:, None], local[None, :]], 0.0)


def circuit_unitary(ops: Iterable[GateOp], n_qubits):
    """Dense unitary of a gate sequence (oracle; at most 8 qubits)."""
    if not 1 <= n_qubits <= MAX_ORACLE_QUBITS:
        raise SizeError(
            f"circuit_unitary supports 1..{MAX_ORACLE_QUBITS} qubits, got {n_qubits}"
        )
    u = np.eye(1 << n_qubits, dtype=np.complex128)
    for op in ops:
        u = embed_gate(op.matrix(), op.targets, n_qubits) @ u
    return u
