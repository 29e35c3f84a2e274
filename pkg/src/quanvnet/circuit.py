"""The 4-qubit quanvolution circuit and the SWAP-test pooling primitive.

A patch of pixel values ``p_k`` in ``[0, 1]`` is encoded with ``RX(p_k*pi)``
on qubit ``k``, entangled by a controlled-rotation layer (``CRZ`` then
``CRX`` on each neighbouring pair, control first) and a ``CZ`` ring, then
read out as ``<Z>`` on one qubit.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, RangeError
from .statevector import (
    GateOp,
    _check_norms,
    _mix,
    expectation_z,
    gate_cswap,
    gate_rx,
    inner_product,
    make_rng,
    n_qubits_of,
    probability_zero,
    run_ops,
    sample_z,
    tensor,
    zero_state,
)


@dataclass(frozen=True)
class QuanvCircuitConfig:
    """Settings for one quanvolution circuit evaluation.

    ``shots=None`` reads out the exact expectation value; an integer switches
    to seeded shot sampling.
    """

    n_qubits: int = 4
    theta: float = math.pi / 2
    cr_ring_closure: bool = True
    readout_qubit: int = 0
    shots: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.n_qubits < 2:
            raise ArgumentError(f"n_qubits must be >= 2, got {self.n_qubits}")
        if not 0 <= self.readout_qubit < self.n_qubits:
            raise ArgumentError(
                f"readout_qubit {self.readout_qubit} outside {self.n_qubits} qubits"
            )
        if not math.isfinite(self.theta):
            raise ArgumentError(f"theta must be finite, got {self.theta!r}")
        if self.shots is not None and self.shots < 1:
            raise ArgumentError(f"shots must be positive, got {self.shots}")

    @property
    def exact(self):
        return self.shots is None


def _check_pixels(pixels, n_qubits):
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.shape[-1] != n_qubits:
        raise ArgumentError(f"expected {n_qubits} pixel values, got {pixels.shape[-1]}")
    if not np.all(np.isfinite(pixels)) or np.any(pixels < 0.0) or np.any(pixels > 1.0):
        raise RangeError("pixel values must lie in [0, 1]")
    return pixels


def encode_pixel(value):
    """Single-qubit state ``RX(value*pi)|0>``."""
    value = float(value)
    if not 0.0 <= value <= 1.0:
        raise RangeError(f"pixel value {value} outside [0, 1]")
    return gate_rx(value * math.pi)[:, 0].copy()


def entangling_pairs(config):
    n = config.n_qubits
    pairs = [(k, k + 1) for k in range(n - 1)]
    if config.cr_ring_closure:
        pairs.append((n - 1, 0))
    return pairs


def entangling_ops(config):
    """The pixel-independent part of the circuit (CR layer + CZ ring)."""
    ops = []
    for control, target in entangling_pairs(config):
        ops.append(GateOp("CRZ", (control, target), config.theta))
        ops.append(GateOp("CRX", (control, target), config.theta))
    n = config.n_qubits
    for k in range(n):
        ops.append(GateOp("CZ", (k, (k + 1) % n)))
    return ops


def build_quanv_circuit(pixels, config=QuanvCircuitConfig()):
    """Gate list for one patch, in time order."""
    pixels = _check_pixels(pixels, config.n_qubits)
    if pixels.ndim != 1:
        raise ArgumentError("build_quanv_circuit takes a single patch")
    ops = [GateOp("RX", (k,), float(p) * math.pi) for k, p in enumerate(pixels)]
    return ops + entangling_ops(config)


def _encode_batch(pixels):
    """Product states ``(x) RX(p_k*pi)|0>`` for each row of ``pixels``."""
    half = pixels * (math.pi / 2)
    # RX(phi)|0> = cos(phi/2)|0> - i sin(phi/2)|1>
    qubit = np.stack([np.cos(half) + 0j, -1j * np.sin(half)], axis=-1)
    batch, n = pixels.shape
    states = qubit[:, 0, :]
    for k in range(1, n):
        states = (states[:, :, None] * qubit[:, k, None, :]).reshape(batch, -1)
    return states


def quanv_states(pixels, config=QuanvCircuitConfig()):
    """Final register states for a batch of patches, shape ``(batch, 2**n)``."""
    pixels = _check_pixels(np.atleast_2d(pixels), config.n_qubits)
    states = _encode_batch(pixels)
    return run_ops(states, entangling_ops(config))


def run_quanv_batch(pixels, config=QuanvCircuitConfig()):
    """Readout values for a ``(batch, n_qubits)`` array of patches."""
    states = quanv_states(pixels, config)
    if config.exact:
        return expectation_z(states, config.readout_qubit)
    p0 = np.clip(probability_zero(states, config.readout_qubit), 0.0, 1.0)
    zeros = make_rng(config.seed).binomial(config.shots, p0)
    return (2.0 * zeros - config.shots) / config.shots


def run_quanv_circuit(pixels, config=QuanvCircuitConfig()):
    """``<Z>`` on the readout qubit after the circuit for one patch."""
    ops = build_quanv_circuit(pixels, config)
    state = run_ops(zero_state(config.n_qubits), ops)
    if config.exact:
        return float(expectation_z(state, config.readout_qubit))
    return sample_z(state, config.readout_qubit, config.shots, config.seed)


_H_UNSCALED = np.array([[1, 1], [1, -1]], dtype=np.complex128)


def swap_test(a, b, shots=None, seed=0):
    """Probability that the SWAP-test ancilla reads 0.

    Exact mode returns ``(1 + |<a|b>|^2) / 2``; with ``shots`` the empirical
    frequency over seeded samples is returned instead.
    """
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise ArgumentError(f"register sizes differ: {a.shape} vs {b.shape}")
    m = n_qubits_of(a)
    state = tensor(zero_state(1), a, b)
    # Both Hadamards use the unscaled [[1, 1], [1, -1]]; the combined factor
    # 1/2 on amplitudes becomes an exact 1/4 on probabilities, so analytic
    # points such as identical basis states come out as exactly 1.0.
    state = _mix(state[None, :], _H_UNSCALED, (0,), 1 + 2 * m)
    for k in range(m):
        state = _mix(state, gate_cswap(), (0, 1 + k, 1 + m + k), 1 + 2 * m)
    state = _mix(state, _H_UNSCALED, (0,), 1 + 2 * m)[0] / 2.0
    _check_norms(state[None, :])
    p0 = float(np.clip(probability_zero(state, 0), 0.0, 1.0))
    if shots is None:
        return p0
    if shots < 1:
        raise ArgumentError(f"shots must be positive, got {shots}")
    return make_rng(seed).binomial(int(shots), p0) / shots


def swap_test_law(a, b):
    """Closed form ``(1 + |<a|b>|^2) / 2`` of the SWAP-test statistic."""
    return 0.5 * (1.0 + abs(inner_product(a, b)) ** 2)


# -- text form -------------------------------------------------------------

def dump_circuit(ops):
    """One line per gate: ``KIND [angle] q0 q1 ...``."""
    lines = []
    for op in ops:
        fields = [op.kind]
        if op.param is not None:
            fields.append(repr(float(op.param)))
        fields.extend(str(q) for q in op.targets)
        lines.append(" ".join(fields))
    return "\n".join(lines) + ("\n" if lines else "")


def parse_circuit(text):
    ops = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *rest = line.split()
        kind = kind.upper()
        try:
            if kind in ("RX", "CRZ", "CRX"):
                ops.append(GateOp(kind, tuple(int(q) for q in rest[1:]), float(rest[0])))
            else:
                ops.append(GateOp(kind, tuple(int(q) for q in rest)))
        except (IndexError, ValueError) as exc:
            raise ArgumentError(f"line {lineno}: cannot parse {line!r}: {exc}") from exc
    return ops
