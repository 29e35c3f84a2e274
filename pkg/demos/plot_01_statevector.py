"""
State vectors and gates
=======================

Build a small register, apply the gates used by the quanvolution circuit,
and compare the strided application path with the dense unitary.
"""
import math

import numpy as np

from quanvnet.statevector import (
    GateOp,
    apply_gate,
    circuit_unitary,
    expectation_z,
    gate_crz,
    gate_hadamard,
    gate_rx,
    probability_zero,
    run_ops,
    sample_z,
    zero_state,
)

# Qubit 0 is the leftmost bit: |q0 q1> sits at index 2*q0 + q1.
psi = apply_gate(zero_state(2), gate_rx(math.pi), [0])
print("RX(pi) on qubit 0 of |00>:", np.round(psi, 12))

# A Hadamard gives an equal superposition; <Z> = 0 and P(0) = 1/2.
plus = apply_gate(zero_state(1), gate_hadamard(), [0])
print("<Z> on |+> =", expectation_z(plus, 0), " P(0) =", probability_zero(plus, 0))

# Shot sampling is seeded, so the same seed always gives the same estimate.
print("sampled <Z> (10^5 shots):", sample_z(plus, 0, 10 ** 5, seed=1))

# The dense oracle builds the full 2^n matrix; it agrees with gate-by-gate
# simulation to rounding.
ops = [GateOp("H", (0,)), GateOp("CRZ", (0, 2), math.pi / 2), GateOp("RX", (1,), 0.3)]
state = run_ops(zero_state(3), ops)
dense = circuit_unitary(ops, 3) @ zero_state(3)
print("max |sequential - dense| =", np.max(np.abs(state - dense)))
print("CRZ(pi/2) diagonal:", np.round(np.diag(gate_crz(math.pi / 2)), 6))
