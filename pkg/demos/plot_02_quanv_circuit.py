"""
The quanvolution circuit
========================

Encode a 2x2 patch on four qubits, entangle, and read <Z> on qubit 0.
"""
import numpy as np

from quanvnet.circuit import (
    QuanvCircuitConfig,
    build_quanv_circuit,
    dump_circuit,
    run_quanv_circuit,
)

patch = [0.1, 0.6, 0.3, 0.9]
ops = build_quanv_circuit(patch)
print(dump_circuit(ops))

print("exact <Z0>      :", run_quanv_circuit(patch))
print("sampled (1e5)   :", run_quanv_circuit(patch, QuanvCircuitConfig(shots=10 ** 5, seed=0)))
print("open CR ring    :", run_quanv_circuit(patch, QuanvCircuitConfig(cr_ring_closure=False)))

# A blank patch never rotates any control, so the register stays |0000>.
print("blank patch     :", run_quanv_circuit([0, 0, 0, 0]))

# How the readout responds to a single pixel.
for v in np.linspace(0, 1, 5):
    print(f"pixel0={v:.2f} -> {run_quanv_circuit([v, 0.5, 0.5, 0.5]):+.4f}")
