"""
SWAP-test pooling
=================

The ancilla of a SWAP test reads 0 with probability (1 + |<a|b>|^2) / 2,
which measures how similar two encoded pixels are.
"""
import numpy as np

from quanvnet.circuit import encode_pixel, swap_test, swap_test_law

for a, b in [(0.0, 0.0), (0.0, 1.0), (0.2, 0.3), (0.5, 0.9)]:
    sa, sb = encode_pixel(a), encode_pixel(b)
    print(f"pixels {a:.1f}, {b:.1f}: circuit {swap_test(sa, sb):.6f} "
          f"law {swap_test_law(sa, sb):.6f} sampled {swap_test(sa, sb, shots=4096, seed=1):.4f}")

# Two-qubit registers are swapped qubit by qubit under the same ancilla.
a = np.kron(encode_pixel(0.3), encode_pixel(0.7))
b = np.kron(encode_pixel(0.3), encode_pixel(0.1))
print("two-qubit registers:", swap_test(a, b), swap_test_law(a, b))
