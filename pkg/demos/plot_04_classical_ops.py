"""
Classical convolution and pooling
=================================
"""
import numpy as np

from quanvnet.imageops import (
    avg_pool,
    conv2d_valid,
    global_pool,
    l2_pool,
    max_pool,
    pad,
    resize_bilinear,
)

x = np.arange(1, 17, dtype=float).reshape(4, 4)
print("max pool\n", max_pool(x, 2, 2))
print("average pool\n", avg_pool(x, 2, 2))
# Mean of squares over each window (no square root).
print("l2 pool\n", l2_pool(x, 2, 2))
print("global max / avg:", global_pool(x, "max"), global_pool(x, "avg"))

edge = np.array([[1.0, 0.0, -1.0]] * 3)
print("valid conv\n", conv2d_valid(x, edge))
print("same-size conv via padding:", conv2d_valid(pad(x, 1), edge).shape)
print("bilinear 4x4 -> 3x5\n", np.round(resize_bilinear(x, 3, 5), 3))
