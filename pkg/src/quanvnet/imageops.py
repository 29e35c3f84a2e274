"""Classical 2-D image operators on float64 arrays.

Window sums are accumulated offset by offset in row-major kernel order,
the same order a naive quadruple loop uses, so results match such a loop
bit for bit.
"""
from __future__ import annotations

import numpy as np

from .errors import ArgumentError, RangeError, SizeError


def as_image(image):
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.size == 0:
        raise SizeError(f"expected a non-empty 2-D image, got shape {image.shape}")
    if not np.all(np.isfinite(image)):
        raise RangeError("image contains non-finite values")
    return image


def conv2d_valid(image, kernel):
    """Valid cross-correlation ``Y[i,j] = sum_mn X[i+m, j+n] * K[m,n]``."""
    x = as_image(image)
    k = as_image(kernel)
    kh, kw = k.shape
    if kh > x.shape[0] or kw > x.shape[1]:
        raise SizeError(f"kernel {k.shape} larger than image {x.shape}")
    oh, ow = x.shape[0] - kh + 1, x.shape[1] - kw + 1
    out = np.zeros((oh, ow))
    for m in range(kh):
        for n in range(kw):
            out += x[m:m + oh, n:n + ow] * k[m, n]
    return out


def _windows(x, window, stride):
    if window < 1 or stride < 1:
        raise ArgumentError(f"window and stride must be >= 1, got {window}, {stride}")
    h, w = x.shape
    if window > h or window > w:
        raise SizeError(f"window {window} exceeds image {x.shape}")
    oh = (h - window) // stride + 1
    ow = (w - window) // stride + 1
    span_h = (oh - 1) * stride + 1
    span_w = (ow - 1) * stride + 1
    for m in range(window):
        for n in range(window):
            yield x[m:m + span_h:stride, n:n + span_w:stride]


def max_pool(image, window=2, stride=2):
    """Window maxima; trailing partial windows are dropped."""
    out = None
    for view in _windows(as_image(image), window, stride):
        out = view.copy() if out is None else np.maximum(out, view)
    return out


def avg_pool(image, window=2, stride=2):
    out = None
    for view in _windows(as_image(image), window, stride):
        out = view.copy() if out is None else out + view
    return out / (window * window)


def l2_pool(image, window=2, stride=2):
    """Mean of squares over each window.

    There is deliberately no square root: this is the mean-of-squares form,
    not the Euclidean norm.
    """
    out = None
    for view in _windows(as_image(image), window, stride):
        out = view * view if out is None else out + view * view
    return out / (window * window)


def global_pool(image, mode="max"):
    x = as_image(image)
    if mode == "max":
        return float(x.max())
    if mode == "avg":
        return float(x.mean())
    raise ArgumentError(f"mode must be 'max' or 'avg', got {mode!r}")


def pad(image, margin, fill=0.0):
    x = as_image(image)
    if margin < 0:
        raise ArgumentError(f"margin must be non-negative, got {margin}")
    return np.pad(x, margin, mode="constant", constant_values=fill)


def resize_bilinear(image, out_h, out_w):
    """Corner-aligned bilinear resampling.

    Output corners coincide with input corners, so resizing to the same
    shape returns the input unchanged.
    """
    x = as_image(image)
    if out_h < 1 or out_w < 1:
        raise SizeError(f"target size must be positive, got {out_h}x{out_w}")
    h, w = x.shape

    def axis(n_in, n_out):
        if n_out == 1 or n_in == 1:
            pos = np.zeros(n_out)
        else:
            pos = np.arange(n_out) * ((n_in - 1) / (n_out - 1))
        lo = np.minimum(np.floor(pos).astype(int), n_in - 1)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, pos - lo

    r0, r1, fy = axis(h, out_h)
    c0, c1, fx = axis(w, out_w)
    top = x[r0][:, c0] + fx * (x[r0][:, c1] - x[r0][:, c0])
    bottom = x[r1][:, c0] + fx * (x[r1][:, c1] - x[r1][:, c0])
    out = top + fy[:, None] * (bottom - top)
    return np.clip(out, x.min(), x.max())


def normalize01(image, max_raw=255.0):
    """Scale raw intensities in ``[0, max_raw]`` to ``[0, 1]``."""
    x = as_image(image)
    if max_raw <= 0:
        raise ArgumentError(f"max_raw must be positive, got {max_raw}")
    if x.min() < 0 or x.max() > max_raw:
        raise RangeError(f"raw values must lie in [0, {max_raw}], got [{x.min()}, {x.max()}]")
    return x / max_raw
