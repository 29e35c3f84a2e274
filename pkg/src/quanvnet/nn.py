"""A small numpy CNN trained on quanvolved feature maps.

Architecture (valid convolutions throughout)::

    conv 32@3x3 -> ReLU -> maxpool 2 -> conv 64@3x3 -> ReLU -> maxpool 2
    -> flatten -> dense 128 -> ReLU -> dropout -> dense C -> softmax

For a 14x14 input the spatial chain is 14 -> 12 -> 6 -> 4 -> 2, giving a
256-wide flatten.
"""
from __future__ import annotations

import math
import struct
import zlib
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ArgumentError, ConfigurationError, CorruptionError, ShapeError, SizeError
from .statevector import make_rng

CE_EPS = 1e-12
KERNEL = 3
CONV1_FILTERS = 32
CONV2_FILTERS = 64
HIDDEN = 128


# -- activations -----------------------------------------------------------

def relu(x):
    return np.maximum(0.0, x)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out if out.ndim else float(out)


def softmax(logits):
    """Max-shifted softmax along the last axis."""
    z = np.asarray(logits, dtype=np.float64)
    if z.size == 0 or z.shape[-1] == 0:
        raise SizeError("softmax of an empty vector")
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def cross_entropy(probs, true_class):
    """``-log(p[y] + 1e-12)``; batched inputs give one loss per row."""
    probs = np.asarray(probs, dtype=np.float64)
    y = np.asarray(true_class)
    n_classes = probs.shape[-1]
    if np.any(y < 0) or np.any(y >= n_classes):
        raise ArgumentError(f"class index out of range for {n_classes} classes")
    picked = np.take_along_axis(np.atleast_2d(probs), np.atleast_1d(y)[:, None], axis=1)[:, 0]
    loss = -np.log(picked + CE_EPS)
    return float(loss[0]) if probs.ndim == 1 else loss


# -- parameters ------------------------------------------------------------

@dataclass
class ModelParams:
    conv1_w: np.ndarray
    conv1_b: np.ndarray
    conv2_w: np.ndarray
    conv2_b: np.ndarray
    dense1_w: np.ndarray
    dense1_b: np.ndarray
    dense2_w: np.ndarray
    dense2_b: np.ndarray

    @property
    def n_classes(self):
        return self.dense2_b.shape[0]

    def groups(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    def copy(self):
        return ModelParams(*(a.copy() for _, a in self.groups()))


GROUP_NAMES = tuple(f.name for f in fields(ModelParams))


def flatten_size(height, width):
    h, w = height, width
    for _ in range(2):
        h, w = (h - KERNEL + 1) // 2, (w - KERNEL + 1) // 2
    if h < 1 or w < 1:
        raise ShapeError(f"input {height}x{width} too small for the network")
    return CONV2_FILTERS * h * w


def weight_init(input_shape=(14, 14), n_classes=3, seed=0):
    """Glorot-uniform weights (bound ``sqrt(6/(fan_in+fan_out))``), zero biases."""
    rng = make_rng(seed) if not isinstance(seed, np.random.Generator) else seed
    flat = flatten_size(*input_shape)
    k2 = KERNEL * KERNEL

    def glorot(shape, fan_in, fan_out):
        bound = math.sqrt(6.0 / (fan_in + fan_out))
        return rng.uniform(-bound, bound, size=shape)

    return ModelParams(
        conv1_w=glorot((CONV1_FILTERS, 1, KERNEL, KERNEL), k2, CONV1_FILTERS * k2),
        conv1_b=np.zeros(CONV1_FILTERS),
        conv2_w=glorot((CONV2_FILTERS, CONV1_FILTERS, KERNEL, KERNEL),
                       CONV1_FILTERS * k2, CONV2_FILTERS * k2),
        conv2_b=np.zeros(CONV2_FILTERS),
        dense1_w=glorot((HIDDEN, flat), flat, HIDDEN),
        dense1_b=np.zeros(HIDDEN),
        dense2_w=glorot((n_classes, HIDDEN), HIDDEN, n_classes),
        dense2_b=np.zeros(n_classes),
    )


# -- layers ----------------------------------------------------------------

def _conv_forward(x, w, b):
    n, c, h, wd = x.shape
    f, wc, k, _ = w.shape
    if c != wc:
        raise ShapeError(f"conv expects {wc} input channels, got {c}")
    oh, ow = h - k + 1, wd - k + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"input {h}x{wd} smaller than {k}x{k} kernel")
    cols = sliding_window_view(x, (k, k), axis=(2, 3))  # n, c, oh, ow, k, k
    cols = cols.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    out = cols @ w.reshape(f, -1).T + b
    return out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2), cols


def _conv_backward(dout, x_shape, cols, w):
    n, c, h, wd = x_shape
    f, _, k, _ = w.shape
    oh, ow = dout.shape[2], dout.shape[3]
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dcols = (d2 @ w.reshape(f, -1)).reshape(n, oh, ow, c, k, k)
    dx = np.zeros(x_shape)
    for m in range(k):
        for q in range(k):
            dx[:, :, m:m + oh, q:q + ow] += dcols[..., m, q].transpose(0, 3, 1, 2)
    return dx, dw, db


def _pool_forward(x):
    """2x2/stride-2 max pool; the first maximum in each window wins."""
    n, c, h, w = x.shape
    oh, ow = h // 2, w // 2
    if oh < 1 or ow < 1:
        raise ShapeError(f"cannot 2x2-pool a {h}x{w} map")
    win = x[:, :, :oh * 2, :ow * 2].reshape(n, c, oh, 2, ow, 2)
    win = win.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, 4)
    arg = win.argmax(axis=-1)
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    return out, arg


def _pool_backward(dout, arg, x_shape):
    n, c, h, w = x_shape
    oh, ow = dout.shape[2], dout.shape[3]
    dwin = np.zeros((n, c, oh, ow, 4))
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dwin = dwin.reshape(n, c, oh, ow, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros(x_shape)
    dx[:, :, :oh * 2, :ow * 2] = dwin.reshape(n, c, oh * 2, ow * 2)
    return dx


def dropout_mask(shape, rate, rng):
    """Inverted-dropout mask: 0 with probability ``rate``, else ``1/(1-rate)``."""
    if rate <= 0:
        return np.ones(shape)
    keep = rng.random(shape) >= rate
    return keep / (1.0 - rate)


def _as_batch(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, None]
    elif x.ndim == 3:
        x = x[:, None]
    if x.ndim != 4 or x.shape[1] != 1:
        raise ShapeError(f"expected (N, 1, H, W) input, got shape {x.shape}")
    return x


def forward(params, x, mask=None):
    """Forward pass on a batch.

    ``x`` is ``(N, H, W)``, ``(N, 1, H, W)`` or a single ``(H, W)`` map.
    ``mask`` is the dropout mask for the hidden layer (``None`` = eval mode).
    Returns ``(probs, cache)``; ``cache`` holds every activation, keyed by
    layer name, and is what :func:`backward` consumes.
    """
    x = _as_batch(x)
    if params.dense1_w.shape[1] != flatten_size(*x.shape[2:]):
        raise ShapeError(
            f"input {x.shape[2:]} flattens to {flatten_size(*x.shape[2:])}, "
            f"dense1 expects {params.dense1_w.shape[1]}"
        )
    cache = {"input": x}
    z1, cols1 = _conv_forward(x, params.conv1_w, params.conv1_b)
    a1 = relu(z1)
    p1, arg1 = _pool_forward(a1)
    z2, cols2 = _conv_forward(p1, params.conv2_w, params.conv2_b)
    a2 = relu(z2)
    p2, arg2 = _pool_forward(a2)
    flat = p2.reshape(p2.shape[0], -1)
    h = flat @ params.dense1_w.T + params.dense1_b
    hr = relu(h)
    hd = hr if mask is None else hr * mask
    logits = hd @ params.dense2_w.T + params.dense2_b
    probs = softmax(logits)
    cache.update(
        z1=z1, cols1=cols1, a1=a1, p1=p1, arg1=arg1,
        z2=z2, cols2=cols2, a2=a2, p2=p2, arg2=arg2,
        flat=flat, h=h, hr=hr, mask=mask, hd=hd, logits=logits, probs=probs,
    )
    return probs, cache


def backward(params, cache, y):
    """Gradients of the mean cross-entropy over the batch in ``cache``."""
    probs = cache["probs"]
    y = np.asarray(y)
    n = probs.shape[0]
    if y.shape != (n,):
        raise ShapeError(f"expected {n} labels, got shape {y.shape}")
    dlogits = probs.copy()
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n

    d2w = dlogits.T @ cache["hd"]
    d2b = dlogits.sum(axis=0)
    dhd = dlogits @ params.dense2_w
    dhr = dhd if cache["mask"] is None else dhd * cache["mask"]
    dh = dhr * (cache["h"] > 0)
    d1w = dh.T @ cache["flat"]
    d1b = dh.sum(axis=0)
    dp2 = (dh @ params.dense1_w).reshape(cache["p2"].shape)
    da2 = _pool_backward(dp2, cache["arg2"], cache["a2"].shape)
    dz2 = da2 * (cache["z2"] > 0)
    dp1, c2w, c2b = _conv_backward(dz2, cache["p1"].shape, cache["cols2"], params.conv2_w)
    da1 = _pool_backward(dp1, cache["arg1"], cache["a1"].shape)
    dz1 = da1 * (cache["z1"] > 0)
    _, c1w, c1b = _conv_backward(dz1, cache["input"].shape, cache["cols1"], params.conv1_w)
    return ModelParams(c1w, c1b, c2w, c2b, d1w, d1b, d2w, d2b)


def batch_loss(params, x, y, mask=None):
    probs, _ = forward(params, x, mask)
    return float(np.mean(cross_entropy(probs, y)))


def predict_proba(params, x, batch_size=256):
    x = _as_batch(x)
    out = [forward(params, x[i:i + batch_size])[0] for i in range(0, len(x), batch_size)]
    return np.concatenate(out, axis=0)


# -- optimizers ------------------------------------------------------------

class SGD:
    def __init__(self, lr=1e-3):
        self.lr = lr

    def step(self, params, grads):
        for name in GROUP_NAMES:
            getattr(params, name)[...] -= self.lr * getattr(grads, name)


class Adam:
    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name in GROUP_NAMES:
            g = getattr(grads, name)
            m = self.m.get(name)
            if m is None:
                m = self.m[name] = np.zeros_like(g)
                self.v[name] = np.zeros_like(g)
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            getattr(params, name)[...] -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# -- training --------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch_size: int = 32
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    dropout_rate: float = 0.5
    seed: int = 0
    val_fraction: float = 0.2
    n_classes: int | None = None

    def __post_init__(self):
        if self.epochs < 0 or self.batch_size < 1:
            raise ConfigurationError("epochs must be >= 0 and batch_size >= 1")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.optimizer not in ("adam", "sgd"):
            raise ConfigurationError(f"optimizer must be 'adam' or 'sgd', got {self.optimizer!r}")
        if not 0 <= self.dropout_rate < 1:
            raise ConfigurationError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if not 0 < self.val_fraction < 1:
            raise ConfigurationError(f"val_fraction must be in (0, 1), got {self.val_fraction}")


@dataclass
class Metrics:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    train_acc: list = field(default_factory=list)
    val_acc: list = field(default_factory=list)
    confusion: np.ndarray | None = None
    val_accuracy: float = float("nan")
    n_train: int = 0
    n_val: int = 0

    @property
    def epochs(self):
        return len(self.train_loss)


def confusion_matrix(y_true, y_pred, n_classes):
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def evaluate(params, x, y, batch_size=256):
    """Return ``(accuracy, confusion, mean_loss)`` with argmax decisions.

    ``np.argmax`` returns the first maximum, so exact ties go to the lowest
    class index.
    """
    y = np.asarray(y)
    if len(y) == 0:
        raise SizeError("cannot evaluate on an empty set")
    probs = predict_proba(params, x, batch_size)
    pred = probs.argmax(axis=1)
    cm = confusion_matrix(y, pred, params.n_classes)
    accuracy = np.trace(cm) / cm.sum()
    return float(accuracy), cm, float(np.mean(cross_entropy(probs, y)))


def train(records, config=TrainConfig()):
    """Train on ``(feature_map, class_index)`` pairs.

    The data are split (stratified, seeded) into train/validation parts;
    after every epoch both parts are scored in eval mode. Returns the final
    parameters and the :class:`Metrics`, whose confusion matrix is on the
    validation part. Identical inputs and config give identical results.
    """
    from .data import split

    if not records:
        raise ConfigurationError("no training records")
    labels = [int(y) for _, y in records]
    if len(set(labels)) < 2:
        raise ConfigurationError("training needs at least two classes")
    n_classes = config.n_classes or max(labels) + 1
    if max(labels) >= n_classes or min(labels) < 0:
        raise ConfigurationError(f"labels must lie in [0, {n_classes})")

    seeds = np.random.SeedSequence(config.seed).spawn(3)
    split_seed = int(seeds[0].generate_state(1)[0])
    train_set, val_set = split(records, config.val_fraction, split_seed, labels=labels)
    xt = _as_batch(np.stack([m for m, _ in train_set]))
    yt = np.array([y for _, y in train_set])
    xv = _as_batch(np.stack([m for m, _ in val_set]))
    yv = np.array([y for _, y in val_set])

    params = weight_init(xt.shape[2:], n_classes, np.random.Generator(np.random.PCG64(seeds[1])))
    rng = np.random.Generator(np.random.PCG64(seeds[2]))
    opt = Adam(config.learning_rate) if config.optimizer == "adam" else SGD(config.learning_rate)

    metrics = Metrics(n_train=len(yt), n_val=len(yv))
    for _ in range(config.epochs):
        order = rng.permutation(len(yt))
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            mask = dropout_mask((len(idx), HIDDEN), config.dropout_rate, rng)
            _, cache = forward(params, xt[idx], mask)
            opt.step(params, backward(params, cache, yt[idx]))
        acc, _, loss = evaluate(params, xt, yt)
        metrics.train_loss.append(loss)
        metrics.train_acc.append(acc)
        acc, _, loss = evaluate(params, xv, yv)
        metrics.val_loss.append(loss)
        metrics.val_acc.append(acc)
    metrics.val_accuracy, metrics.confusion, _ = evaluate(params, xv, yv)
    return params, metrics


# -- QNNW checkpoints ------------------------------------------------------

QNNW_MAGIC = b"QNNW"
QNNW_VERSION = 1
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


def encode_params(params):
    """Serialize parameters.

    Layout (little-endian): ``"QNNW" | u16 version | u32 C | u32 groups |
    per group: u32 ndim, u32 dims... | f64 values of every group in order |
    u32 CRC32 of all preceding bytes``. Group order is conv1_w, conv1_b,
    conv2_w, conv2_b, dense1_w, dense1_b, dense2_w, dense2_b.
    """
    head = [QNNW_MAGIC, _U16.pack(QNNW_VERSION), _U32.pack(params.n_classes),
            _U32.pack(len(GROUP_NAMES))]
    payload = []
    for _, arr in params.groups():
        head.append(_U32.pack(arr.ndim))
        head.extend(_U32.pack(d) for d in arr.shape)
        payload.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    body = b"".join(head + payload)
    return body + _U32.pack(zlib.crc32(body))


def decode_params(data, path=None):
    def need(pos, size, what):
        if pos + size > len(data):
            raise CorruptionError("truncated", f"file ends inside {what}", path)

    need(0, 4 + 2 + 4 + 4, "header")
    if data[:4] != QNNW_MAGIC:
        raise CorruptionError("magic", f"bad magic {data[:4]!r}", path)
    (version,) = _U16.unpack_from(data, 4)
    if version != QNNW_VERSION:
        raise CorruptionError("version", f"unsupported version {version}", path)
    (n_classes,) = _U32.unpack_from(data, 6)
    (n_groups,) = _U32.unpack_from(data, 10)
    if n_groups != len(GROUP_NAMES):
        raise CorruptionError("groups", f"expected {len(GROUP_NAMES)} groups, got {n_groups}", path)
    pos = 14
    shapes = []
    for name in GROUP_NAMES:
        need(pos, 4, f"{name} shape")
        (ndim,) = _U32.unpack_from(data, pos)
        if ndim > 4:
            raise CorruptionError("shape", f"{name} has {ndim} dimensions", path)
        need(pos + 4, 4 * ndim, f"{name} shape")
        shapes.append(struct.unpack_from(f"<{ndim}I", data, pos + 4))
        pos += 4 + 4 * ndim
    total = sum(int(np.prod(s)) for s in shapes)
    need(pos, 8 * total + 4, "weights")
    end = pos + 8 * total
    if len(data) != end + 4:
        raise CorruptionError("length", f"{len(data) - end - 4} trailing bytes", path)
    (crc,) = _U32.unpack_from(data, end)
    if zlib.crc32(data[:end]) != crc:
        raise CorruptionError("crc", "CRC32 mismatch", path)
    arrays = []
    for shape in shapes:
        count = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f8", count=count, offset=pos)
        arrays.append(arr.reshape(shape).astype(np.float64))
        pos += 8 * count
    params = ModelParams(*arrays)
    if params.n_classes != n_classes:
        raise CorruptionError("shape", f"header says {n_classes} classes, dense2 has {params.n_classes}", path)
    return params


def save_params(path, params):
    from .data import atomic_write

    atomic_write(path, encode_params(params))


def load_params(path):
    return decode_params(Path(path).read_bytes(), path)


def input_side(params):
    """Square input side implied by the dense1 fan-in."""
    spatial = params.dense1_w.shape[1] // CONV2_FILTERS
    s = math.isqrt(spatial)
    if s * s * CONV2_FILTERS != params.dense1_w.shape[1]:
        raise ShapeError("dense1 fan-in does not correspond to a square input")
    return ((s * 2 + KERNEL - 1) * 2) + KERNEL - 1
