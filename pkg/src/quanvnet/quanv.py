"""Quanvolution: sweep image patches through the quantum circuit.

Each ``patch_side x patch_side`` patch taken every ``step`` pixels is
flattened row-major, fed to the circuit, and its readout becomes one output
pixel. Maps can be stacked ``depth_q`` times; intermediate maps are
rescaled from ``[-1, 1]`` back to ``[0, 1]`` before re-encoding.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuit import QuanvCircuitConfig, run_quanv_batch
from .data import (
    cache_filename,
    preprocess_image,
    read_cache,
    write_cache,
)
from .errors import ArgumentError, CorruptionError, QuanvError, RangeError, SizeError
from .imageops import as_image

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class QuanvConfig:
    step: int = 2
    patch_side: int = 2
    depth_q: int = 1
    circuit: QuanvCircuitConfig = field(default_factory=QuanvCircuitConfig)
    rescale_intermediate: bool = True

    def __post_init__(self):
        if self.step < 1 or self.patch_side < 1 or self.depth_q < 1:
            raise ArgumentError("step, patch_side and depth_q must all be >= 1")
        if self.patch_side ** 2 != self.circuit.n_qubits:
            raise ArgumentError(
                f"a {self.patch_side}x{self.patch_side} patch needs "
                f"{self.patch_side ** 2} qubits, circuit has {self.circuit.n_qubits}"
            )


def extract_patch(image, row, col, side=2):
    x = np.asarray(image, dtype=np.float64)
    if row < 0 or col < 0 or row + side > x.shape[0] or col + side > x.shape[1]:
        raise SizeError(f"{side}x{side} patch at ({row}, {col}) outside image {x.shape}")
    return x[row:row + side, col:col + side].ravel().tolist()


def output_shape(shape, step=2, depth_q=1):
    h, w = shape
    for _ in range(depth_q):
        h, w = h // step, w // step
    return h, w


def _patch_matrix(x, step, side):
    """All patches as rows of a ``(oh*ow, side*side)`` array, row-major."""
    oh, ow = x.shape[0] // step, x.shape[1] // step
    # Floor sizing can place the last patch past the edge when side > step.
    if oh and (oh - 1) * step + side > x.shape[0]:
        oh -= 1
    if ow and (ow - 1) * step + side > x.shape[1]:
        ow -= 1
    rows = []
    for i in range(oh):
        for j in range(ow):
            r, c = i * step, j * step
            rows.append(x[r:r + side, c:c + side].ravel())
    return np.array(rows).reshape(oh * ow, side * side), (oh, ow)


def quanvolve_layer(image, config=QuanvConfig()):
    x = as_image(image)
    if x.shape[0] < config.patch_side or x.shape[1] < config.patch_side:
        raise SizeError(f"image {x.shape} smaller than {config.patch_side}x{config.patch_side} patch")
    if x.min() < 0.0 or x.max() > 1.0:
        raise RangeError("quanvolution input must lie in [0, 1]")
    patches, shape = _patch_matrix(x, config.step, config.patch_side)
    return run_quanv_batch(patches, config.circuit).reshape(shape)


def quanvolve_image(image, config=QuanvConfig()):
    """Apply ``config.depth_q`` quanvolution layers to an image in ``[0, 1]``."""
    out = quanvolve_layer(image, config)
    for _ in range(config.depth_q - 1):
        if config.rescale_intermediate:
            out = np.clip((out + 1.0) / 2.0, 0.0, 1.0)
        out = quanvolve_layer(out, config)
    return out


# -- dataset / cache -------------------------------------------------------

@dataclass
class ManifestEntry:
    id: str
    path: Path | None
    label: int
    status: str  # "computed", "skipped" or "error"
    error: str | None = None


def summarize(manifest):
    counts = {"computed": 0, "skipped": 0, "error": 0}
    for entry in manifest:
        counts[entry.status] += 1
    return counts


def _cache_valid(path, label, depth_q):
    try:
        entry = read_cache(path)
    except CorruptionError as exc:
        log.warning("recomputing corrupt cache file: %s", exc)
        return False
    return entry.label == label and entry.depth_q == depth_q


def _process(args):
    record, config, path, side, max_raw = args
    try:
        image = preprocess_image(record.image, side, max_raw)
        values = quanvolve_image(image, config)
        write_cache(path, values, record.label, config.depth_q)
    except (QuanvError, ValueError, OSError) as exc:
        return ManifestEntry(record.id, None, record.label, "error", str(exc))
    return ManifestEntry(record.id, path, record.label, "computed")


def quanvolve_dataset(records, config=QuanvConfig(), cache_dir=".", side=28,
                      max_raw=255.0, workers=1):
    """Quanvolve records into ``cache_dir``, skipping valid cache files.

    Each record is resized to ``side x side``, scaled by ``max_raw`` and
    transformed; the map and label are written to ``<id>.qnv`` in QNV1
    format. Per-record failures are reported in the returned manifest
    instead of raised. The manifest follows the order of ``records``.
    """
    cache_dir = Path(cache_dir)
    cache_dir.mkdir(parents=True, exist_ok=True)
    manifest = [None] * len(records)
    todo = []
    for i, rec in enumerate(records):
        path = cache_dir / cache_filename(rec.id)
        if path.exists() and _cache_valid(path, rec.label, config.depth_q):
            manifest[i] = ManifestEntry(rec.id, path, rec.label, "skipped")
        else:
            todo.append((i, (rec, config, path, side, max_raw)))
    if workers > 1 and len(todo) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_process, [args for _, args in todo], chunksize=8)
            for (i, _), entry in zip(todo, results):
                manifest[i] = entry
    else:
        for i, args in todo:
            manifest[i] = _process(args)
    return manifest
