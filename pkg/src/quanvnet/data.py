"""Dataset IO: PGM images, ``labels.csv`` directories, the QNV1 feature-map
cache, a synthetic shape corpus and seeded stratified splits."""
from __future__ import annotations

import csv
import logging
import math
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ArgumentError, CorruptionError, SizeError
from .imageops import normalize01, resize_bilinear
from .statevector import make_rng

log = logging.getLogger(__name__)

DEFAULT_LABEL_MAP = {1: "meningioma", 2: "glioma", 3: "pituitary"}
FOUR_CLASS_LABEL_MAP = {**DEFAULT_LABEL_MAP, 4: "no_tumor"}
LABELS_CSV = "labels.csv"
LABELS_HEADER = ["filename", "label", "id"]


@dataclass
class DatasetRecord:
    id: str
    image: np.ndarray
    label: int


@dataclass
class LoadReport:
    records: list = field(default_factory=list)
    errors: list = field(default_factory=list)  # (row id or filename, message)


def label_map_for(n_classes):
    if n_classes == 3:
        return dict(DEFAULT_LABEL_MAP)
    if n_classes == 4:
        return dict(FOUR_CLASS_LABEL_MAP)
    raise ArgumentError(f"classes must be 3 or 4, got {n_classes}")


def class_index(label_map, code):
    """Position of ``code`` in the label map (the network's output unit)."""
    return list(label_map).index(code)


# -- PGM -------------------------------------------------------------------

def _pgm_tokens(data, count):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    tokens, pos = [], 0
    while len(tokens) < count:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ValueError("truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    return tokens, pos + 1  # exactly one whitespace byte ends the header


def read_pgm(path):
    """Decode a binary (P5) PGM into a float64 array of raw intensities."""
    data = Path(path).read_bytes()
    tokens, offset = _pgm_tokens(data, 4)
    if tokens[0] != b"P5":
        raise ValueError(f"not a binary PGM (magic {tokens[0]!r})")
    width, height, maxval = (int(t) for t in tokens[1:])
    if width < 1 or height < 1 or not 1 <= maxval <= 65535:
        raise ValueError(f"bad PGM header {width}x{height} maxval {maxval}")
    dtype = np.uint8 if maxval < 256 else np.dtype(">u2")
    count = width * height
    pixels = np.frombuffer(data, dtype=dtype, count=-1, offset=offset)
    if pixels.size < count:
        raise ValueError(f"PGM payload truncated: {pixels.size} of {count} pixels")
    return pixels[:count].reshape(height, width).astype(np.float64)


def write_pgm(path, image, maxval=255):
    image = np.asarray(image)
    if image.ndim != 2:
        raise SizeError(f"PGM images are 2-D, got shape {image.shape}")
    pixels = np.clip(np.rint(image), 0, maxval)
    pixels = pixels.astype(np.uint8 if maxval < 256 else ">u2")
    header = f"P5\n{image.shape[1]} {image.shape[0]}\n{maxval}\n".encode("ascii")
    Path(path).write_bytes(header + pixels.tobytes())


# -- dataset directories ---------------------------------------------------

def load_dataset_dir(path, label_map=None):
    """Load every row of ``<path>/labels.csv``.

    A missing ``labels.csv`` raises ``FileNotFoundError``. Rows with an
    unknown label code or an undecodable image are reported in
    ``LoadReport.errors`` and skipped; the remaining rows load normally.
    """
    label_map = DEFAULT_LABEL_MAP if label_map is None else label_map
    root = Path(path)
    csv_path = root / LABELS_CSV
    if not csv_path.is_file():
        raise FileNotFoundError(f"{csv_path} not found")
    report = LoadReport()
    with open(csv_path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(LABELS_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise ArgumentError(f"{csv_path}: missing columns {sorted(missing)}")
        for row in reader:
            name = row["filename"]
            rid = row["id"] or Path(name).stem
            try:
                code = int(row["label"])
            except ValueError:
                report.errors.append((rid, f"label {row['label']!r} is not an integer"))
                continue
            if code not in label_map:
                report.errors.append((rid, f"unknown label code {code}"))
                continue
            try:
                image = read_pgm(root / name)
            except (OSError, ValueError) as exc:
                report.errors.append((rid, f"{name}: {exc}"))
                continue
            report.records.append(DatasetRecord(rid, image, code))
    return report


def save_dataset_dir(path, records):
    """Write records as PGM files plus ``labels.csv``."""
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    rows = []
    for rec in records:
        name = f"{rec.id}.pgm"
        write_pgm(root / name, rec.image)
        rows.append([name, rec.label, rec.id])
    with open(root / LABELS_CSV, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LABELS_HEADER)
        writer.writerows(rows)
    return root


def preprocess_image(image, side=28, max_raw=255.0):
    """Resize to ``side x side`` and scale into ``[0, 1]``."""
    image = np.asarray(image, dtype=np.float64)
    if image.shape != (side, side):
        image = resize_bilinear(image, side, side)
    return normalize01(image, max_raw)


# -- synthetic corpus ------------------------------------------------------

SHAPES = ("disc", "hollow_square", "diagonal_bar", "cross")


def _draw(shape, side, rng):
    yy, xx = np.mgrid[0:side, 0:side].astype(np.float64)
    cy = side / 2 + rng.uniform(-0.1, 0.1) * side
    cx = side / 2 + rng.uniform(-0.1, 0.1) * side
    r = side * rng.uniform(0.22, 0.32)
    if shape == "disc":
        mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    elif shape == "hollow_square":
        t = max(1.5, 0.12 * side)
        d = np.maximum(np.abs(yy - cy), np.abs(xx - cx))
        mask = (d <= r) & (d >= r - t)
    elif shape == "diagonal_bar":
        t = max(1.5, 0.1 * side)
        along = np.abs((yy - cy) + (xx - cx)) / math.sqrt(2)
        across = np.abs((yy - cy) - (xx - cx)) / math.sqrt(2)
        mask = (along <= t) & (across <= 1.3 * r)
    else:
        t = max(1.0, 0.08 * side)
        mask = ((np.abs(yy - cy) <= t) & (np.abs(xx - cx) <= r)) | (
            (np.abs(xx - cx) <= t) & (np.abs(yy - cy) <= r)
        )
    return mask.astype(np.float64)


def generate_synthetic(per_class, side=28, classes=3, seed=0, noise=0.08):
    """Balanced corpus of noisy geometric shapes, one shape per class.

    Images hold raw 8-bit intensities (0..255). Labels use the tumor coding
    (1, 2, 3 and, for four classes, 4) so the corpus drops into the same
    pipeline as real data.
    """
    if side < 8:
        raise SizeError(f"side must be >= 8, got {side}")
    if per_class < 1:
        raise ArgumentError(f"per_class must be positive, got {per_class}")
    names = label_map_for(classes)
    rng = make_rng(seed)
    records = []
    for i in range(per_class):
        for k, (code, name) in enumerate(names.items()):
            mask = _draw(SHAPES[k], side, rng)
            level = rng.uniform(0.7, 1.0)
            img = 0.1 + (level - 0.1) * mask + rng.normal(0.0, noise, mask.shape)
            img = np.clip(np.rint(255.0 * img), 0, 255)
            records.append(DatasetRecord(f"{name}_{i:04d}", img, code))
    return records


# -- splits ----------------------------------------------------------------

def _round_half_up(x):
    return int(math.floor(x + 0.5))


def split(records, val_fraction=0.2, seed=0, labels=None):
    """Seeded stratified split into ``(train, val)``.

    The validation set has ``round(val_fraction * N)`` items, distributed
    across classes by largest remainder so every class keeps its share to
    within one item. ``labels`` defaults to each record's ``label``.
    """
    n = len(records)
    if n < 2:
        raise SizeError(f"need at least 2 records to split, got {n}")
    if not 0 < val_fraction < 1:
        raise ArgumentError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if labels is None:
        labels = [r.label for r in records]
    rng = make_rng(seed)
    n_val = min(max(_round_half_up(val_fraction * n), 1), n - 1)

    groups = {}
    for i, y in enumerate(labels):
        groups.setdefault(y, []).append(i)
    classes = sorted(groups)
    quotas = {y: n_val * len(groups[y]) / n for y in classes}
    take = {y: int(math.floor(quotas[y])) for y in classes}
    by_remainder = sorted(classes, key=lambda y: (-(quotas[y] - take[y]), y))
    for y in by_remainder[: n_val - sum(take.values())]:
        take[y] += 1

    val_idx, train_idx = [], []
    for y in classes:
        idx = np.array(groups[y])
        rng.shuffle(idx)
        val_idx.extend(idx[: take[y]].tolist())
        train_idx.extend(idx[take[y]:].tolist())
    val_idx = rng.permutation(val_idx).tolist()
    train_idx = rng.permutation(train_idx).tolist()
    return [records[i] for i in train_idx], [records[i] for i in val_idx]


# -- QNV1 cache ------------------------------------------------------------

QNV_MAGIC = b"QNV1"
QNV_VERSION = 1
_QNV_HEADER = struct.Struct("<4sHIIII")
_CRC = struct.Struct("<I")


@dataclass
class CacheEntry:
    values: np.ndarray
    label: int
    depth_q: int = 1


def encode_cache(values, label, depth_q=1):
    values = np.ascontiguousarray(values, dtype="<f8")
    if values.ndim != 2:
        raise SizeError(f"feature maps are 2-D, got shape {values.shape}")
    h, w = values.shape
    body = _QNV_HEADER.pack(QNV_MAGIC, QNV_VERSION, h, w, int(label), int(depth_q))
    body += values.tobytes()
    return body + _CRC.pack(zlib.crc32(body))


def decode_cache(data, path=None):
    """Parse QNV1 bytes; raises :class:`CorruptionError` naming the bad field."""
    if len(data) < _QNV_HEADER.size + _CRC.size:
        raise CorruptionError("truncated", f"file too short ({len(data)} bytes)", path)
    magic, version, h, w, label, depth_q = _QNV_HEADER.unpack_from(data)
    if magic != QNV_MAGIC:
        raise CorruptionError("magic", f"bad magic {magic!r}", path)
    if version != QNV_VERSION:
        raise CorruptionError("version", f"unsupported version {version}", path)
    expected = _QNV_HEADER.size + 8 * h * w + _CRC.size
    if len(data) != expected:
        field_name = "truncated" if len(data) < expected else "length"
        raise CorruptionError(
            field_name, f"expected {expected} bytes for {h}x{w}, got {len(data)}", path
        )
    (crc,) = _CRC.unpack_from(data, expected - _CRC.size)
    if zlib.crc32(data[: expected - _CRC.size]) != crc:
        raise CorruptionError("crc", "CRC32 mismatch", path)
    values = np.frombuffer(data, dtype="<f8", count=h * w, offset=_QNV_HEADER.size)
    return CacheEntry(values.reshape(h, w).astype(np.float64), label, depth_q)


def atomic_write(path, data):
    """Write bytes via a temporary file in the same directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_cache(path, values, label, depth_q=1):
    atomic_write(path, encode_cache(values, label, depth_q))


def read_cache(path):
    return decode_cache(Path(path).read_bytes(), path)


def cache_filename(record_id):
    safe = "".join(c if c.isalnum() or c in "-_." else "_" for c in str(record_id))
    return f"{safe}.qnv"


def load_cache_dir(path):
    """Read every ``*.qnv`` file in ``path`` in sorted order.

    Returns ``(entries, errors)`` where entries are ``(id, CacheEntry)``.
    """
    entries, errors = [], []
    for p in sorted(Path(path).glob("*.qnv")):
        try:
            entries.append((p.stem, read_cache(p)))
        except CorruptionError as exc:
            errors.append((p.name, str(exc)))
    return entries, errors
