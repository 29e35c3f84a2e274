"""Command-line front end: ``quanvnet synth|preprocess|train|eval|predict|circuit``.

Exit codes: 0 success, 1 partial data failure, 2 usage/config/corruption.
Every command accepts ``--config FILE`` with ``key=value`` lines (``#``
starts a comment); explicit flags win over the file.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import re
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import QuanvCircuitConfig, build_quanv_circuit, dump_circuit, run_quanv_circuit
from .data import (
    class_index,
    generate_synthetic,
    label_map_for,
    load_cache_dir,
    load_dataset_dir,
    preprocess_image,
    read_pgm,
    save_dataset_dir,
)
from .errors import CorruptionError, QuanvError
from .nn import TrainConfig, evaluate, load_params, predict_proba, save_params, train
from .quanv import QuanvConfig, quanvolve_dataset, quanvolve_image, summarize
from .statevector import circuit_unitary

log = logging.getLogger("quanvnet")

DEFAULTS = {
    "data": None,
    "cache": None,
    "out": None,
    "model": None,
    "image": None,
    "seed": 0,
    "per_class": 200,
    "classes": 3,
    "side": 28,
    "noise": 0.08,
    "max_raw": 255.0,
    "step": 2,
    "theta": "PI_OVER_2",
    "q": 1,
    "cr_ring": True,
    "readout_qubit": 0,
    "shots": None,
    "workers": 1,
    "epochs": 20,
    "batch_size": 32,
    "learning_rate": 1e-3,
    "optimizer": "adam",
    "dropout_rate": 0.5,
    "val_fraction": 0.2,
    "n_classes": None,
}


class UsageError(Exception):
    """Bad configuration; reported with exit code 2."""


# -- config resolution -----------------------------------------------------

_ANGLE = re.compile(r"^(?:(?P<k>[-+]?\d*\.?\d+)\s*\*?\s*)?pi(?:\s*/\s*(?P<d>\d*\.?\d+))?$")


def parse_angle(text):
    """Parse ``1.57``, ``pi``, ``pi/2``, ``0.5*pi`` or ``PI_OVER_2``."""
    if isinstance(text, (int, float)):
        return float(text)
    s = str(text).strip().lower().replace("pi_over_", "pi/")
    try:
        return float(s)
    except ValueError:
        pass
    m = _ANGLE.match(s)
    if not m:
        raise UsageError(f"cannot parse angle {text!r}")
    k = float(m.group("k")) if m.group("k") else 1.0
    d = float(m.group("d")) if m.group("d") else 1.0
    return k * math.pi / d


def _coerce(key, value):
    if value is None or isinstance(value, bool):
        return value
    default = DEFAULTS.get(key)
    text = str(value).strip()
    if key in ("shots", "n_classes"):
        return None if text.lower() in ("", "none") else int(text)
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise UsageError(f"{key}: expected a boolean, got {value!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def read_config_file(path):
    values = {}
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in DEFAULTS:
            raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
        values[key] = value
    return values


def resolve(args):
    """Defaults, then the config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(read_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = value
    try:
        return {key: _coerce(key, value) for key, value in cfg.items()}
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def quanv_config(cfg):
    try:
        circuit = QuanvCircuitConfig(
            theta=parse_angle(cfg["theta"]),
            cr_ring_closure=cfg["cr_ring"],
            readout_qubit=cfg["readout_qubit"],
            shots=cfg["shots"],
            seed=cfg["seed"],
        )
        return QuanvConfig(step=cfg["step"], depth_q=cfg["q"], circuit=circuit)
    except QuanvError as exc:
        raise UsageError(str(exc)) from exc


def _require(cfg, *keys):
    for key in keys:
        if not cfg[key]:
            raise UsageError(f"--{key.replace('_', '-')} is required")


def _label_names(n_classes):
    names = list(label_map_for(4).values())
    return names[:n_classes] if n_classes <= 4 else names + [f"class_{i}" for i in range(4, n_classes)]


# -- commands --------------------------------------------------------------

def cmd_synth(cfg):
    _require(cfg, "out")
    records = generate_synthetic(cfg["per_class"], cfg["side"], cfg["classes"],
                                 cfg["seed"], cfg["noise"])
    try:
        save_dataset_dir(cfg["out"], records)
    except OSError as exc:
        raise UsageError(f"cannot write to {cfg['out']}: {exc}") from exc
    print(f"wrote {len(records)} records to {cfg['out']}")
    return 0


def cmd_preprocess(cfg):
    _require(cfg, "data", "cache")
    config = quanv_config(cfg)
    try:
        report = load_dataset_dir(cfg["data"], label_map_for(cfg["classes"]))
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from exc
    manifest = quanvolve_dataset(report.records, config, cfg["cache"], side=cfg["side"],
                                 max_raw=cfg["max_raw"], workers=cfg["workers"])
    counts = summarize(manifest)
    errors = list(report.errors) + [(e.id, e.error) for e in manifest if e.status == "error"]
    for rid, message in errors:
        print(f"error: {rid}: {message}", file=sys.stderr)
    print(f"computed={counts['computed']} skipped={counts['skipped']} errored={len(errors)}")
    return 1 if errors else 0


def _load_cache(path, cfg):
    entries, errors = load_cache_dir(path)
    for name, message in errors:
        print(f"error: {message}", file=sys.stderr)
    if not entries:
        raise UsageError(f"no readable cache files in {path}")
    codes = sorted({e.label for _, e in entries})
    classes = 4 if codes[-1] == 4 else cfg["classes"]
    label_map = label_map_for(classes)
    unknown = [c for c in codes if c not in label_map]
    if unknown:
        raise UsageError(f"cache holds label codes {unknown} outside the label map")
    maps = [e.values for _, e in entries]
    labels = [class_index(label_map, e.label) for _, e in entries]
    return maps, labels, errors


def _csv_text(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def cmd_train(cfg):
    _require(cfg, "cache", "out")
    maps, labels, errors = _load_cache(cfg["cache"], cfg)
    try:
        config = TrainConfig(
            epochs=cfg["epochs"], batch_size=cfg["batch_size"],
            learning_rate=cfg["learning_rate"], optimizer=cfg["optimizer"],
            dropout_rate=cfg["dropout_rate"], seed=cfg["seed"],
            val_fraction=cfg["val_fraction"], n_classes=cfg["n_classes"],
        )
        started = time.perf_counter()
        params, metrics = train(list(zip(maps, labels)), config)
    except QuanvError as exc:
        raise UsageError(str(exc)) from exc
    print(f"training took {time.perf_counter() - started:.1f}s", file=sys.stderr)

    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    save_params(out / "model.qnnw", params)
    names = _label_names(params.n_classes)
    cm = metrics.confusion
    doc = {
        "config": cfg,
        "epochs": metrics.epochs,
        "n_train": metrics.n_train,
        "n_val": metrics.n_val,
        "class_names": names,
        "train_loss": metrics.train_loss,
        "val_loss": metrics.val_loss,
        "train_acc": metrics.train_acc,
        "val_acc": metrics.val_acc,
        "val_accuracy": metrics.val_accuracy,
        "confusion": cm.tolist(),
    }
    (out / "metrics.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    curves = [["epoch", "train_loss", "val_loss", "train_acc", "val_acc"]]
    for e in range(metrics.epochs):
        curves.append([e + 1, repr(metrics.train_loss[e]), repr(metrics.val_loss[e]),
                       repr(metrics.train_acc[e]), repr(metrics.val_acc[e])])
    (out / "curves.csv").write_text(_csv_text(curves))
    (out / "confusion.csv").write_text(_csv_text(cm.tolist()))
    print(f"epochs={metrics.epochs} val_accuracy={metrics.val_accuracy:.4f}")
    return 1 if errors else 0


def _load_model(path):
    try:
        return load_params(path)
    except CorruptionError as exc:
        raise UsageError(f"corrupt checkpoint ({exc.field}): {exc}") from exc
    except OSError as exc:
        raise UsageError(f"cannot read checkpoint {path}: {exc}") from exc


def cmd_eval(cfg):
    _require(cfg, "model", "cache")
    params = _load_model(cfg["model"])
    maps, labels, errors = _load_cache(cfg["cache"], cfg)
    try:
        accuracy, cm, loss = evaluate(params, np.stack(maps), labels)
    except QuanvError as exc:
        raise UsageError(str(exc)) from exc
    print(f"accuracy={accuracy:.6f} loss={loss:.6f} n={int(cm.sum())}")
    for row in cm:
        print(" ".join(str(v) for v in row))
    return 1 if errors else 0


def cmd_predict(cfg):
    _require(cfg, "model", "image")
    params = _load_model(cfg["model"])
    try:
        raw = read_pgm(cfg["image"])
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read image {cfg['image']}: {exc}") from exc
    try:
        fmap = quanvolve_image(preprocess_image(raw, cfg["side"], cfg["max_raw"]), quanv_config(cfg))
        probs = predict_proba(params, fmap[None])[0]
    except QuanvError as exc:
        raise UsageError(str(exc)) from exc
    names = _label_names(params.n_classes)
    for name, p in zip(names, probs):
        print(f"{name}\t{p:.12f}")
    best = int(np.argmax(probs))
    print(f"predicted={names[best]} probability={probs[best]:.6f}")
    return 0


def cmd_circuit(cfg, action, pixels):
    try:
        values = [float(v) for v in pixels.split(",")]
        circuit = quanv_config(cfg).circuit
        if action == "run":
            print(repr(run_quanv_circuit(values, circuit)))
            return 0
        ops = build_quanv_circuit(values, circuit)
    except (QuanvError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    if action == "dump":
        sys.stdout.write(dump_circuit(ops))
        return 0
    u = circuit_unitary(ops, circuit.n_qubits)
    for row in u:
        print(" ".join(f"{z.real:+.12f}{z.imag:+.12f}j" for z in row))
    err = float(np.max(np.abs(u.conj().T @ u - np.eye(len(u)))))
    print(f"# unitarity max|U^dag U - I| = {err:.3e} ({'ok' if err < 1e-10 else 'FAILED'})")
    return 0


# -- parser ----------------------------------------------------------------

def _add(parser, *names, **kw):
    kw.setdefault("default", None)
    parser.add_argument(*names, **kw)


def _quanv_flags(p):
    _add(p, "--step", type=int, help="patch stride (default 2)")
    _add(p, "--theta", help="CRZ/CRX angle, e.g. pi/2 or PI_OVER_2 (default)")
    _add(p, "--q", type=int, help="stacked quanvolution depth (default 1)")
    p.add_argument("--no-cr-ring", dest="cr_ring", action="store_false", default=None,
                   help="omit the CR gates on the (3, 0) pair")
    _add(p, "--readout-qubit", type=int)
    _add(p, "--shots", type=int, help="sample the readout instead of exact <Z>")
    _add(p, "--side", type=int, help="resize images to SIDE x SIDE (default 28)")
    _add(p, "--max-raw", type=float, help="raw intensity divisor (default 255)")
    _add(p, "--seed", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="quanvnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic labelled PGM corpus")
    _add(p, "--out")
    _add(p, "--per-class", type=int)
    _add(p, "--classes", type=int, choices=(3, 4))
    _add(p, "--side", type=int)
    _add(p, "--noise", type=float)
    _add(p, "--seed", type=int)

    p = sub.add_parser("preprocess", help="quanvolve a dataset into the QNV1 cache")
    _add(p, "--data")
    _add(p, "--cache")
    _add(p, "--classes", type=int, choices=(3, 4))
    _add(p, "--workers", type=int)
    _quanv_flags(p)

    p = sub.add_parser("train", help="train the CNN on a cache directory")
    _add(p, "--cache")
    _add(p, "--out")
    _add(p, "--epochs", type=int)
    _add(p, "--batch-size", type=int)
    _add(p, "--learning-rate", type=float)
    _add(p, "--optimizer", choices=("adam", "sgd"))
    _add(p, "--dropout-rate", type=float)
    _add(p, "--val-fraction", type=float)
    _add(p, "--n-classes", type=int, help="output units (default: classes present)")
    _add(p, "--classes", type=int, choices=(3, 4))
    _add(p, "--seed", type=int)

    p = sub.add_parser("eval", help="accuracy and confusion matrix on a cache")
    _add(p, "--model")
    _add(p, "--cache")
    _add(p, "--classes", type=int, choices=(3, 4))

    p = sub.add_parser("predict", help="class probabilities for one PGM image")
    _add(p, "--model")
    _add(p, "--image")
    _quanv_flags(p)

    p = sub.add_parser("circuit", help="inspect the quanvolution circuit")
    p.add_argument("action", choices=("dump", "unitary", "run"))
    p.add_argument("--pixels", default="0,0,0,0", help="four values in [0, 1]")
    _add(p, "--theta")
    p.add_argument("--no-cr-ring", dest="cr_ring", action="store_false", default=None)
    _add(p, "--readout-qubit", type=int)
    _add(p, "--shots", type=int)
    _add(p, "--seed", type=int)

    for action in sub.choices.values():
        action.add_argument("--config", help="key=value file; flags override it")
    return parser


COMMANDS = {
    "synth": cmd_synth,
    "preprocess": cmd_preprocess,
    "train": cmd_train,
    "eval": cmd_eval,
    "predict": cmd_predict,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = resolve(args)
        if args.command == "circuit":
            return cmd_circuit(cfg, args.action, args.pixels)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"quanvnet {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except QuanvError as exc:
        print(f"quanvnet {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
