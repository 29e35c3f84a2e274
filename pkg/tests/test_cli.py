import json
import math

import numpy as np
import pytest

from quanvnet.cli import UsageError, main, parse_angle, read_config_file


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def small_run(tmp_path, monkeypatch, capsys):
    """A tiny synth -> preprocess -> train run in ``tmp_path``."""
    monkeypatch.chdir(tmp_path)
    assert run(capsys, "synth", "--out", "ds", "--per-class", "12", "--side", "20", "--seed", "3")[0] == 0
    assert run(capsys, "preprocess", "--data", "ds", "--cache", "cache", "--side", "20")[0] == 0
    code, out, _ = run(capsys, "train", "--cache", "cache", "--out", "run", "--epochs", "3", "--seed", "1")
    assert code == 0
    return tmp_path


def test_parse_angle():
    assert parse_angle("PI_OVER_2") == math.pi / 2
    assert parse_angle("pi/2") == math.pi / 2
    assert parse_angle("pi") == math.pi
    assert parse_angle("0.5*pi") == 0.5 * math.pi
    assert parse_angle("1.25") == 1.25
    with pytest.raises(UsageError):
        parse_angle("tau")


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# comment\nepochs = 3\nlearning-rate=0.01  # inline\n\n")
    assert read_config_file(cfg) == {"epochs": "3", "learning_rate": "0.01"}
    cfg.write_text("bogus=1\n")
    with pytest.raises(UsageError):
        read_config_file(cfg)


def test_synth(tmp_path, capsys):
    code, out, _ = run(capsys, "synth", "--out", str(tmp_path / "a"), "--per-class", "5", "--seed", "2")
    assert code == 0 and "15 records" in out
    assert len(list((tmp_path / "a").glob("*.pgm"))) == 15
    run(capsys, "synth", "--out", str(tmp_path / "b"), "--per-class", "5", "--seed", "2")
    for f in sorted((tmp_path / "a").iterdir()):
        assert f.read_bytes() == (tmp_path / "b" / f.name).read_bytes()


def test_synth_errors(tmp_path, capsys):
    assert run(capsys, "synth", "--out", str(tmp_path / "x"), "--side", "4")[0] == 2
    (tmp_path / "file").write_text("")
    code, _, err = run(capsys, "synth", "--out", str(tmp_path / "file" / "sub"), "--per-class", "1")
    assert code == 2 and "cannot write" in err
    with pytest.raises(SystemExit) as info:
        main(["synth", "--classes", "5"])
    assert info.value.code == 2


def test_preprocess_counts_and_idempotence(small_run, capsys):
    code, out, _ = run(capsys, "preprocess", "--data", "ds", "--cache", "cache", "--side", "20")
    assert code == 0 and out.strip() == "computed=0 skipped=36 errored=0"


def test_preprocess_partial_failure(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    run(capsys, "synth", "--out", "ds", "--per-class", "2", "--side", "8")
    with open("ds/labels.csv", "a") as fh:
        fh.write("nothere.pgm,1,ghost\nmeningioma_0000.pgm,7,badlabel\n")
    code, out, err = run(capsys, "preprocess", "--data", "ds", "--cache", "c", "--side", "8")
    assert code == 1
    assert out.strip() == "computed=6 skipped=0 errored=2"
    assert "ghost" in err and "badlabel" in err


def test_preprocess_missing_dataset(tmp_path, capsys):
    assert run(capsys, "preprocess", "--data", str(tmp_path), "--cache", str(tmp_path / "c"))[0] == 2


def test_train_outputs(small_run):
    run_dir = small_run / "run"
    metrics = json.loads((run_dir / "metrics.json").read_text())
    assert metrics["epochs"] == 3 and metrics["config"]["epochs"] == 3
    assert metrics["config"]["seed"] == 1
    curves = (run_dir / "curves.csv").read_text().splitlines()
    assert curves[0] == "epoch,train_loss,val_loss,train_acc,val_acc" and len(curves) == 4
    cm = np.loadtxt(run_dir / "confusion.csv", delimiter=",", dtype=int)
    assert cm.shape == (3, 3) and cm.sum() == metrics["n_val"]
    assert metrics["val_accuracy"] == np.trace(cm) / cm.sum()
    assert "timestamp" not in (run_dir / "metrics.json").read_text()


def test_train_empty_cache(tmp_path, capsys):
    (tmp_path / "empty").mkdir()
    code, _, err = run(capsys, "train", "--cache", str(tmp_path / "empty"), "--out", str(tmp_path / "o"))
    assert code == 2 and "no readable cache" in err


def test_config_file_with_flag_override(small_run, capsys):
    (small_run / "cfg").write_text("epochs=1\nseed=1\n")
    run(capsys, "train", "--config", "cfg", "--cache", "cache", "--out", "r2", "--epochs", "2")
    metrics = json.loads((small_run / "r2" / "metrics.json").read_text())
    assert metrics["epochs"] == 2 and metrics["config"]["seed"] == 1


def test_eval_and_predict(small_run, capsys):
    code, out, _ = run(capsys, "eval", "--model", "run/model.qnnw", "--cache", "cache")
    assert code == 0 and out.startswith("accuracy=")
    rows = [list(map(int, line.split())) for line in out.splitlines()[1:]]
    assert np.array(rows).sum() == 36
    code, out, _ = run(capsys, "predict", "--model", "run/model.qnnw", "--image", "ds/pituitary_0003.pgm",
                       "--side", "20")
    assert code == 0
    lines = out.splitlines()
    probs = [float(line.split("\t")[1]) for line in lines[:3]]
    assert abs(sum(probs) - 1) < 1e-9
    assert lines[-1].startswith("predicted=")


@pytest.mark.parametrize("mutate, field", [
    (lambda d: b"JUNK" + d[4:], "magic"),
    (lambda d: d[:-3] + b"\x00\x00\x00", "crc"),
    (lambda d: d[:50], "truncated"),
])
def test_corrupt_checkpoint(small_run, capsys, mutate, field):
    model = small_run / "run" / "model.qnnw"
    model.write_bytes(mutate(model.read_bytes()))
    code, _, err = run(capsys, "eval", "--model", str(model), "--cache", "cache")
    assert code == 2 and field in err
    code, _, err = run(capsys, "predict", "--model", str(model), "--image", "ds/glioma_0000.pgm")
    assert code == 2 and field in err


def test_circuit_commands(capsys):
    code, out, _ = run(capsys, "circuit", "run", "--pixels", "0,0,0,0")
    assert code == 0 and float(out) == 1.0
    code, out, _ = run(capsys, "circuit", "dump")
    assert code == 0 and len(out.splitlines()) == 16
    code, out, _ = run(capsys, "circuit", "dump", "--no-cr-ring")
    assert len(out.splitlines()) == 14
    code, out, _ = run(capsys, "circuit", "unitary", "--pixels", "0.1,0.5,0.9,1")
    lines = out.splitlines()
    assert code == 0 and len(lines) == 17
    assert len(lines[0].split()) == 16
    assert lines[-1].endswith("(ok)")
    err = float(lines[-1].split("=")[1].split()[0])
    assert err < 1e-10
    code, out, _ = run(capsys, "circuit", "run", "--pixels", "0.5,0.5,0.5,0.5", "--theta", "pi")
    from quanvnet.circuit import QuanvCircuitConfig, run_quanv_circuit
    assert float(out) == run_quanv_circuit([0.5] * 4, QuanvCircuitConfig(theta=math.pi))


@pytest.mark.parametrize("pixels", ["0,0,0", "0,0,0,2", "a,b,c,d"])
def test_circuit_bad_pixels(capsys, pixels):
    assert run(capsys, "circuit", "run", "--pixels", pixels)[0] == 2
