import math

import numpy as np
import pytest

from quanvnet.circuit import QuanvCircuitConfig, build_quanv_circuit
from quanvnet.data import DatasetRecord, generate_synthetic, read_cache
from quanvnet.errors import ArgumentError, RangeError, SizeError
from quanvnet.quanv import (
    QuanvConfig,
    extract_patch,
    output_shape,
    quanvolve_dataset,
    quanvolve_image,
    summarize,
)
from quanvnet.statevector import circuit_unitary, expectation_z, zero_state


def oracle_patch(pixels, cfg=QuanvCircuitConfig()):
    ops = build_quanv_circuit(pixels, cfg)
    return expectation_z(circuit_unitary(ops, 4) @ zero_state(4), cfg.readout_qubit)


def test_extract_patch():
    assert extract_patch([[1, 2], [3, 4]], 0, 0, 2) == [1, 2, 3, 4]
    assert extract_patch(np.full((5, 5), 0.3), 2, 1, 2) == [0.3] * 4
    iota = np.arange(1, 10).reshape(3, 3)
    assert extract_patch(iota, 1, 1, 2) == [5, 6, 8, 9]
    with pytest.raises(SizeError):
        extract_patch(iota, 2, 0, 2)


def test_config_validation():
    with pytest.raises(ArgumentError):
        QuanvConfig(patch_side=3)
    with pytest.raises(ArgumentError):
        QuanvConfig(depth_q=0)


def test_shapes():
    assert quanvolve_image(np.zeros((28, 28))).shape == (14, 14)
    assert quanvolve_image(np.zeros((7, 9))).shape == (3, 4)
    assert output_shape((28, 28), 2, 2) == (7, 7)
    assert quanvolve_image(np.zeros((28, 28)), QuanvConfig(depth_q=2)).shape == (7, 7)
    assert quanvolve_image(np.zeros((29, 30)), QuanvConfig(depth_q=3)).shape == output_shape((29, 30), 2, 3)


def test_zero_image_gives_ones():
    assert np.array_equal(quanvolve_image(np.zeros((4, 4))), np.ones((2, 2)))


def test_entries_match_single_patch_oracle(rng):
    img = rng.random((8, 8))
    out = quanvolve_image(img)
    for i in range(4):
        for j in range(4):
            expected = oracle_patch(extract_patch(img, 2 * i, 2 * j, 2))
            assert abs(out[i, j] - expected) < 1e-10


def test_open_ring_and_other_readout(rng):
    cfg = QuanvCircuitConfig(cr_ring_closure=False, readout_qubit=2, theta=0.9)
    img = rng.random((4, 6))
    out = quanvolve_image(img, QuanvConfig(circuit=cfg))
    assert abs(out[1, 2] - oracle_patch(extract_patch(img, 2, 4, 2), cfg)) < 1e-10


def test_depth_two_feeds_rescaled_map(rng):
    img = rng.random((8, 8))
    first = quanvolve_image(img)
    second = quanvolve_image(img, QuanvConfig(depth_q=2))
    expected = quanvolve_image((first + 1) / 2)
    assert np.array_equal(second, expected)


def test_range_and_determinism(rng):
    img = rng.random((12, 10))
    out = quanvolve_image(img)
    assert out.min() >= -1 and out.max() <= 1
    assert quanvolve_image(img).tobytes() == out.tobytes()


def test_patch_order_independence(rng):
    """Evaluating patches in a shuffled order lands identical bytes."""
    img = rng.random((10, 10))
    out = quanvolve_image(img)
    from quanvnet.circuit import run_quanv_batch
    coords = [(i, j) for i in range(5) for j in range(5)]
    order = rng.permutation(len(coords))
    patches = np.array([extract_patch(img, 2 * coords[k][0], 2 * coords[k][1]) for k in order])
    values = run_quanv_batch(patches)
    rebuilt = np.empty((5, 5))
    for v, k in zip(values, order):
        rebuilt[coords[k]] = v
    assert rebuilt.tobytes() == out.tobytes()


def test_input_validation():
    with pytest.raises(SizeError):
        quanvolve_image(np.zeros((1, 5)))
    with pytest.raises(RangeError):
        quanvolve_image(np.full((4, 4), 1.5))


def test_sampled_mode_close_to_exact(rng):
    img = rng.random((6, 6))
    exact = quanvolve_image(img)
    sampled = quanvolve_image(img, QuanvConfig(circuit=QuanvCircuitConfig(shots=20000, seed=3)))
    assert np.max(np.abs(sampled - exact)) < 5 * 2 / math.sqrt(20000)


# -- dataset / cache -------------------------------------------------------

def test_empty_dataset(tmp_path):
    assert quanvolve_dataset([], QuanvConfig(), tmp_path) == []


def test_cache_idempotence(tmp_path):
    recs = generate_synthetic(4, 16, 3, seed=0)[:10]
    first = quanvolve_dataset(recs, QuanvConfig(), tmp_path, side=16)
    assert summarize(first) == {"computed": 10, "skipped": 0, "error": 0}
    second = quanvolve_dataset(recs, QuanvConfig(), tmp_path, side=16)
    assert summarize(second) == {"computed": 0, "skipped": 10, "error": 0}
    assert [e.id for e in second] == [r.id for r in recs]


def test_cached_maps_shape_and_content(tmp_path):
    recs = generate_synthetic(34, 28, 3, seed=2)[:100]
    manifest = quanvolve_dataset(recs, QuanvConfig(), tmp_path)
    files = sorted(tmp_path.glob("*.qnv"))
    assert len(files) == 100
    for f in files:
        assert read_cache(f).values.shape == (14, 14)
    from quanvnet.data import preprocess_image
    entry = read_cache(manifest[7].path)
    assert entry.label == recs[7].label
    assert entry.values.tobytes() == quanvolve_image(preprocess_image(recs[7].image)).tobytes()


def test_corrupt_cache_recomputed(tmp_path, caplog):
    recs = generate_synthetic(1, 8, 3, seed=0)
    manifest = quanvolve_dataset(recs, QuanvConfig(), tmp_path, side=8)
    good = manifest[0].path.read_bytes()
    manifest[0].path.write_bytes(good[:-1] + bytes([good[-1] ^ 0xFF]))
    again = quanvolve_dataset(recs, QuanvConfig(), tmp_path, side=8)
    assert [e.status for e in again] == ["computed", "skipped", "skipped"]
    assert manifest[0].path.read_bytes() == good
    assert "corrupt" in caplog.text


def test_changed_depth_invalidates_cache(tmp_path):
    recs = generate_synthetic(1, 8, 3, seed=0)
    quanvolve_dataset(recs, QuanvConfig(), tmp_path, side=8)
    again = quanvolve_dataset(recs, QuanvConfig(depth_q=2), tmp_path, side=8)
    assert summarize(again)["computed"] == 3


def test_bad_record_is_reported_not_raised(tmp_path):
    recs = generate_synthetic(1, 8, 3, seed=0)
    bad = DatasetRecord("bad", np.full((8, 8), 300.0), 1)
    manifest = quanvolve_dataset(recs + [bad], QuanvConfig(), tmp_path, side=8)
    counts = summarize(manifest)
    assert counts == {"computed": 3, "skipped": 0, "error": 1}
    assert manifest[-1].status == "error" and "255" in manifest[-1].error
    # loaded = cached + errored
    assert len(manifest) == counts["computed"] + counts["skipped"] + counts["error"]


def test_worker_pool_matches_serial(tmp_path):
    recs = generate_synthetic(3, 12, 3, seed=4)
    serial = quanvolve_dataset(recs, QuanvConfig(), tmp_path / "a", side=12)
    pooled = quanvolve_dataset(recs, QuanvConfig(), tmp_path / "b", side=12, workers=2)
    assert [e.id for e in pooled] == [e.id for e in serial]
    for a, b in zip(serial, pooled):
        assert a.path.read_bytes() == b.path.read_bytes()
