"""Binary container round trips, corruption handling, and atomicity."""
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfore.errors import DataError
from selfore.tensorio import (MAGIC_AUTOENCODER, MAGIC_CLASSIFIER,
                              MAGIC_FEATURES, MAGIC_PIPELINE, load_features,
                              load_tensors, save_features, save_tensors)


def test_tensor_round_trip_bit_exact(tmp_path, rng):
    path = str(tmp_path / "state.bin")
    tensors = {
        "weights": rng.normal(size=(7, 3)),
        "labels": rng.integers(0, 5, size=11),
        "single": np.array([3.25], dtype=np.float32),
    }
    meta = {"iteration": 4, "note": "unit test", "nested": {"k": 10}}
    save_tensors(path, MAGIC_PIPELINE, tensors, meta)
    loaded, loaded_meta = load_tensors(path, MAGIC_PIPELINE)
    assert set(loaded) == set(tensors)
    for name, arr in tensors.items():
        assert loaded[name].dtype == arr.dtype
        np.testing.assert_array_equal(loaded[name], arr)
    assert loaded_meta == meta


def test_feature_round_trip_bit_exact(tmp_path, rng):
    path = str(tmp_path / "feats.bin")
    mat = rng.normal(size=(9, 4)).astype(np.float32)
    ids = ["id-%d" % i for i in range(9)]
    save_features(path, mat, ids)
    got_mat, got_ids = load_features(path)
    np.testing.assert_array_equal(got_mat, mat)
    assert got_ids == ids


def test_feature_header_counts_match_payload(tmp_path, rng):
    path = str(tmp_path / "feats.bin")
    save_features(path, rng.normal(size=(3, 5)).astype(np.float32), ["a", "b", "c"])
    with open(path, "rb") as fh:
        blob = fh.read()
    assert blob[:4] == MAGIC_FEATURES
    n = int.from_bytes(blob[8:16], "little")
    d = int.from_bytes(blob[16:24], "little")
    assert (n, d) == (3, 5)


def test_wrong_magic_rejected(tmp_path, rng):
    path = str(tmp_path / "ae.bin")
    save_tensors(path, MAGIC_AUTOENCODER, {"w": rng.normal(size=(2, 2))}, {})
    with pytest.raises(DataError):
        load_tensors(path, MAGIC_CLASSIFIER)


def test_corrupt_magic_bytes_rejected(tmp_path, rng):
    path = str(tmp_path / "state.bin")
    save_tensors(path, MAGIC_PIPELINE, {"w": rng.normal(size=(2, 2))}, {})
    with open(path, "r+b") as fh:
        fh.write(b"XXXX")
    with pytest.raises(DataError):
        load_tensors(path, MAGIC_PIPELINE)


def test_truncated_file_rejected(tmp_path, rng):
    path = str(tmp_path / "state.bin")
    save_tensors(path, MAGIC_PIPELINE, {"w": rng.normal(size=(8, 8))}, {})
    size = os.path.getsize(path)
    with open(path, "r+b") as fh:
        fh.truncate(size - 16)
    with pytest.raises(DataError):
        load_tensors(path, MAGIC_PIPELINE)


def test_trailing_garbage_rejected(tmp_path, rng):
    path = str(tmp_path / "state.bin")
    save_tensors(path, MAGIC_PIPELINE, {"w": rng.normal(size=(2, 2))}, {})
    with open(path, "ab") as fh:
        fh.write(b"\x00\x01\x02")
    with pytest.raises(DataError):
        load_tensors(path, MAGIC_PIPELINE)


def test_failed_write_leaves_no_partial_file(tmp_path):
    path = str(tmp_path / "bad.bin")
    with pytest.raises(DataError):
        save_tensors(path, MAGIC_PIPELINE,
                     {"w": np.array(["not", "numeric"], dtype=object)}, {})
    assert not os.path.exists(path)


def test_non_finite_features_rejected(tmp_path):
    path = str(tmp_path / "feats.bin")
    mat = np.array([[1.0, np.nan]], dtype=np.float32)
    with pytest.raises(DataError):
        save_features(path, mat, ["a"])


def test_duplicate_feature_ids_rejected(tmp_path, rng):
    path = str(tmp_path / "feats.bin")
    with pytest.raises(DataError):
        save_features(path, rng.normal(size=(2, 2)).astype(np.float32), ["a", "a"])


def test_unicode_ids_round_trip(tmp_path, rng):
    path = str(tmp_path / "feats.bin")
    ids = ["héllo-1", "ßeta-2", "日本-3"]
    save_features(path, rng.normal(size=(3, 2)).astype(np.float32), ids)
    _, got_ids = load_features(path)
    assert got_ids == ids


@given(st.integers(0, 2**31 - 1), st.integers(1, 6), st.integers(1, 5))
@settings(max_examples=20, deadline=None)
def test_random_tensor_payloads_round_trip(tmp_path_factory, seed, n_rows, n_cols):
    gen = np.random.default_rng(seed)
    path = str(tmp_path_factory.mktemp("tio") / "t.bin")
    tensors = {
        "f64": gen.normal(size=(n_rows, n_cols)),
        "i64": gen.integers(-100, 100, size=n_rows),
        "f32": gen.normal(size=(n_cols,)).astype(np.float32),
    }
    save_tensors(path, MAGIC_AUTOENCODER, tensors, {"seed": seed})
    loaded, meta = load_tensors(path, MAGIC_AUTOENCODER)
    for name, arr in tensors.items():
        np.testing.assert_array_equal(loaded[name], arr)
        assert loaded[name].dtype == arr.dtype
    assert meta["seed"] == seed
