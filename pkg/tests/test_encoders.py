"""Tests for the built-in relation encoder and the precomputed-feature loader."""
import os

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from selfore.corpus import (E1_END, E1_START, E2_END, E2_START, MARKERS,
                            MarkedSentence)
from selfore.encoders import (BuiltinEncoder, EncoderConfig, FeatureStore,
                              encode_batch, encode_batch_cached, encode_corpus,
                              encoder_backward, fnv1a, load_features)
from selfore.errors import ConfigError, DataError
from selfore.numerics import grad_check, rng_for
from selfore.tensorio import save_features

from conftest import make_corpus


def marked(tokens, sid="m0", relation=None):
    return MarkedSentence(tokens=tuple(tokens),
                          e1_start_pos=tokens.index(E1_START),
                          e2_start_pos=tokens.index(E2_START),
                          origin_id=sid, gold_relation=relation)


BORN = [E1_START, "derek", E1_END, "was", "born", "in",
        E2_START, "leeds", E2_END]
STARS = ["the", E2_START, "film", E2_END, "stars", E1_START, "jane", E1_END]


class TestFnv1a:
    def test_published_reference_vectors(self):
        # 32-bit FNV-1a values from the function's public specification.
        assert fnv1a("") == 0x811C9DC5
        assert fnv1a("a") == 0xE40C292C
        assert fnv1a("foobar") == 0xBF9CF968

    @given(st.text(max_size=30))
    def test_stable_and_in_range(self, token):
        h = fnv1a(token)
        assert 0 <= h < 2**32
        assert fnv1a(token) == h


class TestTokenRow:
    def test_markers_own_reserved_rows(self):
        enc = BuiltinEncoder.create(EncoderConfig(hidden=4, buckets=7, seed=0))
        for i, marker in enumerate(MARKERS):
            assert enc.token_row(marker) == i

    @given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz", min_size=1,
                   max_size=12))
    def test_plain_tokens_hash_past_reserved_rows(self, token):
        enc = BuiltinEncoder.create(EncoderConfig(hidden=4, buckets=7, seed=0))
        row = enc.token_row(token)
        assert row == len(MARKERS) + fnv1a(token) % 7
        assert len(MARKERS) <= row < len(MARKERS) + 7


class TestEncoderConfig:
    def test_rejects_nonpositive_sizes(self):
        with pytest.raises(ConfigError):
            EncoderConfig(hidden=0)
        with pytest.raises(ConfigError):
            EncoderConfig(buckets=0)

    def test_rejects_nonpositive_stds(self):
        with pytest.raises(ConfigError):
            EncoderConfig(embed_std=0.0)
        with pytest.raises(ConfigError):
            EncoderConfig(weight_std=-0.1)


class TestEncodeBatch:
    def test_feature_shape_is_twice_hidden(self):
        enc = BuiltinEncoder.create(EncoderConfig(hidden=6, buckets=13, seed=0))
        feats = encode_batch(enc, [marked(BORN), marked(STARS, "m1")])
        assert feats.shape == (2, 12)
        assert enc.feature_dim == 12

    def test_deterministic_across_calls_and_creations(self):
        cfg = EncoderConfig(hidden=6, buckets=13, seed=4)
        a = encode_batch(BuiltinEncoder.create(cfg), [marked(BORN)])
        b = encode_batch(BuiltinEncoder.create(cfg), [marked(BORN)])
        np.testing.assert_array_equal(a, b)

    def test_gold_label_never_reaches_features(self):
        enc = BuiltinEncoder.create(EncoderConfig(hidden=6, buckets=13, seed=0))
        with_label = encode_batch(enc, [marked(BORN, relation="birthplace")])
        without = encode_batch(enc, [marked(BORN, relation=None)])
        np.testing.assert_array_equal(with_label, without)

    def test_context_order_does_not_matter(self):
        # The architecture has no positional signal, so shuffling tokens
        # (tracking where the start markers land) reads out the same rows.
        enc = BuiltinEncoder.create(EncoderConfig(hidden=6, buckets=13, seed=1))
        base = encode_batch(enc, [marked(BORN)])
        perm = np.random.default_rng(0).permutation(len(BORN))
        shuffled = [BORN[i] for i in perm]
        s = MarkedSentence(tokens=tuple(shuffled),
                           e1_start_pos=shuffled.index(E1_START),
                           e2_start_pos=shuffled.index(E2_START),
                           origin_id="m0", gold_relation=None)
        moved = encode_batch(enc, [s])
        np.testing.assert_allclose(moved, base, atol=1e-12)

    def test_wrong_token_at_marker_position_rejected(self):
        enc = BuiltinEncoder.create(EncoderConfig(hidden=4, buckets=7, seed=0))
        bad = MarkedSentence(tokens=tuple(BORN), e1_start_pos=1,
                             e2_start_pos=6, origin_id="bad0")
        with pytest.raises(DataError):
            encode_batch(enc, [bad])

    def test_marker_position_out_of_range_rejected(self):
        enc = BuiltinEncoder.create(EncoderConfig(hidden=4, buckets=7, seed=0))
        bad = MarkedSentence(tokens=tuple(BORN), e1_start_pos=0,
                             e2_start_pos=99, origin_id="bad1")
        with pytest.raises(DataError):
            encode_batch(enc, [bad])

    def test_over_length_sentence_rejected_by_id(self):
        enc = BuiltinEncoder.create(EncoderConfig(hidden=4, buckets=7, seed=0))
        long_tokens = BORN + ["pad"] * 20
        with pytest.raises(DataError, match="long0"):
            encode_batch(enc, [marked(long_tokens, "long0")], max_length=16)


class TestEncoderGradients:
    def test_scalar_probe_matches_finite_differences(self):
        # Seed 5 keeps every feed-forward pre-activation at least 3.5e-3
        # from the relu kink, far beyond the 1e-5 probe step.
        enc0 = BuiltinEncoder.create(EncoderConfig(hidden=6, buckets=13, seed=5))
        batch = [marked(BORN), marked(STARS, "m1")]
        probe = rng_for(5, 502).normal(size=(2, 12))

        def f(params):
            enc = BuiltinEncoder(hidden=6, buckets=13, params=params)
            feats, caches = encode_batch_cached(enc, batch)
            loss = float((feats * probe).sum())
            return loss, encoder_backward(enc, caches, probe)

        assert grad_check(f, enc0.params) <= 1e-4


class TestFreezeAndCopy:
    def test_copy_is_deep_for_params(self):
        enc = BuiltinEncoder.create(EncoderConfig(hidden=4, buckets=7, seed=0))
        dup = enc.copy()
        dup.params["wq"][0, 0] += 1.0
        assert enc.params["wq"][0, 0] != dup.params["wq"][0, 0]

    def test_freeze_flag_round_trip(self):
        enc = BuiltinEncoder.create(EncoderConfig(hidden=4, buckets=7, seed=0))
        assert not enc.frozen
        enc.freeze()
        assert enc.frozen
        assert enc.copy().frozen
        enc.unfreeze()
        assert not enc.frozen


class TestFeatureStore:
    def test_rejects_duplicate_ids(self):
        with pytest.raises(DataError):
            FeatureStore(np.zeros((2, 3)), ["a", "a"])

    def test_rejects_misaligned_matrix(self):
        with pytest.raises(DataError):
            FeatureStore(np.zeros((2, 3)), ["a", "b", "c"])

    def test_rejects_non_finite_rows(self):
        bad = np.zeros((2, 3))
        bad[1, 2] = np.nan
        with pytest.raises(DataError):
            FeatureStore(bad, ["a", "b"])

    def test_id_index_maps_rows(self):
        store = FeatureStore(np.arange(6, dtype=float).reshape(3, 2),
                             ["x", "y", "z"])
        assert store.n == 3 and store.dim == 2
        assert store.id_index == {"x": 0, "y": 1, "z": 2}


class TestLoadFeatures:
    def _store_for(self, corpus, seed=0):
        rng = np.random.default_rng(seed)
        ids = [s.origin_id for s in corpus.sentences]
        return FeatureStore(rng.normal(size=(len(ids), 5)), ids)

    def test_round_trip_preserves_single_precision_values(self, tmp_path):
        corpus = make_corpus(n=6)
        store = self._store_for(corpus)
        path = os.path.join(tmp_path, "feat.bin")
        store.save(path)
        loaded = load_features(path, corpus)
        np.testing.assert_array_equal(
            loaded.matrix, store.matrix.astype(np.float32).astype(np.float64))
        assert loaded.ids == store.ids

    def test_file_order_is_realigned_to_corpus_order(self, tmp_path):
        corpus = make_corpus(n=6)
        store = self._store_for(corpus)
        path = os.path.join(tmp_path, "shuffled.bin")
        perm = np.random.default_rng(1).permutation(store.n)
        save_features(path, store.matrix[perm].astype(np.float32),
                      [store.ids[i] for i in perm])
        loaded = load_features(path, corpus)
        assert loaded.ids == [s.origin_id for s in corpus.sentences]
        np.testing.assert_array_equal(
            loaded.matrix, store.matrix.astype(np.float32).astype(np.float64))

    def test_missing_ids_listed_in_error(self, tmp_path):
        corpus = make_corpus(n=4)
        store = self._store_for(corpus)
        path = os.path.join(tmp_path, "short.bin")
        save_features(path, store.matrix[:2].astype(np.float32), store.ids[:2])
        with pytest.raises(DataError) as excinfo:
            load_features(path, corpus)
        for missing_id in store.ids[2:]:
            assert missing_id in str(excinfo.value)

    def test_many_missing_ids_shows_count_and_first_five(self, tmp_path):
        corpus = make_corpus(n=12)
        ids = [s.origin_id for s in corpus.sentences]
        path = os.path.join(tmp_path, "empty_cover.bin")
        save_features(path, np.zeros((1, 5), dtype=np.float32), [ids[0]])
        with pytest.raises(DataError) as excinfo:
            load_features(path, corpus)
        message = str(excinfo.value)
        assert "11" in message
        for missing_id in ids[1:6]:
            assert missing_id in message

    def test_extra_ids_rejected(self, tmp_path):
        corpus = make_corpus(n=4)
        store = self._store_for(corpus)
        path = os.path.join(tmp_path, "extra.bin")
        matrix = np.vstack([store.matrix, np.zeros((1, 5))]).astype(np.float32)
        save_features(path, matrix, store.ids + ["stowaway"])
        with pytest.raises(DataError, match="stowaway"):
            load_features(path, corpus)


class TestEncodeCorpus:
    def test_rows_follow_corpus_order(self):
        corpus = make_corpus(n=6)
        enc = BuiltinEncoder.create(EncoderConfig(hidden=6, buckets=13, seed=0))
        store = encode_corpus(enc, corpus)
        assert store.ids == [s.origin_id for s in corpus.sentences]
        direct = encode_batch(enc, list(corpus.sentences))
        np.testing.assert_array_equal(store.matrix, direct)
