"""Unit tests: record validation, piece assembly, readout, skip handling."""
import numpy as np
import pytest
import torch
from conftest import HIDDEN_SIZE, record, write_corpus

from sore_export.errors import DataError
from sore_export.export import (ExportJob, load_encoder, marker_positions,
                                piece_ids, run_export)
from sore_export.records import mark, read_corpus
from sore_export.sorefile import read_features, write_features


class TestRecords:
    def test_marking_either_entity_order(self):
        first = mark("s0", ("alice", "met", "bob"), (0, 1), (2, 3))
        assert first.tokens == ("[E1_start]", "alice", "[E1_end]", "met",
                                "[E2_start]", "bob", "[E2_end]")
        assert (first.e1_start_pos, first.e2_start_pos) == (0, 4)
        second = mark("s1", ("alice", "met", "bob"), (2, 3), (0, 1))
        assert second.tokens == ("[E2_start]", "alice", "[E2_end]", "met",
                                 "[E1_start]", "bob", "[E1_end]")
        assert (second.e1_start_pos, second.e2_start_pos) == (4, 0)

    def test_overlapping_spans_rejected(self):
        with pytest.raises(DataError, match="overlapping"):
            mark("s0", ("a", "b", "c"), (0, 2), (1, 3))

    def test_reserved_marker_token_rejected(self):
        with pytest.raises(DataError, match="reserved"):
            mark("s0", ("a", "[E1_end]", "b"), (0, 1), (2, 3))

    def test_duplicate_ids_rejected(self, tmp_path):
        path = str(tmp_path / "dup.jsonl")
        write_corpus(path, [record("x", ["a", "b"], (0, 1), (1, 2)),
                            record("x", ["c", "d"], (0, 1), (1, 2))])
        with pytest.raises(DataError, match="duplicate"):
            read_corpus(path)

    def test_invalid_json_line_is_an_error(self, tmp_path):
        path = str(tmp_path / "bad.jsonl")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write('{"id": "ok", "tokens": ["a", "b"], "e1": [0, 1], "e2": [1, 2]}\n')
            fh.write("not json\n")
        with pytest.raises(DataError, match="invalid JSON"):
            read_corpus(path)


class TestPieceAssembly:
    def test_markers_kept_whole_and_located(self, model_dir):
        tokenizer, _ = load_encoder(model_dir)
        sent = mark("s0", ("alice", "was", "born", "in", "paris"), (0, 1), (4, 5))
        ids = piece_ids(tokenizer, sent)
        # [CLS] + 9 marked tokens + [SEP], every word a single piece.
        assert len(ids) == 11
        assert marker_positions(tokenizer, ids, "s0") == (1, 7)

    def test_subword_expansion_shifts_positions(self, model_dir):
        tokenizer, _ = load_encoder(model_dir)
        sent = mark("s0", ("alice", "works", "for", "acme"), (0, 1), (3, 4))
        ids = piece_ids(tokenizer, sent)
        assert tokenizer.tokenize("works") == ["work", "##s"]
        # works splits in two, so [E2_start] lands one position later.
        assert len(ids) == 11
        assert marker_positions(tokenizer, ids, "s0") == (1, 7)
        sent2 = mark("s1", ("works", "alice", "for", "acme"), (1, 2), (3, 4))
        ids2 = piece_ids(tokenizer, sent2)
        assert marker_positions(tokenizer, ids2, "s1") == (3, 7)

    def test_marker_string_inside_text_token_rejected(self, model_dir):
        tokenizer, _ = load_encoder(model_dir)
        sent = mark("s0", ("x[E1_start]y", "met", "bob"), (0, 1), (2, 3))
        ids = piece_ids(tokenizer, sent)
        with pytest.raises(DataError, match="matched 2"):
            marker_positions(tokenizer, ids, "s0")


class TestExport:
    def corpus(self, tmp_path, records):
        path = str(tmp_path / "corpus.jsonl")
        write_corpus(path, records)
        return path

    def test_dimension_ids_and_order(self, model_dir, tmp_path):
        path = self.corpus(tmp_path, [
            record("r0", ["alice", "met", "bob"], (0, 1), (2, 3)),
            record("r1", ["bob", "was", "born", "in", "leeds"], (0, 1), (4, 5)),
            record("r2", ["acme", "works", "alice"], (2, 3), (0, 1)),
        ])
        out = str(tmp_path / "feats.sore")
        report = run_export(ExportJob(corpus=path, model=model_dir, out=out))
        assert (report.rows, report.dim) == (3, 2 * HIDDEN_SIZE)
        feats, ids = read_features(out)
        assert feats.shape == (3, 2 * HIDDEN_SIZE)
        assert ids == ["r0", "r1", "r2"]

    def test_over_length_skipped_and_logged(self, model_dir, tmp_path):
        long_tokens = ["alice", "met", "bob"] + ["the"] * 20
        path = self.corpus(tmp_path, [
            record("short", ["alice", "met", "bob"], (0, 1), (2, 3)),
            record("long", long_tokens, (0, 1), (2, 3)),
        ])
        out = str(tmp_path / "feats.sore")
        report = run_export(ExportJob(corpus=path, model=model_dir, out=out,
                                      max_length=16))
        assert report.rows == 1
        assert report.skipped == [("long", 29)]
        _, ids = read_features(out)
        assert ids == ["short"]
        with open(out + ".skipped", encoding="utf-8") as fh:
            assert fh.read() == "long\t29\n"

    def test_rerun_is_byte_identical(self, model_dir, tmp_path):
        path = self.corpus(tmp_path, [
            record(f"r{i}", ["alice", "met", "bob", "in", "paris"], (0, 1), (2, 3))
            for i in range(7)
        ])
        first = str(tmp_path / "a.sore")
        second = str(tmp_path / "b.sore")
        run_export(ExportJob(corpus=path, model=model_dir, out=first, batch_size=3))
        run_export(ExportJob(corpus=path, model=model_dir, out=second, batch_size=3))
        with open(first, "rb") as fh:
            payload = fh.read()
        with open(second, "rb") as fh:
            assert fh.read() == payload
        with open(first + ".skipped", "rb") as fh:
            skipped = fh.read()
        with open(second + ".skipped", "rb") as fh:
            assert fh.read() == skipped

    def test_rows_match_single_sentence_forward(self, model_dir, tmp_path):
        # Batch of ragged lengths, compared against one-at-a-time inference.
        path = self.corpus(tmp_path, [
            record("r0", ["alice", "met", "bob"], (0, 1), (2, 3)),
            record("r1", ["bob", "was", "born", "in", "leeds", "the", "met"],
                   (0, 1), (4, 5)),
        ])
        out = str(tmp_path / "feats.sore")
        run_export(ExportJob(corpus=path, model=model_dir, out=out, batch_size=2))
        feats, _ = read_features(out)

        tokenizer, model = load_encoder(model_dir)
        for row, sent in enumerate(read_corpus(path)):
            ids = piece_ids(tokenizer, sent)
            e1_pos, e2_pos = marker_positions(tokenizer, ids, sent.id)
            with torch.no_grad():
                hidden = model(input_ids=torch.tensor([ids])).last_hidden_state[0]
            expected = np.concatenate([hidden[e1_pos].numpy(),
                                       hidden[e2_pos].numpy()])
            np.testing.assert_allclose(feats[row], expected, atol=1e-5)


class TestFeatureFile:
    def test_round_trip_preserves_bytes_and_values(self, tmp_path):
        rng = np.random.default_rng(3)
        feats = rng.normal(size=(5, 8)).astype(np.float32)
        ids = [f"id{i}" for i in range(5)]
        first = str(tmp_path / "a.sore")
        second = str(tmp_path / "b.sore")
        write_features(first, feats, ids)
        loaded, loaded_ids = read_features(first)
        np.testing.assert_array_equal(loaded, feats)
        assert loaded_ids == ids
        write_features(second, loaded, loaded_ids)
        with open(first, "rb") as fh:
            payload = fh.read()
        with open(second, "rb") as fh:
            assert fh.read() == payload

    def test_non_finite_rows_rejected(self, tmp_path):
        feats = np.zeros((2, 3), dtype=np.float32)
        feats[1, 1] = np.nan
        with pytest.raises(DataError, match="non-finite"):
            write_features(str(tmp_path / "bad.sore"), feats, ["a", "b"])
