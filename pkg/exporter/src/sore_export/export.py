"""Batch inference over marked sentences, feature readout at the start markers.

Each encoder input is [CLS] + subword pieces + [SEP]. The marker strings are
registered as reserved vocabulary items so the subword tokenizer keeps them
whole, and their readout positions are recovered from the assembled piece
sequence by exact token-id match. The feature row for a sentence is the
final-layer hidden state at the [E1_start] position concatenated with the one
at the [E2_start] position, so the output dimension is twice the encoder's
hidden size.

Sentences whose piece sequence exceeds max_length are skipped and listed in a
sidecar log next to the output file. Inference runs in evaluation mode with
gradients disabled; rerunning the same job writes byte-identical files.
"""
from __future__ import annotations

import logging
import os
from dataclasses import dataclass, field

import numpy as np
import torch

from .errors import DataError, ModelError
from .records import E1_START, E2_START, MARKERS, MarkedSentence, read_corpus
from .sorefile import write_features

log = logging.getLogger(__name__)

SKIP_SUFFIX = ".skipped"


@dataclass(frozen=True)
class ExportJob:
    corpus: str
    model: str
    out: str
    batch_size: int = 32
    max_length: int = 128

    def __post_init__(self):
        if self.batch_size < 1:
            raise DataError(f"batch_size must be positive, got {self.batch_size}")
        # [CLS], both marker pairs, one entity token each, [SEP].
        if self.max_length < 8:
            raise DataError(f"max_length {self.max_length} leaves no room for markers")


@dataclass
class ExportReport:
    rows: int
    dim: int
    skipped: list[tuple[str, int]] = field(default_factory=list)


def load_encoder(model_id: str):
    """Tokenizer and encoder with the marker tokens registered.

    Marker embeddings added to the vocabulary are initialized to the mean of
    the pretrained rows, a deterministic choice so repeated loads agree.
    """
    from transformers import AutoModel, AutoTokenizer

    try:
        tokenizer = AutoTokenizer.from_pretrained(model_id)
        model = AutoModel.from_pretrained(model_id)
    except Exception as exc:
        raise ModelError(f"cannot load encoder {model_id!r}: {exc}") from exc
    added = tokenizer.add_special_tokens(
        {"additional_special_tokens": list(MARKERS)})
    embeddings = model.get_input_embeddings().weight
    if added and len(tokenizer) > embeddings.shape[0]:
        pretrained_rows = embeddings.shape[0]
        model.resize_token_embeddings(len(tokenizer))
        with torch.no_grad():
            weight = model.get_input_embeddings().weight
            weight[pretrained_rows:] = weight[:pretrained_rows].mean(dim=0)
    model.eval()
    return tokenizer, model


def piece_ids(tokenizer, sentence: MarkedSentence) -> list[int]:
    """Subword ids for the marked sentence, with [CLS]/[SEP] framing."""
    ids: list[int] = [tokenizer.cls_token_id]
    for word in sentence.tokens:
        pieces = tokenizer.tokenize(word)
        if not pieces:
            pieces = [tokenizer.unk_token]
        ids.extend(tokenizer.convert_tokens_to_ids(pieces))
    ids.append(tokenizer.sep_token_id)
    return ids


def marker_positions(tokenizer, ids: list[int], origin: str) -> tuple[int, int]:
    """Indices of the two start markers, by exact token-id equality.

    A marker id appearing any number of times other than once is an error;
    this also rejects text tokens that smuggle a marker string inside a
    larger word, which the tokenizer would split out as the reserved item.
    """
    positions = []
    for marker in (E1_START, E2_START):
        marker_id = tokenizer.convert_tokens_to_ids(marker)
        hits = [idx for idx, piece in enumerate(ids) if piece == marker_id]
        if len(hits) != 1:
            raise DataError(f"{origin}: marker {marker!r} matched "
                            f"{len(hits)} piece positions, expected 1")
        positions.append(hits[0])
    return positions[0], positions[1]


def _encode_batches(model, batch_ids: list[list[int]], pad_id: int,
                    batch_size: int) -> list[torch.Tensor]:
    """Final hidden states per sentence, batched in corpus order."""
    states: list[torch.Tensor] = []
    for start in range(0, len(batch_ids), batch_size):
        chunk = batch_ids[start:start + batch_size]
        width = max(len(ids) for ids in chunk)
        input_ids = torch.full((len(chunk), width), pad_id, dtype=torch.long)
        mask = torch.zeros((len(chunk), width), dtype=torch.long)
        for row, ids in enumerate(chunk):
            input_ids[row, :len(ids)] = torch.tensor(ids, dtype=torch.long)
            mask[row, :len(ids)] = 1
        with torch.no_grad():
            out = model(input_ids=input_ids, attention_mask=mask)
        hidden = getattr(out, "last_hidden_state", None)
        if hidden is None:
            raise ModelError("encoder does not expose token-level hidden states")
        states.extend(hidden[row, :len(ids)] for row, ids in enumerate(chunk))
    return states


def run_export(job: ExportJob) -> ExportReport:
    sentences = read_corpus(job.corpus)
    tokenizer, model = load_encoder(job.model)
    hidden_size = int(model.config.hidden_size)

    kept: list[tuple[MarkedSentence, list[int], int, int]] = []
    skipped: list[tuple[str, int]] = []
    for sentence in sentences:
        ids = piece_ids(tokenizer, sentence)
        if len(ids) > job.max_length:
            log.warning("%s: %d pieces exceed max_length %d; skipping",
                        sentence.id, len(ids), job.max_length)
            skipped.append((sentence.id, len(ids)))
            continue
        e1_pos, e2_pos = marker_positions(tokenizer, ids, sentence.id)
        kept.append((sentence, ids, e1_pos, e2_pos))
    if not kept:
        raise DataError(f"{job.corpus}: every sentence exceeded max_length")

    pad_id = tokenizer.pad_token_id if tokenizer.pad_token_id is not None else 0
    states = _encode_batches(model, [ids for _, ids, _, _ in kept],
                             pad_id, job.batch_size)
    rows = np.empty((len(kept), 2 * hidden_size), dtype=np.float32)
    for row, ((_, _, e1_pos, e2_pos), state) in enumerate(zip(kept, states)):
        rows[row, :hidden_size] = state[e1_pos].numpy()
        rows[row, hidden_size:] = state[e2_pos].numpy()

    write_features(job.out, rows, [sentence.id for sentence, _, _, _ in kept])
    with open(job.out + SKIP_SUFFIX, "w", encoding="utf-8") as fh:
        for rid, length in skipped:
            fh.write(f"{rid}\t{length}\n")
    return ExportReport(rows=len(kept), dim=2 * hidden_size, skipped=skipped)
