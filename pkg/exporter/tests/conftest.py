"""Fixtures: a tiny locally-built transformer encoder, no network access."""
import json

import pytest
import torch
from tokenizers import Tokenizer
from tokenizers.models import WordPiece
from tokenizers.pre_tokenizers import BertPreTokenizer
from transformers import BertConfig, BertModel, PreTrainedTokenizerFast

WORDS = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    "alice", "bob", "acme", "paris", "leeds",
    "was", "born", "in", "met", "the", "for", "work", "a",
    "##s", "##ing",
]
HIDDEN_SIZE = 16


@pytest.fixture(scope="session")
def model_dir(tmp_path_factory):
    """Directory with a small randomly initialized encoder and its tokenizer."""
    path = tmp_path_factory.mktemp("tinybert")
    vocab = {word: i for i, word in enumerate(WORDS)}
    backend = Tokenizer(WordPiece(vocab, unk_token="[UNK]",
                                  max_input_chars_per_word=64))
    backend.pre_tokenizer = BertPreTokenizer()
    tokenizer = PreTrainedTokenizerFast(
        tokenizer_object=backend, unk_token="[UNK]", pad_token="[PAD]",
        cls_token="[CLS]", sep_token="[SEP]", mask_token="[MASK]")
    tokenizer.save_pretrained(str(path))
    config = BertConfig(vocab_size=len(WORDS), hidden_size=HIDDEN_SIZE,
                        num_hidden_layers=2, num_attention_heads=2,
                        intermediate_size=32, max_position_embeddings=128)
    torch.manual_seed(7)
    BertModel(config).save_pretrained(str(path))
    return str(path)


def write_corpus(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def record(rid, tokens, e1, e2):
    return {"id": rid, "tokens": tokens, "e1": list(e1), "e2": list(e2)}
