"""Shared fixtures: tiny corpora and feature matrices used across test modules."""
import numpy as np
import pytest

from selfore.corpus import Corpus, RawSentence, inject_markers


def make_raw(tokens, e1, e2, sid="s0", relation=None):
    return RawSentence(id=sid, tokens=tuple(tokens), e1_span=tuple(e1),
                       e2_span=tuple(e2), gold_relation=relation)


def make_corpus(n=8, relation_cycle=("r0", "r1")):
    """Small corpus of distinct two-entity sentences with cycling gold labels."""
    sentences = []
    for i in range(n):
        raw = make_raw(
            ["ent%da" % i, "verb%d" % (i % 3), "links", "ent%db" % i, "today"],
            e1=(0, 1), e2=(3, 4), sid="toy-%03d" % i,
            relation=relation_cycle[i % len(relation_cycle)])
        sentences.append(inject_markers(raw))
    return Corpus(sentences=tuple(sentences),
                  label_vocabulary=frozenset(relation_cycle))


@pytest.fixture
def toy_corpus():
    return make_corpus()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def blob_data(n_per=30, k=3, dim=6, spread=0.05, seed=7):
    """Well-separated Gaussian blobs with known generating labels."""
    gen = np.random.default_rng(seed)
    centers = gen.normal(size=(k, dim)) * 4.0
    rows, labels = [], []
    for j in range(k):
        rows.append(centers[j] + spread * gen.normal(size=(n_per, dim)))
        labels.extend([j] * n_per)
    x = np.vstack(rows)
    order = gen.permutation(len(labels))
    return x[order], np.array(labels)[order]
