"""Relation encoders: a small trainable built-in encoder and a loader for
precomputed features.

Both produce one fixed-length feature row per sentence: the hidden vectors at
the two entity start markers, concatenated (D = 2 * hidden). The built-in
encoder exists so that classifier training can actually refine features at
desk scale; the loader consumes features exported from a large pretrained
model and is read-only.

Built-in architecture: hash-bucketed embeddings (markers own dedicated rows,
everything else is FNV-1a bucketed), one single-head self-attention block
with a residual connection, then a position-wise feed-forward layer with a
second residual. No positional signal: relation templates here are
order-insensitive bags anchored by the marker tokens.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import Corpus, MarkedSentence, MARKERS
from .errors import ConfigError, DataError, NumericsError
from .numerics import Params, rng_for, softmax
from .tensorio import load_features as _load_feature_file
from .tensorio import save_features as _save_feature_file

log = logging.getLogger(__name__)

_INIT_TAG = 501

_MARKER_ROWS = {tok: i for i, tok in enumerate(MARKERS)}
_N_RESERVED = len(MARKERS)


def fnv1a(token: str) -> int:
    """32-bit FNV-1a over the token's UTF-8 bytes."""
    h = 2166136261
    for byte in token.encode("utf-8"):
        h ^= byte
        h = (h * 16777619) & 0xFFFFFFFF
    return h


@dataclass
class EncoderConfig:
    hidden: int = 64
    buckets: int = 50021
    embed_std: float = 1.0
    weight_std: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.hidden < 1 or self.buckets < 1:
            raise ConfigError("hidden and buckets must be positive")
        if self.embed_std <= 0 or self.weight_std <= 0:
            raise ConfigError("init stds must be positive")


@dataclass
class BuiltinEncoder:
    """Trainable desk-scale relation encoder."""

    hidden: int
    buckets: int
    params: Params
    frozen: bool = False

    @classmethod
    def create(cls, cfg: EncoderConfig) -> "BuiltinEncoder":
        rng = rng_for(cfg.seed, _INIT_TAG)
        h = cfg.hidden
        params: Params = {
            "emb": rng.normal(0.0, cfg.embed_std, (_N_RESERVED + cfg.buckets, h)),
            "wq": rng.normal(0.0, cfg.weight_std, (h, h)),
            "wk": rng.normal(0.0, cfg.weight_std, (h, h)),
            "wv": rng.normal(0.0, cfg.weight_std, (h, h)),
            "wf": rng.normal(0.0, cfg.weight_std, (h, h)),
            "bf": np.zeros(h),
        }
        return cls(hidden=h, buckets=cfg.buckets, params=params)

    @property
    def feature_dim(self) -> int:
        return 2 * self.hidden

    def token_row(self, token: str) -> int:
        row = _MARKER_ROWS.get(token)
        if row is not None:
            return row
        return _N_RESERVED + fnv1a(token) % self.buckets

    def freeze(self) -> None:
        self.frozen = True

    def unfreeze(self) -> None:
        self.frozen = False

    def copy(self) -> "BuiltinEncoder":
        return BuiltinEncoder(self.hidden, self.buckets,
                              {k: v.copy() for k, v in self.params.items()},
                              self.frozen)


def _check_sentence(enc: BuiltinEncoder, s: MarkedSentence, max_length: int) -> None:
    if len(s.tokens) > max_length:
        raise DataError(f"{s.origin_id}: marked length {len(s.tokens)} exceeds "
                        f"max_length {max_length}")
    for pos, marker in ((s.e1_start_pos, MARKERS[0]), (s.e2_start_pos, MARKERS[2])):
        if not (0 <= pos < len(s.tokens)) or s.tokens[pos] != marker:
            raise DataError(f"{s.origin_id}: marker {marker} not at position {pos}")


def _forward_one(enc: BuiltinEncoder, s: MarkedSentence):
    p = enc.params
    rows = np.array([enc.token_row(t) for t in s.tokens])
    x0 = p["emb"][rows]
    q = x0 @ p["wq"]
    k = x0 @ p["wk"]
    v = x0 @ p["wv"]
    scores = q @ k.T / np.sqrt(enc.hidden)
    attn = softmax(scores)
    mixed = attn @ v
    x1 = x0 + mixed
    ffn_pre = x1 @ p["wf"] + p["bf"]
    x2 = x1 + np.maximum(ffn_pre, 0.0)
    feature = np.concatenate([x2[s.e1_start_pos], x2[s.e2_start_pos]])
    cache = (rows, x0, q, k, v, attn, x1, ffn_pre, s.e1_start_pos, s.e2_start_pos)
    return feature, cache


def encode_batch(enc: BuiltinEncoder, batch: list[MarkedSentence],
                 max_length: int = 128) -> np.ndarray:
    """Feature rows (B x 2*hidden) for a batch of marked sentences."""
    out, _ = encode_batch_cached(enc, batch, max_length)
    return out


def encode_batch_cached(enc: BuiltinEncoder, batch: list[MarkedSentence],
                        max_length: int = 128):
    """Forward pass keeping per-sentence intermediates for backprop."""
    features = np.empty((len(batch), enc.feature_dim))
    caches = []
    for i, s in enumerate(batch):
        _check_sentence(enc, s, max_length)
        features[i], cache = _forward_one(enc, s)
        caches.append(cache)
    if not np.isfinite(features).all():
        raise NumericsError("non-finite encoder features")
    return features, caches


def encoder_backward(enc: BuiltinEncoder, caches, dfeatures: np.ndarray) -> Params:
    """Gradients of a scalar loss w.r.t. every encoder parameter, given the
    loss gradient on the feature rows."""
    p = enc.params
    h = enc.hidden
    grads: Params = {name: np.zeros_like(arr) for name, arr in p.items()}
    scale = 1.0 / np.sqrt(h)
    for cache, dfeat in zip(caches, dfeatures):
        rows, x0, q, k, v, attn, x1, ffn_pre, e1_pos, e2_pos = cache
        dx2 = np.zeros_like(x0)
        dx2[e1_pos] += dfeat[:h]
        dx2[e2_pos] += dfeat[h:]
        dffn_pre = dx2 * (ffn_pre > 0.0)
        grads["wf"] += x1.T @ dffn_pre
        grads["bf"] += dffn_pre.sum(axis=0)
        dx1 = dx2 + dffn_pre @ p["wf"].T
        dmixed = dx1
        dattn = dmixed @ v.T
        dv = attn.T @ dmixed
        dscores = attn * (dattn - (dattn * attn).sum(axis=1, keepdims=True))
        dscores *= scale
        dq = dscores @ k
        dk = dscores.T @ q
        grads["wq"] += x0.T @ dq
        grads["wk"] += x0.T @ dk
        grads["wv"] += x0.T @ dv
        dx0 = dx1 + dq @ p["wq"].T + dk @ p["wk"].T + dv @ p["wv"].T
        np.add.at(grads["emb"], rows, dx0)
    return grads


@dataclass
class FeatureStore:
    """Feature rows aligned one-to-one with a corpus, in corpus order."""

    matrix: np.ndarray
    ids: list[str]
    id_index: dict[str, int] = field(init=False)

    def __post_init__(self):
        self.matrix = np.ascontiguousarray(self.matrix, dtype=np.float64)
        if self.matrix.ndim != 2 or self.matrix.shape[0] != len(self.ids):
            raise DataError("feature matrix misaligned with ids")
        if not np.isfinite(self.matrix).all():
            raise DataError("non-finite feature values")
        self.id_index = {rid: i for i, rid in enumerate(self.ids)}
        if len(self.id_index) != len(self.ids):
            raise DataError("duplicate feature ids")

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def save(self, path: str) -> None:
        _save_feature_file(path, self.matrix.astype(np.float32), self.ids)


def encode_corpus(enc: BuiltinEncoder, corpus: Corpus,
                  max_length: int = 128) -> FeatureStore:
    features = encode_batch(enc, list(corpus.sentences), max_length)
    return FeatureStore(features, [s.origin_id for s in corpus.sentences])


def load_features(path: str, corpus: Corpus) -> FeatureStore:
    """Load precomputed features and align them to corpus order.

    The file must cover the corpus exactly: missing or extra ids are errors
    (the first few offenders are listed).
    """
    matrix, ids = _load_feature_file(path)
    index = {rid: i for i, rid in enumerate(ids)}
    corpus_ids = [s.origin_id for s in corpus.sentences]
    missing = [cid for cid in corpus_ids if cid not in index]
    if missing:
        shown = ", ".join(missing[:5])
        raise DataError(f"{path}: {len(missing)} corpus ids missing ({shown}, ...)"
                        if len(missing) > 5 else
                        f"{path}: corpus ids missing from features: {shown}")
    extra = set(ids) - set(corpus_ids)
    if extra:
        shown = ", ".join(sorted(extra)[:5])
        raise DataError(f"{path}: {len(extra)} feature rows not in corpus ({shown})")
    order = [index[cid] for cid in corpus_ids]
    return FeatureStore(matrix[order].astype(np.float64), corpus_ids)
