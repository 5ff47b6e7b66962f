"""Relation classification head trained on pseudo-labels.

A single fully connected layer maps relation features to pseudo-class
logits, with dropout on the input features during training. In built-in
encoder mode the cross-entropy gradient also flows into the encoder, which
is what turns pseudo-label supervision into feature refinement; the encoder
is held fixed for a configurable number of warm-up epochs first. In
precomputed mode only the head trains.

The head starts at zero, so the initial loss on K classes is ln K exactly.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .corpus import MarkedSentence
from .encoders import BuiltinEncoder, encode_batch_cached, encoder_backward
from .errors import ConfigError, NumericsError
from .numerics import (AdamState, Params, adam_step, as_dense2d, dropout,
                       one_hot, rng_for, softmax_xent)
from .tensorio import MAGIC_CLASSIFIER, load_tensors, save_tensors

log = logging.getLogger(__name__)

_SHUFFLE_TAG = 601
_DROPOUT_TAG = 602


@dataclass
class ClassifierParams:
    """Affine head feature_dim -> n_classes plus its input dropout rate."""

    W: np.ndarray
    b: np.ndarray
    dropout: float = 0.1

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise NumericsError(f"bad head shapes W={self.W.shape} b={self.b.shape}")
        if not 0.0 <= self.dropout < 1.0:
            raise NumericsError(f"dropout must be in [0,1), got {self.dropout}")

    @classmethod
    def create(cls, feature_dim: int, n_classes: int,
               dropout_rate: float = 0.1) -> "ClassifierParams":
        return cls(np.zeros((n_classes, feature_dim)), np.zeros(n_classes),
                   dropout_rate)

    @property
    def n_classes(self) -> int:
        return self.W.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.W.shape[1]

    def copy(self) -> "ClassifierParams":
        return ClassifierParams(self.W.copy(), self.b.copy(), self.dropout)


@dataclass
class TrainSchedule:
    learning_rate: float = 1e-5
    warmup_fraction: float = 0.1
    encoder_freeze_epochs: int = 3
    epochs: int = 5
    batch_size: int = 64
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate <= 0 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("learning_rate, epochs and batch_size must be positive")
        if not 0.0 <= self.warmup_fraction <= 1.0:
            raise ConfigError("warmup_fraction must be in [0,1]")
        if not 0 <= self.encoder_freeze_epochs <= self.epochs:
            raise ConfigError("encoder_freeze_epochs must be within epochs")


def forward(params: ClassifierParams, features: np.ndarray) -> np.ndarray:
    """Logits for a feature batch; softmax of these is the label distribution."""
    x = as_dense2d(features)
    if x.shape[1] != params.feature_dim:
        raise NumericsError(f"feature dim {x.shape[1]} != head dim {params.feature_dim}")
    return x @ params.W.T + params.b


def _check_labels(labels: np.ndarray, n: int, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.shape != (n,):
        raise NumericsError(f"expected {n} labels, got shape {labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise NumericsError(f"label outside [0,{k}) present")
    return labels.astype(np.int64)


@dataclass
class TrainResult:
    params: ClassifierParams
    epoch_losses: list[float] = field(default_factory=list)
    final_accuracy: float = 0.0


def train_precomputed(params: ClassifierParams, features: np.ndarray,
                      labels: np.ndarray, sched: TrainSchedule) -> TrainResult:
    """Head-only training against fixed feature rows."""
    x = as_dense2d(features)
    n = x.shape[0]
    labels = _check_labels(labels, n, params.n_classes)
    targets = one_hot(labels, params.n_classes)
    head = params.copy()
    batch = min(sched.batch_size, n)
    steps_per_epoch = (n + batch - 1) // batch
    adam = AdamState(lr=sched.learning_rate, warmup_fraction=sched.warmup_fraction,
                     total_steps=sched.epochs * steps_per_epoch)
    flat: Params = {"W": head.W, "b": head.b}
    losses = []
    for epoch in range(sched.epochs):
        order = rng_for(sched.seed, _SHUFFLE_TAG, epoch).permutation(n)
        drop_rng = rng_for(sched.seed, _DROPOUT_TAG, epoch)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            x_drop, _ = dropout(x[idx], head.dropout, drop_rng, train=True)
            logits = x_drop @ flat["W"].T + flat["b"]
            loss, dlogits = softmax_xent(logits, targets[idx])
            if not np.isfinite(loss):
                raise NumericsError(f"non-finite classifier loss at epoch {epoch}")
            grads: Params = {"W": dlogits.T @ x_drop, "b": dlogits.sum(axis=0)}
            flat = adam_step(adam, flat, grads)
            total += loss * idx.size
        losses.append(total / n)
    head = ClassifierParams(flat["W"], flat["b"], head.dropout)
    preds = forward(head, x).argmax(axis=1)
    return TrainResult(head, losses, float(np.mean(preds == labels)))


def train_builtin(params: ClassifierParams, encoder: BuiltinEncoder,
                  sentences: list[MarkedSentence], labels: np.ndarray,
                  sched: TrainSchedule, max_length: int = 128
                  ) -> tuple[TrainResult, BuiltinEncoder]:
    """Joint training: cross-entropy updates the head and, after the freeze
    window, the encoder. A frozen encoder (encoder.frozen) never updates."""
    n = len(sentences)
    if n == 0:
        raise NumericsError("empty training batch")
    labels = _check_labels(labels, n, params.n_classes)
    targets = one_hot(labels, params.n_classes)
    head = params.copy()
    enc = encoder.copy()
    batch = min(sched.batch_size, n)
    steps_per_epoch = (n + batch - 1) // batch
    head_adam = AdamState(lr=sched.learning_rate, warmup_fraction=sched.warmup_fraction,
                          total_steps=sched.epochs * steps_per_epoch)
    enc_epochs = max(sched.epochs - sched.encoder_freeze_epochs, 0)
    enc_adam = AdamState(lr=sched.learning_rate, warmup_fraction=sched.warmup_fraction,
                         total_steps=max(enc_epochs * steps_per_epoch, 1))
    head_flat: Params = {"W": head.W, "b": head.b}
    losses = []
    for epoch in range(sched.epochs):
        update_encoder = (epoch >= sched.encoder_freeze_epochs) and not enc.frozen
        order = rng_for(sched.seed, _SHUFFLE_TAG, epoch).permutation(n)
        drop_rng = rng_for(sched.seed, _DROPOUT_TAG, epoch)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            batch_sents = [sentences[i] for i in idx]
            feats, caches = encode_batch_cached(enc, batch_sents, max_length)
            x_drop, mask = dropout(feats, head.dropout, drop_rng, train=True)
            logits = x_drop @ head_flat["W"].T + head_flat["b"]
            loss, dlogits = softmax_xent(logits, targets[idx])
            if not np.isfinite(loss):
                raise NumericsError(f"non-finite classifier loss at epoch {epoch}")
            head_grads: Params = {"W": dlogits.T @ x_drop, "b": dlogits.sum(axis=0)}
            if update_encoder:
                dfeats = (dlogits @ head_flat["W"]) * mask
                enc_grads = encoder_backward(enc, caches, dfeats)
                enc.params = adam_step(enc_adam, enc.params, enc_grads)
            head_flat = adam_step(head_adam, head_flat, head_grads)
            total += loss * idx.size
        losses.append(total / n)
    head = ClassifierParams(head_flat["W"], head_flat["b"], head.dropout)
    preds = predict_builtin(head, enc, sentences, max_length)
    return TrainResult(head, losses, float(np.mean(preds == labels))), enc


def predict(params: ClassifierParams, features: np.ndarray) -> np.ndarray:
    """Argmax labels for fixed feature rows; dropout disabled."""
    return forward(params, features).argmax(axis=1)


def predict_builtin(params: ClassifierParams, encoder: BuiltinEncoder,
                    sentences: list[MarkedSentence],
                    max_length: int = 128) -> np.ndarray:
    feats, _ = encode_batch_cached(encoder, sentences, max_length)
    return predict(params, feats)


def save_classifier(path: str, params: ClassifierParams) -> None:
    save_tensors(path, MAGIC_CLASSIFIER, {"W": params.W, "b": params.b},
                 {"dropout": params.dropout})


def load_classifier(path: str) -> ClassifierParams:
    tensors, meta = load_tensors(path, MAGIC_CLASSIFIER)
    return ClassifierParams(tensors["W"], tensors["b"], float(meta["dropout"]))
