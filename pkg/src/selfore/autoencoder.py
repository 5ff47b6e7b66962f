"""Stacked denoising autoencoder over relation features.

The encoder half (input -> 500 -> 500 -> latent by default) later serves as
the latent map for adaptive clustering; the decoder mirrors it. Training
corrupts both the input and the latent code with inverted dropout and
minimizes mean squared reconstruction error. Inference applies no corruption.

Hidden layers are relu; the latent and reconstruction layers are linear so
the latent geometry stays unwarped for the clustering kernel.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericsError
from .numerics import (AdamState, LinearLayer, Params, adam_step, as_dense2d,
                       backward_layers, dropout, forward_layers,
                       forward_layers_cached, gaussian_layer, rng_for)
from .tensorio import MAGIC_AUTOENCODER, load_tensors, save_tensors

log = logging.getLogger(__name__)

_INIT_TAG = 301
_SHUFFLE_TAG = 302
_DROPOUT_TAG = 303

DEFAULT_HIDDEN = (500, 500)
DEFAULT_LATENT = 200


@dataclass
class PretrainConfig:
    epochs: int = 20
    learning_rate: float = 1e-3
    weight_decay: float = 1e-5
    init_std: float = 0.01
    batch_size: int = 256
    dropout: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.epochs <= 0 or self.learning_rate <= 0 or self.init_std <= 0:
            raise ConfigError("epochs, learning_rate and init_std must be positive")
        if self.batch_size <= 0:
            raise ConfigError("batch_size must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must be in [0,1), got {self.dropout}")


@dataclass
class AutoencoderParams:
    encoder: list[LinearLayer]
    decoder: list[LinearLayer]
    dropout: float = 0.2

    def __post_init__(self):
        if not self.encoder or not self.decoder:
            raise NumericsError("encoder and decoder must be non-empty")
        if self.encoder[-1].out_dim != self.decoder[0].in_dim:
            raise NumericsError("latent dimension mismatch between halves")
        if self.decoder[-1].out_dim != self.encoder[0].in_dim:
            raise NumericsError("decoder output must match encoder input dim")

    @property
    def input_dim(self) -> int:
        return self.encoder[0].in_dim

    @property
    def latent_dim(self) -> int:
        return self.encoder[-1].out_dim

    def copy(self) -> "AutoencoderParams":
        return AutoencoderParams([l.copy() for l in self.encoder],
                                 [l.copy() for l in self.decoder], self.dropout)


def init_params(input_dim: int, hidden: tuple[int, ...] = DEFAULT_HIDDEN,
                latent_dim: int = DEFAULT_LATENT, dropout_rate: float = 0.2,
                std: float = 0.01, seed: int = 0) -> AutoencoderParams:
    """Fresh autoencoder with Gaussian weights and zero biases.

    Encoder dims run input -> hidden... -> latent, decoder mirrors them.
    """
    rng = rng_for(seed, _INIT_TAG)
    enc_dims = (input_dim, *hidden, latent_dim)
    dec_dims = tuple(reversed(enc_dims))

    def build(dims):
        layers = []
        for a, b in zip(dims[:-1], dims[1:]):
            layers.append(gaussian_layer(a, b, std, rng, activation="relu"))
        layers[-1].activation = "identity"
        return layers

    return AutoencoderParams(build(enc_dims), build(dec_dims), dropout_rate)


def encode(params: AutoencoderParams, h: np.ndarray) -> np.ndarray:
    """Latent code z for a feature vector or matrix; pure, no corruption."""
    h = np.asarray(h, dtype=np.float64)
    single = h.ndim == 1
    z = forward_layers(params.encoder, h[None, :] if single else h)
    return z[0] if single else z


def reconstruct(params: AutoencoderParams, h: np.ndarray) -> np.ndarray:
    """Inference-mode reconstruction (encode then decode, no corruption)."""
    h = np.asarray(h, dtype=np.float64)
    single = h.ndim == 1
    out = forward_layers(params.decoder,
                         forward_layers(params.encoder, h[None, :] if single else h))
    return out[0] if single else out


def to_flat(params: AutoencoderParams) -> Params:
    flat: Params = {}
    for prefix, layers in (("enc", params.encoder), ("dec", params.decoder)):
        for idx, layer in enumerate(layers):
            flat[f"{prefix}{idx}.W"] = layer.W
            flat[f"{prefix}{idx}.b"] = layer.b
    return flat


def from_flat(params: AutoencoderParams, flat: Params) -> AutoencoderParams:
    """New AutoencoderParams with the same topology but tensors from flat."""

    def rebuild(prefix, layers):
        return [LinearLayer(flat[f"{prefix}{idx}.W"], flat[f"{prefix}{idx}.b"],
                            layer.activation)
                for idx, layer in enumerate(layers)]

    return AutoencoderParams(rebuild("enc", params.encoder),
                             rebuild("dec", params.decoder), params.dropout)


def loss_and_grads(params: AutoencoderParams, x: np.ndarray,
                   rng: np.random.Generator | None = None,
                   train: bool = False) -> tuple[float, Params]:
    """Mean squared reconstruction error and gradients for every tensor.

    train=True corrupts the input and the latent code with dropout at the
    configured rate, drawing masks from rng; train=False is the pure
    objective used for evaluation and gradient checking.
    """
    x = as_dense2d(x)
    if x.shape[1] != params.input_dim:
        raise NumericsError(f"feature dim {x.shape[1]} != model input {params.input_dim}")
    corrupted, in_mask = dropout(x, params.dropout, rng, train=train)
    z, enc_caches = forward_layers_cached(params.encoder, corrupted)
    z_corrupted, lat_mask = dropout(z, params.dropout, rng, train=train)
    recon, dec_caches = forward_layers_cached(params.decoder, z_corrupted)
    diff = recon - x
    loss = float((diff * diff).mean())
    dout = 2.0 * diff / diff.size
    dz_corrupted, dec_grads = backward_layers(params.decoder, dec_caches, dout)
    dz = dz_corrupted * lat_mask
    _, enc_grads = backward_layers(params.encoder, enc_caches, dz)
    grads: Params = {}
    for prefix, layer_grads in (("enc", enc_grads), ("dec", dec_grads)):
        for idx, (dW, db) in enumerate(layer_grads):
            grads[f"{prefix}{idx}.W"] = dW
            grads[f"{prefix}{idx}.b"] = db
    return loss, grads


def pretrain(features: np.ndarray, cfg: PretrainConfig,
             hidden: tuple[int, ...] = DEFAULT_HIDDEN,
             latent_dim: int = DEFAULT_LATENT) -> tuple[AutoencoderParams, list[float]]:
    """Train a fresh autoencoder on the feature matrix.

    Returns the trained parameters and the mean corrupted-objective loss per
    epoch. Batch size is clamped to the dataset size so small corpora train
    full-batch.
    """
    x = as_dense2d(features)
    n = x.shape[0]
    if n == 0:
        raise NumericsError("cannot pretrain on an empty feature matrix")
    params = init_params(x.shape[1], hidden, latent_dim,
                         dropout_rate=cfg.dropout, std=cfg.init_std, seed=cfg.seed)
    flat = to_flat(params)
    adam = AdamState(lr=cfg.learning_rate, weight_decay=cfg.weight_decay)
    batch = min(cfg.batch_size, n)
    history: list[float] = []
    for epoch in range(cfg.epochs):
        order = rng_for(cfg.seed, _SHUFFLE_TAG, epoch).permutation(n)
        drop_rng = rng_for(cfg.seed, _DROPOUT_TAG, epoch)
        total = 0.0
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            model = from_flat(params, flat)
            loss, grads = loss_and_grads(model, x[idx], drop_rng, train=True)
            if not np.isfinite(loss):
                raise NumericsError(
                    f"non-finite reconstruction loss at epoch {epoch}, batch {start // batch}"
                )
            flat = adam_step(adam, flat, grads)
            total += loss * idx.size
        history.append(total / n)
    return from_flat(params, flat), history


def save_autoencoder(path: str, params: AutoencoderParams) -> None:
    meta = {
        "dropout": params.dropout,
        "encoder_activations": [l.activation for l in params.encoder],
        "decoder_activations": [l.activation for l in params.decoder],
    }
    save_tensors(path, MAGIC_AUTOENCODER, to_flat(params), meta)


def load_autoencoder(path: str) -> AutoencoderParams:
    tensors, meta = load_tensors(path, MAGIC_AUTOENCODER)

    def rebuild(prefix, activations):
        layers = []
        for idx, act in enumerate(activations):
            layers.append(LinearLayer(tensors[f"{prefix}{idx}.W"],
                                      tensors[f"{prefix}{idx}.b"], act))
        return layers

    return AutoencoderParams(rebuild("enc", meta["encoder_activations"]),
                             rebuild("dec", meta["decoder_activations"]),
                             float(meta["dropout"]))
