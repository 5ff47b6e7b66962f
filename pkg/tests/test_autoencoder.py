"""Denoising autoencoder training, inference purity, and gradient checks."""
import numpy as np
import pytest

from selfore.autoencoder import (AutoencoderParams, PretrainConfig, encode,
                                 from_flat, init_params, load_autoencoder,
                                 loss_and_grads, pretrain, reconstruct,
                                 save_autoencoder, to_flat)
from selfore.errors import NumericsError
from selfore.numerics import grad_check, rng_for

from conftest import blob_data


def test_toy_identity_capacity_reaches_low_mse():
    x = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.5, -0.5]])
    cfg = PretrainConfig(epochs=200, learning_rate=0.01, weight_decay=0.0,
                         init_std=0.3, batch_size=4, dropout=0.0, seed=0)
    params, history = pretrain(x, cfg, hidden=(4,), latent_dim=2)
    loss, _ = loss_and_grads(params, x)
    assert loss < 1e-3
    assert history[-1] < history[0]


def test_loss_drops_from_first_to_last_epoch():
    x, _ = blob_data(n_per=40, k=3, dim=10, seed=2)
    cfg = PretrainConfig(epochs=20, learning_rate=1e-3, weight_decay=1e-5,
                         init_std=0.05, batch_size=32, dropout=0.2, seed=1)
    _, history = pretrain(x, cfg, hidden=(16, 16), latent_dim=4)
    assert history[19] < history[0]


def test_zero_input_reconstructs_zero():
    params = init_params(6, hidden=(5,), latent_dim=3, dropout_rate=0.0,
                         std=0.1, seed=0)
    x = np.zeros((4, 6))
    np.testing.assert_array_equal(reconstruct(params, x), np.zeros((4, 6)))
    loss, _ = loss_and_grads(params, x)
    assert loss == 0.0


def test_mean_loss_trajectory_non_increasing_across_seeds():
    x, _ = blob_data(n_per=30, k=3, dim=8, seed=5)
    trajectories = []
    for seed in range(5):
        cfg = PretrainConfig(epochs=8, learning_rate=1e-3, weight_decay=0.0,
                             init_std=0.05, batch_size=30, dropout=0.1, seed=seed)
        _, history = pretrain(x, cfg, hidden=(12,), latent_dim=4)
        trajectories.append(history)
    mean = np.mean(np.array(trajectories), axis=0)
    assert all(mean[i + 1] <= mean[i] + 1e-9 for i in range(len(mean) - 1))


def test_encode_is_pure_and_deterministic():
    params = init_params(8, hidden=(6,), latent_dim=3, dropout_rate=0.5,
                         std=0.1, seed=3)
    x = rng_for(0, 77).normal(size=(5, 8))
    z1 = encode(params, x)
    z2 = encode(params, x)
    np.testing.assert_array_equal(z1, z2)
    assert z1.shape == (5, 3)


def test_encode_matches_layer_by_layer_oracle():
    params = init_params(5, hidden=(4, 3), latent_dim=2, dropout_rate=0.0,
                         std=0.2, seed=4)
    x = rng_for(1, 78).normal(size=(6, 5))
    z = encode(params, x)
    cur = x
    for layer in params.encoder:
        pre = cur @ layer.W.T + layer.b
        cur = np.maximum(pre, 0.0) if layer.activation == "relu" else pre
    np.testing.assert_allclose(z, cur, atol=1e-12)


def test_gradients_on_shrunken_net():
    params = init_params(8, hidden=(4,), latent_dim=2, dropout_rate=0.0,
                         std=0.3, seed=5)
    x = rng_for(2, 79).normal(size=(6, 8))

    def f(flat):
        model = from_flat(params, flat)
        return loss_and_grads(model, x)

    assert grad_check(f, to_flat(params)) <= 1e-4


def test_gradients_with_corruption_masks_held_fixed():
    # The corruption stream is chosen so no relu pre-activation sits at the
    # kink (a fully dropped latent row pins decoder inputs to exactly zero,
    # where finite differences disagree with any one-sided slope).
    params = init_params(8, hidden=(4,), latent_dim=4, dropout_rate=0.1,
                         std=0.3, seed=6)
    x = rng_for(3, 80).normal(size=(5, 8))

    def f(flat):
        model = from_flat(params, flat)
        return loss_and_grads(model, x, rng_for(9, 74), train=True)

    assert grad_check(f, to_flat(params)) <= 1e-4


def test_latent_dims_must_agree():
    good = init_params(6, hidden=(5,), latent_dim=3, dropout_rate=0.0,
                       std=0.1, seed=0)
    with pytest.raises(NumericsError):
        AutoencoderParams(encoder=good.encoder, decoder=good.decoder[1:],
                          dropout=0.0)


def test_save_load_round_trip(tmp_path):
    params = init_params(7, hidden=(5, 4), latent_dim=3, dropout_rate=0.15,
                         std=0.1, seed=8)
    path = str(tmp_path / "ae.bin")
    save_autoencoder(path, params)
    loaded = load_autoencoder(path)
    assert loaded.dropout == params.dropout
    for mine, theirs in zip(params.encoder + params.decoder,
                            loaded.encoder + loaded.decoder):
        np.testing.assert_array_equal(mine.W, theirs.W)
        np.testing.assert_array_equal(mine.b, theirs.b)
        assert mine.activation == theirs.activation
    x = rng_for(4, 82).normal(size=(3, 7))
    np.testing.assert_array_equal(encode(params, x), encode(loaded, x))
