"""Adaptive clustering on autoencoder latents.

Centroids are initialized by k-means, soft assignments use a Student-t
kernel, and a frequency-normalized sharpened target distribution drives a KL
loss that trains both the latent map and the centroids. The target is
recomputed from the full dataset every epoch and treated as a constant during
differentiation. Pseudo-labels are per-row argmax of the target.

If the KL loss fails to decrease over the first epoch, centroids are
re-selected at random and training restarts from the pretrained latent map
(bounded number of retries, then best attempt so far wins).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .autoencoder import AutoencoderParams
from .errors import ConfigError, NumericsError
from .numerics import (AdamState, LinearLayer, Params, adam_step, as_dense2d,
                       backward_layers, forward_layers, forward_layers_cached,
                       rng_for)

log = logging.getLogger(__name__)

_KMEANS_TAG = 402
_RESEED_TAG = 403
_SHUFFLE_TAG = 404


def kmeans(points: np.ndarray, k: int, rng: np.random.Generator,
           max_iters: int = 100,
           init: np.ndarray | None = None,
           restarts: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Lloyd's algorithm; returns (labels, centroids).

    Seeding is k-means++ unless init supplies starting centroids (warm
    start). With restarts > 1 the cold start is repeated that many times,
    drawing fresh seeds from the same generator, and the attempt with the
    lowest objective wins; a warm start always runs once. Empty clusters are
    re-seeded to the point farthest from its assigned centroid. When all
    points coincide the seeding degenerates to duplicated centroids, which
    is reported but not fatal.
    """
    x = as_dense2d(points)
    n, d = x.shape
    if not 1 <= k <= n:
        raise NumericsError(f"need 1 <= k <= n, got k={k}, n={n}")
    if restarts < 1:
        raise NumericsError(f"restarts must be positive, got {restarts}")

    if init is None and restarts > 1:
        best: tuple[float, np.ndarray, np.ndarray] | None = None
        for _ in range(restarts):
            labels, centroids = kmeans(x, k, rng, max_iters)
            objective = kmeans_objective(x, centroids)
            if best is None or objective < best[0]:
                best = (objective, labels, centroids)
        return best[1], best[2]

    if init is not None:
        init = as_dense2d(init)
        if init.shape != (k, d):
            raise NumericsError(f"warm-start centroids {init.shape} != ({k},{d})")
        centroids = init.copy()
    else:
        # k-means++ seeding.
        centroids = np.empty((k, d))
        centroids[0] = x[rng.integers(n)]
        d2 = ((x - centroids[0]) ** 2).sum(axis=1)
        for i in range(1, k):
            total = d2.sum()
            if total == 0.0:
                log.warning("all remaining seeding mass is zero; duplicating centroids")
                centroids[i] = x[rng.integers(n)]
                continue
            centroids[i] = x[rng.choice(n, p=d2 / total)]
            d2 = np.minimum(d2, ((x - centroids[i]) ** 2).sum(axis=1))

    def assign(c):
        dist = ((x[:, None, :] - c[None, :, :]) ** 2).sum(axis=2)
        return dist.argmin(axis=1), dist

    prev = None
    for _ in range(max_iters):
        labels, dist = assign(centroids)
        nearest = dist[np.arange(n), labels]
        used = np.zeros(n, dtype=bool)
        for empty in np.setdiff1d(np.arange(k), labels):
            candidates = np.where(~used)[0]
            far = candidates[nearest[candidates].argmax()]
            centroids[empty] = x[far]
            used[far] = True
            labels, dist = assign(centroids)
            nearest = dist[np.arange(n), labels]
        if prev is not None and np.array_equal(labels, prev):
            break
        for j in range(k):
            members = labels == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
        prev = labels
    labels, _ = assign(centroids)
    return labels, centroids


def kmeans_objective(points: np.ndarray, centroids: np.ndarray) -> float:
    x = as_dense2d(points)
    dist = ((x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float(dist.min(axis=1).sum())


@dataclass
class ClusterModel:
    """Latent map (encoder half of the autoencoder) plus cluster centroids."""

    encoder: list[LinearLayer]
    centroids: np.ndarray
    alpha: float = 1.0

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=np.float64)
        if self.centroids.ndim != 2:
            raise NumericsError(f"centroids must be 2-D, got {self.centroids.shape}")
        if self.centroids.shape[1] != self.encoder[-1].out_dim:
            raise NumericsError("centroid dim != latent dim")
        if not np.isfinite(self.centroids).all():
            raise NumericsError("non-finite centroids")
        if self.alpha <= 0:
            raise NumericsError(f"alpha must be positive, got {self.alpha}")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    def latent(self, features: np.ndarray) -> np.ndarray:
        return forward_layers(self.encoder, as_dense2d(features))

    def copy(self) -> "ClusterModel":
        return ClusterModel([l.copy() for l in self.encoder],
                            self.centroids.copy(), self.alpha)


def soft_assign(z: np.ndarray, centroids: np.ndarray, alpha: float = 1.0) -> np.ndarray:
    """Student-t soft assignment rows q_n over centroids."""
    z = as_dense2d(z)
    d2 = ((z[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    kernel = (1.0 + d2 / alpha) ** (-(alpha + 1.0) / 2.0)
    return kernel / kernel.sum(axis=1, keepdims=True)


def target_distribution(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sharpened, frequency-normalized target P and soft frequencies f.

    Always computed from the full assignment matrix, never per batch.
    """
    q = as_dense2d(q)
    f = q.sum(axis=0)
    if (f <= 0.0).any():
        raise NumericsError("zero soft cluster frequency")
    tiny = f < 1e-6 * q.shape[0]
    if tiny.any():
        log.warning("degenerate soft frequencies for clusters %s",
                    np.where(tiny)[0].tolist())
    weight = q * q / f
    return weight / weight.sum(axis=1, keepdims=True), f


def kl_loss(p: np.ndarray, q: np.ndarray) -> float:
    """Sum over samples and clusters of p ln(p/q), with 0 ln 0 = 0."""
    p = as_dense2d(p)
    q = as_dense2d(q)
    if p.shape != q.shape:
        raise NumericsError(f"shape mismatch {p.shape} vs {q.shape}")
    mask = p > 0.0
    return float((p[mask] * np.log(p[mask] / q[mask])).sum())


def kl_grads(p: np.ndarray, z: np.ndarray, centroids: np.ndarray,
             alpha: float = 1.0) -> tuple[float, np.ndarray, np.ndarray]:
    """KL loss plus analytic gradients w.r.t. latents and centroids.

    The target rows p are constants. With u_nj = (1 + d_nj/alpha)^-1:
        dL/dz_n  = (alpha+1)/alpha * sum_j u_nj (p_nj - q_nj) (z_n - mu_j)
        dL/dmu_j = -(alpha+1)/alpha * sum_n u_nj (p_nj - q_nj) (z_n - mu_j)
    """
    z = as_dense2d(z)
    centroids = as_dense2d(centroids)
    diff = z[:, None, :] - centroids[None, :, :]
    d2 = (diff ** 2).sum(axis=2)
    u = 1.0 / (1.0 + d2 / alpha)
    kernel = u ** ((alpha + 1.0) / 2.0)
    q = kernel / kernel.sum(axis=1, keepdims=True)
    loss = kl_loss(p, q)
    coeff = ((alpha + 1.0) / alpha) * u * (p - q)
    dz = (coeff[:, :, None] * diff).sum(axis=1)
    dmu = -(coeff[:, :, None] * diff).sum(axis=0)
    return loss, dz, dmu


def pseudo_labels(p: np.ndarray) -> np.ndarray:
    """Per-row argmax of the target distribution; ties pick the lowest index."""
    return as_dense2d(p).argmax(axis=1)


def sharp_fraction(q: np.ndarray, threshold: float = 0.9) -> float:
    """Fraction of rows whose largest soft assignment reaches the threshold."""
    return float((as_dense2d(q).max(axis=1) >= threshold).mean())


@dataclass
class AdaptiveConfig:
    k: int = 10
    alpha: float = 1.0
    epochs: int = 15
    learning_rate: float = 1e-3
    batch_size: int = 256
    seed: int = 0
    max_reseeds: int = 5
    restarts: int = 1

    def __post_init__(self):
        if self.k < 1 or self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("k, epochs and batch_size must be positive")
        if self.learning_rate <= 0 or self.alpha <= 0:
            raise ConfigError("learning_rate and alpha must be positive")
        if self.max_reseeds < 0:
            raise ConfigError("max_reseeds must be non-negative")
        if self.restarts < 1:
            raise ConfigError("restarts must be positive")


@dataclass
class EpochDiag:
    epoch: int
    loss_start: float
    loss_end: float
    label_change: float
    f_min: float
    f_max: float


@dataclass
class FitResult:
    model: ClusterModel
    labels: np.ndarray
    diagnostics: list[EpochDiag]
    reseeds: int = 0


def _model_flat(model: ClusterModel) -> Params:
    flat: Params = {f"enc{i}.{t}": getattr(l, t)
                    for i, l in enumerate(model.encoder) for t in ("W", "b")}
    flat["mu"] = model.centroids
    return flat


def _model_from_flat(template: ClusterModel, flat: Params) -> ClusterModel:
    layers = [LinearLayer(flat[f"enc{i}.W"], flat[f"enc{i}.b"], l.activation)
              for i, l in enumerate(template.encoder)]
    return ClusterModel(layers, flat["mu"], template.alpha)


def _train_epochs(model: ClusterModel, h: np.ndarray, cfg: AdaptiveConfig,
                  first_epoch: int, n_epochs: int, labels_prev: np.ndarray,
                  check_first: bool) -> tuple[ClusterModel, np.ndarray, list[EpochDiag], bool]:
    """Run n_epochs of target refresh + minibatch KL steps.

    Returns (model, labels, diagnostics, first_epoch_decreased). When
    check_first is set the caller uses the flag to apply the centroid
    re-selection rule.
    """
    n = h.shape[0]
    flat = _model_flat(model)
    adam = AdamState(lr=cfg.learning_rate)
    diags: list[EpochDiag] = []
    first_ok = True
    for epoch in range(first_epoch, first_epoch + n_epochs):
        current = _model_from_flat(model, flat)
        z = current.latent(h)
        q = soft_assign(z, flat["mu"], cfg.alpha)
        p, f = target_distribution(q)
        loss_start = kl_loss(p, q)
        labels = pseudo_labels(p)
        order = rng_for(cfg.seed, _SHUFFLE_TAG, epoch).permutation(n)
        batch = min(cfg.batch_size, n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            current = _model_from_flat(model, flat)
            z_b, caches = forward_layers_cached(current.encoder, h[idx])
            _, dz, dmu = kl_grads(p[idx], z_b, flat["mu"], cfg.alpha)
            _, layer_grads = backward_layers(current.encoder, caches, dz)
            grads: Params = {"mu": dmu}
            for i, (dW, db) in enumerate(layer_grads):
                grads[f"enc{i}.W"] = dW
                grads[f"enc{i}.b"] = db
            flat = adam_step(adam, flat, grads)
        current = _model_from_flat(model, flat)
        q_end = soft_assign(current.latent(h), flat["mu"], cfg.alpha)
        loss_end = kl_loss(p, q_end)
        if not np.isfinite(loss_end):
            raise NumericsError(f"non-finite clustering loss at epoch {epoch}")
        change = float(np.mean(labels != labels_prev))
        diags.append(EpochDiag(epoch, loss_start, loss_end, change,
                               float(f.min()), float(f.max())))
        labels_prev = labels
        if check_first and epoch == first_epoch and loss_end >= loss_start:
            first_ok = False
            break
    return _model_from_flat(model, flat), labels_prev, diags, first_ok


def fit(features: np.ndarray, pretrained: AutoencoderParams, cfg: AdaptiveConfig,
        warm: ClusterModel | None = None) -> FitResult:
    """Adaptive clustering over encoded features.

    Cold start: centroids from k-means on the pretrained latents, with the
    re-selection rule applied after the first epoch (restart with random
    centroids, bounded retries, best attempt kept). Warm start: continue from
    an existing model (its latent map and centroids), no re-selection.
    """
    h = as_dense2d(features)
    n = h.shape[0]
    if n < cfg.k:
        raise NumericsError(f"need at least k={cfg.k} samples, got {n}")

    if warm is not None:
        if warm.k != cfg.k:
            raise ConfigError(f"warm model has k={warm.k}, config wants {cfg.k}")
        model, labels, diags, _ = _train_epochs(
            warm.copy(), h, cfg, first_epoch=1, n_epochs=cfg.epochs,
            labels_prev=_final_labels(warm, h, cfg.alpha), check_first=False)
        labels = _final_labels(model, h, cfg.alpha)
        return FitResult(model, labels, diags, reseeds=0)

    encoder0 = [l.copy() for l in pretrained.encoder]
    z0 = forward_layers(encoder0, h)
    km_labels, km_centroids = kmeans(z0, cfg.k, rng_for(cfg.seed, _KMEANS_TAG),
                                     restarts=cfg.restarts)

    best: tuple[float, ClusterModel, np.ndarray, list[EpochDiag]] | None = None
    for attempt in range(cfg.max_reseeds + 1):
        if attempt == 0:
            centroids = km_centroids
        else:
            log.warning("clustering loss did not decrease in epoch 1; "
                        "re-selecting centroids (attempt %d)", attempt)
            pick = rng_for(cfg.seed, _RESEED_TAG, attempt).choice(n, cfg.k, replace=False)
            centroids = z0[pick].copy()
        model = ClusterModel([l.copy() for l in pretrained.encoder],
                             centroids.copy(), cfg.alpha)
        model, labels, diags, first_ok = _train_epochs(
            model, h, cfg, first_epoch=1, n_epochs=cfg.epochs,
            labels_prev=km_labels, check_first=True)
        if first_ok:
            labels = _final_labels(model, h, cfg.alpha)
            return FitResult(model, labels, diags, reseeds=attempt)
        if best is None or diags[-1].loss_end < best[0]:
            best = (diags[-1].loss_end, model, labels, diags)

    log.warning("re-selection budget exhausted; continuing with best attempt")
    _, model, labels, diags = best
    if cfg.epochs > 1:
        model, labels, more, _ = _train_epochs(model, h, cfg, first_epoch=2,
                                               n_epochs=cfg.epochs - 1,
                                               labels_prev=labels, check_first=False)
        diags = diags + more
    labels = _final_labels(model, h, cfg.alpha)
    return FitResult(model, labels, diags, reseeds=cfg.max_reseeds)


def _final_labels(model: ClusterModel, h: np.ndarray, alpha: float) -> np.ndarray:
    q = soft_assign(model.latent(h), model.centroids, alpha)
    p, _ = target_distribution(q)
    return pseudo_labels(p)
