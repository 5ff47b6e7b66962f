"""Dense float64 numerics: linear layers, dropout, softmax/cross-entropy,
Adam with optional linear warm-up, and a finite-difference gradient checker.

All training math runs in 64-bit floats on plain numpy arrays; every source
of randomness is an explicit generator, so results are reproducible bit for
bit given the same seeds.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericsError

log = logging.getLogger(__name__)

# Named parameter collection, shared by every trainable model in the package.
Params = dict[str, np.ndarray]


def rng_for(seed: int, *tags: int) -> np.random.Generator:
    """Generator derived from a master seed plus stage tags.

    Stage tags keep independent random streams (init, shuffling, dropout, ...)
    decoupled, and make resumed runs bit-identical to uninterrupted ones: the
    stream is a pure function of (seed, tags), never of call order.
    """
    words = [int(seed) & 0xFFFFFFFF] + [int(t) & 0xFFFFFFFF for t in tags]
    return np.random.default_rng(words)


def as_dense2d(x) -> np.ndarray:
    """Coerce to a finite, C-contiguous float64 matrix."""
    a = np.ascontiguousarray(x, dtype=np.float64)
    if a.ndim != 2:
        raise NumericsError(f"expected a 2-D array, got shape {a.shape}")
    if not np.isfinite(a).all():
        raise NumericsError("matrix contains non-finite entries")
    return a


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


@dataclass
class LinearLayer:
    """Fully connected layer y = act(x W^T + b), weights stored out x in."""

    W: np.ndarray
    b: np.ndarray
    activation: str = "identity"

    def __post_init__(self):
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.ndim != 1 or self.b.shape[0] != self.W.shape[0]:
            raise NumericsError(
                f"inconsistent layer shapes W={self.W.shape} b={self.b.shape}"
            )
        if self.activation not in ("identity", "relu"):
            raise NumericsError(f"unknown activation {self.activation!r}")

    @property
    def in_dim(self) -> int:
        return self.W.shape[1]

    @property
    def out_dim(self) -> int:
        return self.W.shape[0]

    def copy(self) -> "LinearLayer":
        return LinearLayer(self.W.copy(), self.b.copy(), self.activation)


def gaussian_layer(in_dim: int, out_dim: int, std: float,
                   rng: np.random.Generator, activation: str = "identity") -> LinearLayer:
    """Layer with N(0, std) weights and zero bias."""
    return LinearLayer(rng.normal(0.0, std, size=(out_dim, in_dim)), np.zeros(out_dim), activation)


def linear_forward(layer: LinearLayer, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != layer.in_dim:
        raise NumericsError(f"input dim {x.shape[-1]} != layer in_dim {layer.in_dim}")
    pre = x @ layer.W.T + layer.b
    return relu(pre) if layer.activation == "relu" else pre


def forward_layers(layers: list[LinearLayer], x: np.ndarray) -> np.ndarray:
    """Inference pass through a layer stack."""
    for layer in layers:
        x = linear_forward(layer, x)
    return x


def forward_layers_cached(layers: list[LinearLayer], x: np.ndarray):
    """Forward pass keeping (input, pre-activation) per layer for backprop."""
    caches = []
    for layer in layers:
        if x.shape[-1] != layer.in_dim:
            raise NumericsError(f"input dim {x.shape[-1]} != layer in_dim {layer.in_dim}")
        pre = x @ layer.W.T + layer.b
        caches.append((x, pre))
        x = relu(pre) if layer.activation == "relu" else pre
    return x, caches


def backward_layers(layers: list[LinearLayer], caches, dy: np.ndarray):
    """Backprop through a cached stack; returns (dx, [(dW, db) per layer])."""
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(layers)  # type: ignore[list-item]
    for idx in range(len(layers) - 1, -1, -1):
        layer = layers[idx]
        x_in, pre = caches[idx]
        dpre = dy * (pre > 0.0) if layer.activation == "relu" else dy
        grads[idx] = (dpre.T @ x_in, dpre.sum(axis=0))
        dy = dpre @ layer.W
    return dy, grads


def dropout(x: np.ndarray, rate: float, rng: np.random.Generator | None = None,
            train: bool = True):
    """Inverted dropout; returns (output, mask) where mask folds in the
    1/(1-rate) survivor scaling so backward is a plain mask multiply.

    Inference mode (train=False) and rate 0 are the identity.
    """
    if not 0.0 <= rate < 1.0:
        raise NumericsError(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x, dtype=np.float64)
    if not train or rate == 0.0:
        return x, np.ones_like(x)
    if rng is None:
        raise NumericsError("training-mode dropout needs a generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise softmax, numerically stabilized."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def one_hot(labels: np.ndarray, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or (labels.size and labels.max() >= k):
        raise NumericsError("label out of range")
    out = np.zeros((labels.shape[0], k))
    out[np.arange(labels.shape[0]), labels] = 1.0
    return out


def softmax_xent(logits: np.ndarray, targets: np.ndarray):
    """Mean cross-entropy (natural log) against one-hot target rows.

    Returns (loss, dloss/dlogits) with gradient (softmax - target) / N.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.float64)
    if logits.shape != targets.shape:
        raise NumericsError(f"shape mismatch {logits.shape} vs {targets.shape}")
    row_sums = targets.sum(axis=1)
    if not (np.allclose(row_sums, 1.0) and np.isin(targets, (0.0, 1.0)).all()):
        raise NumericsError("targets must be one-hot rows")
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    loss = float(-(targets * log_p).sum() / n)
    grad = (np.exp(log_p) - targets) / n
    return loss, grad


@dataclass
class AdamState:
    """Adam with decoupled weight decay and optional linear warm-up.

    When warmup_fraction is set the effective learning rate ramps linearly
    from 0 over the first warmup_fraction * total_steps steps, then stays at
    the configured value.
    """

    lr: float
    weight_decay: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    warmup_fraction: float | None = None
    total_steps: int | None = None
    step: int = 0
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)

    def effective_lr(self, step: int) -> float:
        if self.warmup_fraction is None:
            return self.lr
        if self.total_steps is None:
            raise NumericsError("warmup_fraction requires total_steps")
        warmup_steps = max(1, int(round(self.warmup_fraction * self.total_steps)))
        return self.lr * min(1.0, step / warmup_steps)


def adam_step(state: AdamState, params: Params, grads: Params) -> Params:
    """One Adam update over a named parameter collection.

    Non-finite gradients are reported and the whole step is skipped (state
    untouched, parameters returned unchanged).
    """
    for name, g in grads.items():
        if not np.isfinite(g).all():
            log.warning("non-finite gradient for %r; skipping update step", name)
            return params
    state.step += 1
    lr = state.effective_lr(state.step)
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** state.step
    bias2 = 1.0 - b2 ** state.step
    out: Params = {}
    for name, p in params.items():
        g = grads[name]
        if p.shape != g.shape:
            raise NumericsError(f"gradient shape mismatch for {name!r}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m += (1.0 - b1) * (g - m)
        v += (1.0 - b2) * (g * g - v)
        update = (m / bias1) / (np.sqrt(v / bias2) + state.eps)
        new_p = p - lr * update
        if state.weight_decay:
            new_p = new_p - lr * state.weight_decay * p
        out[name] = new_p
    return out


def grad_check(f, params: Params, h: float = 1e-5) -> float:
    """Central finite differences against analytic gradients.

    f(params) must return (loss, grads); returns the max over coordinates of
    |g_fd - g_an| / max(1, |g_fd|, |g_an|).
    """
    if h <= 0:
        raise NumericsError("step size must be positive")
    loss0, analytic = f(params)
    if not np.isfinite(loss0):
        raise NumericsError("function non-finite at the evaluation point")
    worst = 0.0
    for name, p in params.items():
        g_an = np.asarray(analytic[name], dtype=np.float64)
        flat = p.reshape(-1)
        g_flat = g_an.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            lp, _ = f(params)
            flat[i] = orig - h
            lm, _ = f(params)
            flat[i] = orig
            if not (np.isfinite(lp) and np.isfinite(lm)):
                raise NumericsError("function non-finite at a perturbed point")
            g_fd = (lp - lm) / (2.0 * h)
            err = abs(g_fd - g_flat[i]) / max(1.0, abs(g_fd), abs(g_flat[i]))
            worst = max(worst, err)
    return worst
