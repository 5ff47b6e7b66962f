"""Flat key=value configuration shared by every command.

Precedence: command-line overrides > config file > built-in defaults, with
the SELFORE_SEED environment variable as a seed fallback when neither of the
first two set one. Unknown keys are rejected by name. The fully resolved
config is echoed to the run directory before any computation starts.

Value kinds are inferred from each default: int, float, bool, string, or a
comma-separated int list. `k_hat` is the one optional int ("none" clears it).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

from .errors import ConfigError

MODES = ("full", "no_classification", "no_adaptive_clustering")
ENCODERS = ("builtin", "precomputed")


@dataclass
class Settings:
    # Run-level
    seed: int = 0
    mode: str = "full"
    corpus: str = ""
    out: str = ""
    threads: int = 1
    # Clustering targets
    k: int = 10
    k_hat: int | None = None
    # Corpus handling
    max_length: int = 128
    train_fraction: float = 0.8
    strict_ingest: bool = False
    # Loop control
    max_loops: int = 20
    stop_threshold: float = 0.10
    aligned_delta: bool = False
    # Encoder backend
    encoder: str = "builtin"
    features: str = ""
    encoder_hidden: int = 64
    encoder_buckets: int = 50021
    encoder_embed_std: float = 1.0
    encoder_weight_std: float = 0.05
    # Autoencoder pretraining
    ae_hidden: tuple[int, ...] = (500, 500)
    ae_latent: int = 200
    ae_epochs: int = 20
    ae_lr: float = 1e-3
    ae_weight_decay: float = 1e-5
    ae_init_std: float = 0.01
    ae_batch: int = 256
    ae_dropout: float = 0.2
    # Adaptive clustering
    ac_epochs: int = 15
    ac_lr: float = 1e-3
    ac_batch: int = 256
    ac_alpha: float = 1.0
    ac_max_reseeds: int = 5
    ac_restarts: int = 10
    # Classifier
    clf_lr: float = 1e-5
    clf_warmup: float = 0.1
    clf_freeze_epochs: int = 3
    clf_epochs: int = 5
    clf_batch: int = 64
    clf_dropout: float = 0.1
    # Evaluation and naming
    swap_v_orientation: bool = False
    name_nmin: int = 1
    name_nmax: int = 4


HELP: dict[str, str] = {
    "seed": "master random seed (SELFORE_SEED env var is the fallback)",
    "mode": "full | no_classification | no_adaptive_clustering",
    "corpus": "corpus file path (JSON lines)",
    "out": "run directory",
    "threads": "advisory thread count for data-parallel sections",
    "k": "relation cluster count",
    "k_hat": "over-provisioned cluster count for sensitivity runs (optional)",
    "max_length": "maximum marked sentence length",
    "train_fraction": "train split fraction",
    "strict_ingest": "abort ingest on the first bad record",
    "max_loops": "hard cap on bootstrapping iterations",
    "stop_threshold": "stop when the label-change fraction drops below this",
    "aligned_delta": "measure label change after optimal cluster matching",
    "encoder": "builtin | precomputed",
    "features": "precomputed feature file (required for encoder=precomputed)",
    "encoder_hidden": "built-in encoder hidden size (feature dim is twice this)",
    "encoder_buckets": "hash bucket count for the built-in vocabulary",
    "encoder_embed_std": "built-in embedding init std",
    "encoder_weight_std": "built-in attention/feed-forward init std",
    "ae_hidden": "autoencoder hidden widths, comma-separated",
    "ae_latent": "autoencoder latent dimension",
    "ae_epochs": "autoencoder pretraining epochs",
    "ae_lr": "autoencoder learning rate",
    "ae_weight_decay": "autoencoder weight decay",
    "ae_init_std": "autoencoder weight init std",
    "ae_batch": "autoencoder batch size",
    "ae_dropout": "autoencoder corruption rate",
    "ac_epochs": "adaptive clustering epochs per loop iteration",
    "ac_lr": "adaptive clustering learning rate",
    "ac_batch": "adaptive clustering batch size",
    "ac_alpha": "Student-t degrees of freedom",
    "ac_max_reseeds": "max centroid re-selections after a bad first epoch",
    "ac_restarts": "k-means restarts for the cold centroid initialization",
    "clf_lr": "classifier learning rate",
    "clf_warmup": "classifier warm-up fraction",
    "clf_freeze_epochs": "epochs with the encoder held fixed",
    "clf_epochs": "classifier epochs per loop iteration",
    "clf_batch": "classifier batch size",
    "clf_dropout": "classifier input dropout",
    "swap_v_orientation": "swap homogeneity/completeness conditioning",
    "name_nmin": "minimum n-gram length for cluster names",
    "name_nmax": "maximum n-gram length for cluster names",
}

_FIELDS = {f.name: f for f in dataclasses.fields(Settings)}


def _parse_value(key: str, raw: str):
    field = _FIELDS[key]
    default = field.default
    raw = raw.strip()
    try:
        if key == "k_hat":
            return None if raw.lower() in ("none", "") else int(raw)
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("true", "1", "yes"):
                return True
            if low in ("false", "0", "no"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            return tuple(int(part) for part in raw.split(",") if part.strip())
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {exc}") from exc


def _format_value(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def load_config_file(path: str) -> dict[str, str]:
    """key=value lines; blank lines and # comments ignored."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    values: dict[str, str] = {}
    for line_no, line in enumerate(lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{line_no}: expected key=value, got {stripped!r}")
        key, _, value = stripped.partition("=")
        values[key.strip()] = value
    return values


def resolve(file_values: dict[str, str] | None = None,
            overrides: dict[str, str] | None = None,
            env_seed: str | None = None) -> Settings:
    """Merge defaults, config file, and overrides into validated Settings."""
    settings = Settings()
    seed_set = False
    for source, values in (("config file", file_values or {}),
                           ("override", overrides or {})):
        for key, raw in values.items():
            if key not in _FIELDS:
                raise ConfigError(f"unknown {source} key: {key!r}")
            setattr(settings, key, _parse_value(key, raw))
            if key == "seed":
                seed_set = True
    if not seed_set and env_seed is not None:
        try:
            settings.seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"bad SELFORE_SEED value: {env_seed!r}") from exc
    validate(settings)
    return settings


def validate(s: Settings) -> None:
    if s.mode not in MODES:
        raise ConfigError(f"mode must be one of {MODES}, got {s.mode!r}")
    if s.encoder not in ENCODERS:
        raise ConfigError(f"encoder must be one of {ENCODERS}, got {s.encoder!r}")
    if s.k < 2:
        raise ConfigError(f"k must be at least 2, got {s.k}")
    if s.k_hat is not None and s.k_hat < s.k:
        raise ConfigError(f"k_hat={s.k_hat} must be >= k={s.k}")
    if not 0.0 < s.stop_threshold <= 1.0:
        raise ConfigError(f"stop_threshold must be in (0,1], got {s.stop_threshold}")
    if s.max_loops < 1:
        raise ConfigError(f"max_loops must be positive, got {s.max_loops}")
    if not 0.0 < s.train_fraction < 1.0:
        raise ConfigError(f"train_fraction must be in (0,1), got {s.train_fraction}")
    if s.max_length < 5:
        raise ConfigError(f"max_length too small: {s.max_length}")
    if not 1 <= s.name_nmin <= s.name_nmax:
        raise ConfigError("need 1 <= name_nmin <= name_nmax")
    if s.threads < 1:
        raise ConfigError(f"threads must be positive, got {s.threads}")
    if s.ac_restarts < 1:
        raise ConfigError(f"ac_restarts must be positive, got {s.ac_restarts}")
    if not s.ae_hidden:
        raise ConfigError("ae_hidden must list at least one width")


def render_resolved(s: Settings) -> str:
    """config.resolved contents: every key, sorted, one per line."""
    lines = [f"{name}={_format_value(getattr(s, name))}"
             for name in sorted(_FIELDS)]
    return "\n".join(lines) + "\n"


def describe_keys() -> str:
    """Help text: one line per key with its default."""
    lines = []
    for name in sorted(_FIELDS):
        default = _format_value(getattr(Settings(), name))
        lines.append(f"  {name}={default}\n      {HELP[name]}")
    return "\n".join(lines)
