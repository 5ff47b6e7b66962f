"""Command-line entry point.

Commands: ingest, synth, pretrain-ae, run, eval, names, dump-embeddings.
Configuration is flat key=value with precedence command line > config file >
defaults; SELFORE_SEED is the seed fallback. Exit codes: 0 success, 1 usage
or configuration problem, 2 data problem, 3 numeric failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys

import numpy as np

from . import autoencoder as ae_mod
from . import pipeline as pipe_mod
from . import synth as synth_mod
from .config import Settings, describe_keys, load_config_file, resolve
from .corpus import Corpus, ingest
from .encoders import BuiltinEncoder, encode_corpus, load_features
from .errors import ConfigError, DataError, NumericsError, SelforeError
from .metrics import evaluate, format_metrics
from .numerics import LinearLayer, forward_layers
from .surface import extract_names, format_names
from .tensorio import MAGIC_PIPELINE, load_tensors, save_features

log = logging.getLogger(__name__)


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as ConfigError (exit code 1)."""

    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="selfore",
                     description="Self-supervised relation clustering pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    common_epilog = "config keys and defaults:\n" + describe_keys()

    p = sub.add_parser("ingest", help="validate a corpus file and print stats")
    p.add_argument("--corpus", required=True)
    p.add_argument("--max-length", type=int, default=128)
    p.add_argument("--strict", action="store_true")

    p = sub.add_parser("synth", help="generate a deterministic templated corpus")
    p.add_argument("--relations", type=int, required=True)
    p.add_argument("--per-relation", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    for name, help_text in (("run", "execute the bootstrapping pipeline"),
                            ("pretrain-ae", "pretrain the autoencoder only")):
        p = sub.add_parser(name, help=help_text, epilog=common_epilog,
                           formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="key=value config file")
        p.add_argument("--corpus", help="corpus path (same as corpus=...)")
        p.add_argument("--out", help="output path (same as out=...)")
        p.add_argument("--mode", help="pipeline mode (same as mode=...)")
        p.add_argument("--seed", help="random seed (same as seed=...)")
        p.add_argument("--k", help="cluster count (same as k=...)")
        p.add_argument("--k-hat", help="over-cluster count (same as k_hat=...)")
        if name == "run":
            p.add_argument("--resume", action="store_true",
                           help="continue from the latest checkpoint in out/")
        p.add_argument("overrides", nargs="*", metavar="key=value",
                       help="config overrides, highest precedence")

    p = sub.add_parser("eval", help="score a labels file against corpus gold")
    p.add_argument("--labels", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--max-length", type=int, default=128)
    p.add_argument("--out", help="report file (stdout when omitted)")
    p.add_argument("--swap-v-orientation", action="store_true")

    p = sub.add_parser("names", help="extract per-cluster surface names")
    p.add_argument("--labels", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--max-length", type=int, default=128)
    p.add_argument("--nmin", type=int, default=1)
    p.add_argument("--nmax", type=int, default=4)
    p.add_argument("--out", help="names file (stdout when omitted)")

    p = sub.add_parser("dump-embeddings",
                       help="write latent vectors for external plotting")
    p.add_argument("--state", required=True, help="pipeline state checkpoint")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--features", help="feature file for precomputed runs")
    p.add_argument("--layer", choices=("pretrain", "cluster"), default="pretrain",
                   help="latent map: pretrained autoencoder or adapted cluster")
    return parser


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    out: dict[str, str] = {}
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must be key=value, got {pair!r}")
        key, _, value = pair.partition("=")
        out[key.strip()] = value
    return out


def _settings_from_args(args) -> Settings:
    file_values = load_config_file(args.config) if args.config else {}
    overrides = _parse_overrides(args.overrides)
    for flag, key in (("corpus", "corpus"), ("out", "out"), ("mode", "mode"),
                      ("seed", "seed"), ("k", "k"), ("k_hat", "k_hat")):
        value = getattr(args, flag)
        if value is not None and value != "":
            overrides.setdefault(key, value)
    return resolve(file_values, overrides, os.environ.get("SELFORE_SEED"))


def _read_labels_file(path: str, corpus: Corpus) -> np.ndarray:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataError(f"{path}: {exc}") from exc
    table: dict[str, int] = {}
    for line_no, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise DataError(f"{path}:{line_no}: expected id<TAB>label")
        try:
            table[parts[0]] = int(parts[1])
        except ValueError as exc:
            raise DataError(f"{path}:{line_no}: label must be an integer") from exc
    missing = [s.origin_id for s in corpus.sentences if s.origin_id not in table]
    if missing:
        raise DataError(f"{path}: missing labels for {len(missing)} ids "
                        f"(first: {missing[0]})")
    extra = set(table) - {s.origin_id for s in corpus.sentences}
    if extra:
        raise DataError(f"{path}: {len(extra)} labels for unknown ids "
                        f"(first: {sorted(extra)[0]})")
    return np.array([table[s.origin_id] for s in corpus.sentences])


def _cmd_ingest(args) -> int:
    corpus = ingest(args.corpus, args.max_length, strict=args.strict)
    labels = sorted(corpus.label_vocabulary) if corpus.label_vocabulary else []
    print(f"sentences={len(corpus)}")
    print(f"rejected={len(corpus.rejected)}")
    print(f"gold_labels={len(labels)}")
    for diag in corpus.rejected:
        print(f"rejected: {diag}", file=sys.stderr)
    return 0


def _cmd_synth(args) -> int:
    count = synth_mod.generate_file(args.out, args.relations, args.per_relation,
                                    args.seed)
    print(f"wrote {count} records to {args.out}")
    return 0


def _cmd_run(args) -> int:
    settings = _settings_from_args(args)
    if not settings.corpus:
        raise ConfigError("run needs corpus=<path> (or --corpus)")
    if not settings.out:
        raise ConfigError("run needs out=<directory> (or --out)")
    corpus = ingest(settings.corpus, settings.max_length,
                    strict=settings.strict_ingest,
                    train_fraction=settings.train_fraction)
    if settings.encoder == "precomputed":
        print("note: precomputed features are read-only; the classification "
              "step trains the classifier only", file=sys.stderr)
    if args.resume:
        result = pipe_mod.resume_run(corpus, settings, settings.out)
    else:
        result = pipe_mod.run_pipeline(corpus, settings, settings.out)
    print(f"run directory: {result.run_dir}")
    print(f"iterations={result.iterations} converged={str(result.converged).lower()}")
    last = result.history[-1] if result.history else None
    if last is not None and last.report is not None:
        print(f"b3_f1={last.report.b3_f1:.6f} ari={last.report.ari:.6f}")
    return 0


def _cmd_pretrain_ae(args) -> int:
    settings = _settings_from_args(args)
    if not settings.corpus:
        raise ConfigError("pretrain-ae needs corpus=<path> (or --corpus)")
    if not settings.out:
        raise ConfigError("pretrain-ae needs out=<file> (or --out)")
    corpus = ingest(settings.corpus, settings.max_length,
                    strict=settings.strict_ingest,
                    train_fraction=settings.train_fraction)
    if settings.encoder == "precomputed":
        if not settings.features:
            raise ConfigError("encoder=precomputed requires features=<path>")
        store = load_features(settings.features, corpus)
    else:
        from .encoders import EncoderConfig

        enc = BuiltinEncoder.create(EncoderConfig(
            hidden=settings.encoder_hidden, buckets=settings.encoder_buckets,
            embed_std=settings.encoder_embed_std,
            weight_std=settings.encoder_weight_std, seed=settings.seed))
        store = encode_corpus(enc, corpus, settings.max_length)
    cfg = ae_mod.PretrainConfig(epochs=settings.ae_epochs,
                                learning_rate=settings.ae_lr,
                                weight_decay=settings.ae_weight_decay,
                                init_std=settings.ae_init_std,
                                batch_size=settings.ae_batch,
                                dropout=settings.ae_dropout,
                                seed=settings.seed)
    centered = store.matrix - store.matrix.mean(axis=0)
    params, history = ae_mod.pretrain(centered, cfg,
                                      hidden=settings.ae_hidden,
                                      latent_dim=settings.ae_latent)
    ae_mod.save_autoencoder(settings.out, params)
    print(f"pretrained: loss {history[0]:.6f} -> {history[-1]:.6f}")
    print(f"checkpoint: {settings.out}")
    return 0


def _cmd_eval(args) -> int:
    corpus = ingest(args.corpus, args.max_length)
    gold = corpus.gold_labels()
    if any(g is None for g in gold):
        raise DataError(f"{args.corpus}: every sentence needs a gold relation")
    labels = _read_labels_file(args.labels, corpus)
    report = evaluate(labels, np.array(gold), args.swap_v_orientation)
    text = format_metrics(report.as_dict())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    print(f"majority_mapped_accuracy={report.majority_accuracy:.6f}")
    return 0


def _cmd_names(args) -> int:
    corpus = ingest(args.corpus, args.max_length)
    labels = _read_labels_file(args.labels, corpus)
    names = extract_names(corpus, labels, args.nmin, args.nmax)
    text = format_names(names)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def _cmd_dump_embeddings(args) -> int:
    tensors, meta = load_tensors(args.state, MAGIC_PIPELINE)
    corpus = ingest(args.corpus, int(meta["max_length"]))
    if meta["encoder_backend"] == "builtin":
        enc = BuiltinEncoder(int(meta["encoder_hidden"]),
                             int(meta["encoder_buckets"]),
                             {name: tensors[f"encoder.{name}"]
                              for name in ("emb", "wq", "wk", "wv", "wf", "bf")})
        store = encode_corpus(enc, corpus, int(meta["max_length"]))
    else:
        if not args.features:
            raise ConfigError("precomputed run: pass --features")
        store = load_features(args.features, corpus)

    if args.layer == "pretrain":
        prefix, activations = "ae.enc", meta["ae_encoder_activations"]
    else:
        prefix, activations = "cluster.enc", meta["cluster_activations"]
    layers = [LinearLayer(tensors[f"{prefix}{i}.W"], tensors[f"{prefix}{i}.b"], act)
              for i, act in enumerate(activations)]
    z = forward_layers(layers, store.matrix - tensors["feature.center"])
    save_features(args.out, z.astype(np.float32), store.ids)
    print(f"wrote {z.shape[0]} x {z.shape[1]} latents to {args.out}")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "synth": _cmd_synth,
    "run": _cmd_run,
    "pretrain-ae": _cmd_pretrain_ae,
    "eval": _cmd_eval,
    "names": _cmd_names,
    "dump-embeddings": _cmd_dump_embeddings,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericsError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except SelforeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())
