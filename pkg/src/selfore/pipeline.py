"""Bootstrapping loop: encode, cluster, pseudo-label, classify, re-encode.

An initial clustering pass produces labels before the loop. Each loop
iteration then trains the classifier on the previous labels (refining the
encoder once its freeze window has passed), re-encodes every sentence, and
re-clusters warm-started from the previous model; the loop stops when the
fraction of changed labels drops below the stop threshold, or at max_loops.

Ablation modes: no_classification stops after the initial clustering (the
encoder is never touched); no_adaptive_clustering swaps the soft-assignment
training for plain k-means hard labels on the pretrained latent map, with
centroids warm-started across iterations.

Every iteration checkpoints its full state into the run directory; a resumed
run continues from the last checkpoint and reproduces the uninterrupted run
bit for bit, because all randomness is derived from (seed, stage, iteration)
rather than from mutable generator state.
"""
from __future__ import annotations

import hashlib
import logging
import os
from dataclasses import dataclass, field

import numpy as np

from . import autoencoder as ae_mod
from . import classifier as clf_mod
from . import clustering
from .clustering import AdaptiveConfig, ClusterModel, kmeans, kmeans_objective
from .config import Settings, render_resolved
from .corpus import Corpus
from .encoders import (BuiltinEncoder, EncoderConfig, FeatureStore,
                       encode_corpus, load_features)
from .errors import ConfigError, DataError, NumericsError
from .metrics import EvalReport, evaluate, format_metrics, merge_clusters
from .numerics import LinearLayer, rng_for
from .tensorio import MAGIC_PIPELINE, load_tensors, save_tensors

log = logging.getLogger(__name__)

_HARD_KMEANS_TAG = 801
_AC_SEED_TAG = 802
_CLF_SEED_TAG = 803

STATE_FILE = "state.bin"
REPORT_FILE = "report.final"
LABELS_FILE = "labels.tsv"
CONFIG_FILE = "config.resolved"
AE_FILE = "autoencoder.bin"


def _child_seed(seed: int, tag: int, iteration: int) -> int:
    return int(rng_for(seed, tag, iteration).integers(0, 2 ** 31 - 1))


def config_hash(settings: Settings) -> str:
    return hashlib.sha256(render_resolved(settings).encode("utf-8")).hexdigest()[:16]


def label_delta(prev: np.ndarray, curr: np.ndarray, aligned: bool = False) -> float:
    """Fraction of positions whose label changed.

    Raw cluster ids by default; ids are stable across iterations because the
    centroid set is warm-started. aligned=True first matches current ids to
    previous ids by maximum overlap, making the measure relabel-invariant.
    """
    prev = np.asarray(prev)
    curr = np.asarray(curr)
    if prev.shape != curr.shape or prev.ndim != 1:
        raise DataError(f"label shapes differ: {prev.shape} vs {curr.shape}")
    if aligned:
        from scipy.optimize import linear_sum_assignment

        ids = int(max(prev.max(), curr.max())) + 1
        overlap = np.zeros((ids, ids))
        np.add.at(overlap, (curr, prev), 1.0)
        rows, cols = linear_sum_assignment(-overlap)
        remap = np.arange(ids)
        remap[rows] = cols
        curr = remap[curr]
    return float(np.mean(prev != curr))


@dataclass
class IterationRecord:
    iteration: int
    labels: np.ndarray
    delta: float | None = None
    report: EvalReport | None = None
    merged_report: EvalReport | None = None
    reseeds: int = 0


@dataclass
class RunResult:
    labels: np.ndarray
    history: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    run_dir: str = ""


class _Runner:
    """Mutable state for one pipeline run (fresh or resumed)."""

    def __init__(self, corpus: Corpus, settings: Settings, run_dir: str):
        self.corpus = corpus
        self.s = settings
        self.run_dir = run_dir
        self.k_used = settings.k_hat if settings.k_hat is not None else settings.k
        self.hash = config_hash(settings)
        self.encoder: BuiltinEncoder | None = None
        self.fixed_store: FeatureStore | None = None
        self.store: FeatureStore | None = None
        # Fixed feature shift, frozen at pretraining time: latent stages see
        # features minus this vector so autoencoder capacity is spent on
        # variation between sentences rather than on a constant offset.
        self.center: np.ndarray | None = None
        self.ae: ae_mod.AutoencoderParams | None = None
        self.cluster: ClusterModel | None = None
        self.clf: clf_mod.ClassifierParams | None = None
        self.labels: np.ndarray | None = None
        self.iteration = -1
        self.history: list[IterationRecord] = []
        # Invariant bookkeeping: clustering must always consume features from
        # the latest encoder parameters.
        self.encoder_version = 0
        self.store_version = -1

    # -- backends ---------------------------------------------------------

    def init_backend(self) -> None:
        if self.s.encoder == "builtin":
            cfg = EncoderConfig(hidden=self.s.encoder_hidden,
                                buckets=self.s.encoder_buckets,
                                embed_std=self.s.encoder_embed_std,
                                weight_std=self.s.encoder_weight_std,
                                seed=self.s.seed)
            self.encoder = BuiltinEncoder.create(cfg)
        else:
            if not self.s.features:
                raise ConfigError("encoder=precomputed requires features=<path>")
            self.fixed_store = load_features(self.s.features, self.corpus)
            log.warning("precomputed features: step 3 degrades to "
                        "classifier-only training (no feature refinement)")

    def encode_all(self) -> None:
        if self.encoder is not None:
            self.store = encode_corpus(self.encoder, self.corpus, self.s.max_length)
        else:
            self.store = self.fixed_store
        self.store_version = self.encoder_version

    # -- stages -----------------------------------------------------------

    def pretrain(self) -> None:
        cfg = ae_mod.PretrainConfig(epochs=self.s.ae_epochs,
                                    learning_rate=self.s.ae_lr,
                                    weight_decay=self.s.ae_weight_decay,
                                    init_std=self.s.ae_init_std,
                                    batch_size=self.s.ae_batch,
                                    dropout=self.s.ae_dropout,
                                    seed=self.s.seed)
        self.center = self.store.matrix.mean(axis=0)
        self.ae, history = ae_mod.pretrain(self.centered(), cfg,
                                           hidden=self.s.ae_hidden,
                                           latent_dim=self.s.ae_latent)
        ae_mod.save_autoencoder(os.path.join(self.run_dir, AE_FILE), self.ae)
        log.info("autoencoder pretrained: loss %.6f -> %.6f",
                 history[0], history[-1])

    def centered(self) -> np.ndarray:
        """Current features shifted by the frozen pretraining mean."""
        return self.store.matrix - self.center

    def cluster_step(self, iteration: int) -> tuple[np.ndarray, list[str], int]:
        """Run step 2; returns (labels, diagnostic lines, reseed count)."""
        if self.store_version != self.encoder_version:
            raise NumericsError("clustering asked to consume stale features")
        ac_seed = _child_seed(self.s.seed, _AC_SEED_TAG, iteration)
        if self.s.mode == "no_adaptive_clustering":
            z = self.cluster.latent(self.centered()) if self.cluster is not None \
                else ae_mod.encode(self.ae, self.centered())
            init = self.cluster.centroids if self.cluster is not None else None
            labels, centroids = kmeans(z, self.k_used,
                                       rng_for(ac_seed, _HARD_KMEANS_TAG),
                                       init=init,
                                       restarts=self.s.ac_restarts)
            encoder_half = self.cluster.encoder if self.cluster is not None \
                else [l.copy() for l in self.ae.encoder]
            self.cluster = ClusterModel(encoder_half, centroids, self.s.ac_alpha)
            lines = [f"kmeans_objective={kmeans_objective(z, centroids):.6f}"]
            return labels, lines, 0
        cfg = AdaptiveConfig(k=self.k_used, alpha=self.s.ac_alpha,
                             epochs=self.s.ac_epochs,
                             learning_rate=self.s.ac_lr,
                             batch_size=self.s.ac_batch,
                             seed=ac_seed,
                             max_reseeds=self.s.ac_max_reseeds,
                             restarts=self.s.ac_restarts)
        # Cold start (with the re-selection rule) only on the very first
        # clustering; loop iterations warm-start model and centroids.
        result = clustering.fit(self.centered(), self.ae, cfg, warm=self.cluster)
        self.cluster = result.model
        lines = [f"epoch={d.epoch} loss_start={d.loss_start:.6f} "
                 f"loss_end={d.loss_end:.6f} label_change={d.label_change:.6f} "
                 f"f_min={d.f_min:.6f} f_max={d.f_max:.6f}"
                 for d in result.diagnostics]
        return result.labels, lines, result.reseeds

    def classify_step(self, iteration: int, labels: np.ndarray) -> list[str]:
        """Run step 3; trains the head (and encoder, builtin mode)."""
        sched = clf_mod.TrainSchedule(learning_rate=self.s.clf_lr,
                                      warmup_fraction=self.s.clf_warmup,
                                      encoder_freeze_epochs=self.s.clf_freeze_epochs,
                                      epochs=self.s.clf_epochs,
                                      batch_size=self.s.clf_batch,
                                      seed=_child_seed(self.s.seed, _CLF_SEED_TAG,
                                                       iteration))
        if self.clf is None:
            self.clf = clf_mod.ClassifierParams.create(self.store.dim, self.k_used,
                                                       self.s.clf_dropout)
        if self.encoder is not None:
            result, self.encoder = clf_mod.train_builtin(
                self.clf, self.encoder, list(self.corpus.sentences), labels,
                sched, self.s.max_length)
            self.encoder_version += 1
        else:
            result = clf_mod.train_precomputed(self.clf, self.store.matrix,
                                               labels, sched)
        self.clf = result.params
        lines = [f"clf_epoch={i} loss={loss:.6f}"
                 for i, loss in enumerate(result.epoch_losses)]
        lines.append(f"clf_accuracy={result.final_accuracy:.6f}")
        return lines

    # -- evaluation and artifacts ------------------------------------------

    def evaluate_labels(self, labels: np.ndarray,
                        centroids: np.ndarray | None = None
                        ) -> tuple[EvalReport | None, EvalReport | None]:
        gold = self.corpus.gold_labels()
        has_gold = np.array([g is not None for g in gold])
        if not has_gold.any():
            return None, None
        gold_arr = np.array([g for g, keep in zip(gold, has_gold) if keep])
        pred = labels[has_gold]
        report = evaluate(pred, gold_arr, self.s.swap_v_orientation)
        merged = None
        if self.s.k_hat is not None:
            if centroids is None:
                centroids = self.cluster.centroids
            merged_labels, _ = merge_clusters(centroids, labels,
                                              self.s.k, self.s.seed)
            merged = evaluate(merged_labels[has_gold], gold_arr,
                              self.s.swap_v_orientation)
        return report, merged

    def checkpoint(self, rec: IterationRecord, diag_lines: list[str]) -> None:
        iter_dir = os.path.join(self.run_dir, f"iter_{rec.iteration:03d}")
        os.makedirs(iter_dir, exist_ok=True)
        tensors = {"labels": rec.labels.astype(np.int64),
                   "feature.center": self.center}
        for name, arr in ae_mod.to_flat(self.ae).items():
            tensors[f"ae.{name}"] = arr
        for i, layer in enumerate(self.cluster.encoder):
            tensors[f"cluster.enc{i}.W"] = layer.W
            tensors[f"cluster.enc{i}.b"] = layer.b
        tensors["cluster.mu"] = self.cluster.centroids
        if self.clf is not None:
            tensors["clf.W"] = self.clf.W
            tensors["clf.b"] = self.clf.b
        if self.encoder is not None:
            for name, arr in self.encoder.params.items():
                tensors[f"encoder.{name}"] = arr
        meta = {
            "iteration": rec.iteration,
            "delta": rec.delta,
            "reseeds": rec.reseeds,
            "config_hash": self.hash,
            "mode": self.s.mode,
            "k_used": self.k_used,
            "seed": self.s.seed,
            "encoder_version": self.encoder_version,
            "ae_dropout": self.ae.dropout,
            "ae_encoder_activations": [l.activation for l in self.ae.encoder],
            "ae_decoder_activations": [l.activation for l in self.ae.decoder],
            "cluster_activations": [l.activation for l in self.cluster.encoder],
            "clf_dropout": self.s.clf_dropout,
            "encoder_backend": self.s.encoder,
            "encoder_hidden": self.s.encoder_hidden,
            "encoder_buckets": self.s.encoder_buckets,
            "max_length": self.s.max_length,
        }
        save_tensors(os.path.join(iter_dir, STATE_FILE), MAGIC_PIPELINE,
                     tensors, meta)
        with open(os.path.join(iter_dir, "diagnostics.txt"), "w",
                  encoding="utf-8") as fh:
            fh.write("\n".join(diag_lines) + "\n")

    def record(self, iteration: int, labels: np.ndarray, delta: float | None,
               diag_lines: list[str], reseeds: int) -> IterationRecord:
        report, merged = self.evaluate_labels(labels)
        rec = IterationRecord(iteration, labels, delta, report, merged, reseeds)
        self.history.append(rec)
        self.checkpoint(rec, diag_lines)
        self.labels = labels
        self.iteration = iteration
        return rec

    # -- main loop ----------------------------------------------------------

    def loop(self, pause_after: int | None = None) -> RunResult:
        """Iterate from the current state until convergence or max_loops.

        pause_after stops after that many loop iterations (test hook for the
        resume contract); the run can be continued with resume_run.
        """
        converged = bool(self.history and self.history[-1].delta is not None
                         and self.history[-1].delta < self.s.stop_threshold)
        start = self.iteration + 1
        if self.s.mode != "no_classification" and not converged:
            for iteration in range(start, self.s.max_loops + 1):
                if iteration == 0:
                    # Initial clustering happens before any classifier pass.
                    labels, diag, reseeds = self.cluster_step(0)
                    self.record(0, labels, None, diag, reseeds)
                    continue
                diag = self.classify_step(iteration, self.labels)
                self.encode_all()
                labels, cluster_diag, reseeds = self.cluster_step(iteration)
                delta = label_delta(self.labels, labels, self.s.aligned_delta)
                diag = diag + cluster_diag + [f"delta={delta:.6f}"]
                self.record(iteration, labels, delta, diag, reseeds)
                if delta < self.s.stop_threshold:
                    converged = True
                    break
                if pause_after is not None and iteration >= pause_after:
                    return RunResult(self.labels, self.history, False,
                                     iteration, self.run_dir)
        else:
            if start == 0:
                labels, diag, reseeds = self.cluster_step(0)
                self.record(0, labels, None, diag, reseeds)
            converged = True
        result = RunResult(self.labels, self.history, converged,
                           self.iteration, self.run_dir)
        self.finalize(result)
        return result

    def finalize(self, result: RunResult) -> None:
        values: dict = {
            "mode": self.s.mode,
            "encoder": self.s.encoder,
            "k": self.s.k,
            "k_hat": "none" if self.s.k_hat is None else self.s.k_hat,
            "config_hash": self.hash,
            "iterations": result.iterations,
            "converged": "true" if result.converged else "false",
        }
        for rec in result.history:
            prefix = f"iter_{rec.iteration:03d}"
            if rec.delta is not None:
                values[f"{prefix}.delta"] = rec.delta
            values[f"{prefix}.reseeds"] = rec.reseeds
            if rec.report is not None:
                for key, val in rec.report.as_dict().items():
                    values[f"{prefix}.{key}"] = val
            if rec.merged_report is not None:
                for key, val in rec.merged_report.as_dict().items():
                    values[f"{prefix}.merged.{key}"] = val
        last = result.history[-1] if result.history else None
        if last is not None and last.report is not None:
            for key, val in last.report.as_dict().items():
                values[f"final.{key}"] = val
            if last.merged_report is not None:
                for key, val in last.merged_report.as_dict().items():
                    values[f"final.merged.{key}"] = val
        with open(os.path.join(self.run_dir, REPORT_FILE), "w",
                  encoding="utf-8") as fh:
            fh.write(format_metrics(values))
        with open(os.path.join(self.run_dir, LABELS_FILE), "w",
                  encoding="utf-8") as fh:
            for sent, label in zip(self.corpus.sentences, result.labels):
                fh.write(f"{sent.origin_id}\t{int(label)}\n")


def run_pipeline(corpus: Corpus, settings: Settings, run_dir: str,
                 pause_after: int | None = None) -> RunResult:
    """Fresh pipeline run into run_dir; see module docstring for the loop."""
    os.makedirs(run_dir, exist_ok=True)
    with open(os.path.join(run_dir, CONFIG_FILE), "w", encoding="utf-8") as fh:
        fh.write(render_resolved(settings))
    runner = _Runner(corpus, settings, run_dir)
    runner.init_backend()
    runner.encode_all()
    runner.pretrain()
    return runner.loop(pause_after)


def _latest_iteration(run_dir: str) -> int:
    best = -1
    for entry in os.listdir(run_dir):
        if entry.startswith("iter_") and len(entry) == 8:
            try:
                best = max(best, int(entry[5:]))
            except ValueError:
                continue
    if best < 0:
        raise DataError(f"{run_dir}: no iteration checkpoints found")
    return best


def resume_run(corpus: Corpus, settings: Settings, run_dir: str,
               pause_after: int | None = None) -> RunResult:
    """Continue a checkpointed run from its latest iteration.

    The resumed trajectory matches an uninterrupted run exactly: every random
    stream is a pure function of (seed, stage, iteration), so nothing depends
    on how often the process restarted.
    """
    iteration = _latest_iteration(run_dir)
    state_path = os.path.join(run_dir, f"iter_{iteration:03d}", STATE_FILE)
    tensors, meta = load_tensors(state_path, MAGIC_PIPELINE)
    runner = _Runner(corpus, settings, run_dir)
    if meta["config_hash"] != runner.hash:
        raise ConfigError(f"{state_path}: checkpoint config hash {meta['config_hash']}"
                          f" does not match current config {runner.hash}")
    if meta["k_used"] != runner.k_used:
        raise ConfigError(f"{state_path}: checkpoint used k={meta['k_used']}, "
                          f"config wants {runner.k_used}")
    runner.init_backend()
    if runner.encoder is not None:
        runner.encoder.params = {name: tensors[f"encoder.{name}"]
                                 for name in runner.encoder.params}
    runner.encoder_version = int(meta["encoder_version"])

    def layers(prefix: str, activations: list[str]) -> list[LinearLayer]:
        return [LinearLayer(tensors[f"{prefix}{i}.W"], tensors[f"{prefix}{i}.b"], act)
                for i, act in enumerate(activations)]

    runner.center = tensors["feature.center"]
    runner.ae = ae_mod.AutoencoderParams(
        layers("ae.enc", meta["ae_encoder_activations"]),
        layers("ae.dec", meta["ae_decoder_activations"]),
        float(meta["ae_dropout"]))
    runner.cluster = ClusterModel(layers("cluster.enc", meta["cluster_activations"]),
                                  tensors["cluster.mu"], settings.ac_alpha)
    if "clf.W" in tensors:
        runner.clf = clf_mod.ClassifierParams(tensors["clf.W"], tensors["clf.b"],
                                              float(meta["clf_dropout"]))
    runner.labels = tensors["labels"].astype(np.int64)
    runner.iteration = iteration
    runner.encode_all()
    # Rebuild the already-completed part of the history so the final report
    # covers the whole run, not just the resumed tail.
    for past in range(0, iteration + 1):
        past_path = os.path.join(run_dir, f"iter_{past:03d}", STATE_FILE)
        past_tensors, past_meta = load_tensors(past_path, MAGIC_PIPELINE)
        past_labels = past_tensors["labels"].astype(np.int64)
        report, merged = runner.evaluate_labels(past_labels,
                                                past_tensors["cluster.mu"])
        runner.history.append(IterationRecord(past, past_labels,
                                              past_meta["delta"], report, merged,
                                              int(past_meta["reseeds"])))
    return runner.loop(pause_after)
