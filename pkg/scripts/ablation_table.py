"""Ablation comparison: full loop vs clustering-only vs hard k-means labels.

Runs the three pipeline modes over several seeds on the same synthetic corpus
and prints one row per run plus per-mode means, so the contribution of the
classifier bootstrap and of soft-assignment training can be read off
directly.
"""
import argparse
import logging
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from selfore.config import Settings
from selfore.corpus import ingest
from selfore.pipeline import run_pipeline
from selfore.synth import generate_file

MODES = ("full", "no_classification", "no_adaptive_clustering")


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--relations", type=int, default=4)
    ap.add_argument("--per-relation", type=int, default=50)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="runs/ablation")
    args = ap.parse_args()
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")

    os.makedirs(args.out, exist_ok=True)
    corpus_path = os.path.join(args.out, "corpus.jsonl")
    generate_file(corpus_path, args.relations, args.per_relation, seed=0)
    corpus = ingest(corpus_path, max_length=64)

    scores: dict[str, list] = {mode: [] for mode in MODES}
    print(f"{'mode':<24} {'seed':>4} {'b3_f1':>7} {'v_f1':>7} {'ari':>7} iters")
    for mode in MODES:
        for seed in args.seeds:
            cfg = Settings(
                seed=seed, mode=mode, k=args.relations, max_loops=20,
                encoder_hidden=32, encoder_buckets=2003,
                ae_hidden=(96,), ae_latent=8, ae_epochs=80, ae_lr=1e-2,
                ae_weight_decay=0.0, ae_init_std=0.2, ae_dropout=0.1,
                ae_batch=64, ac_epochs=5, ac_lr=1e-3, ac_batch=128,
                clf_lr=1e-3, clf_epochs=3, clf_freeze_epochs=1, clf_batch=64,
            )
            run_dir = os.path.join(args.out, f"{mode}-seed{seed}")
            result = run_pipeline(corpus, cfg, run_dir)
            rep = result.history[-1].report
            scores[mode].append(rep)
            print(f"{mode:<24} {seed:>4} {rep.b3_f1:7.4f} {rep.v_f1:7.4f} "
                  f"{rep.ari:7.4f} {result.iterations:>5}")
    print()
    for mode in MODES:
        b3 = np.mean([r.b3_f1 for r in scores[mode]])
        ar = np.mean([r.ari for r in scores[mode]])
        print(f"{mode:<24} mean b3_f1={b3:.4f}  mean ari={ar:.4f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
