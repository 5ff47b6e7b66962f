"""Contract with the clustering pipeline, exercised over the shared surfaces:

the JSON-lines corpus format, the binary feature-file format, and the two
command-line tools. The pipeline package is never imported; everything goes
through subprocesses and files, the way the two tools meet in practice.
"""
import json
import os
import shutil
import subprocess
import sys

from conftest import HIDDEN_SIZE

from sore_export.sorefile import read_features


def run_tool(executable, *args):
    result = subprocess.run([executable, *args], capture_output=True, text=True)
    assert result.returncode == 0, f"{executable} failed:\n{result.stderr}"
    return result


def test_exported_features_drive_the_pipeline(model_dir, tmp_path):
    selfore = shutil.which("selfore")
    exporter = shutil.which("sore-export")
    assert selfore, "clustering pipeline CLI not installed"
    assert exporter, "exporter CLI not installed"

    corpus = str(tmp_path / "corpus.jsonl")
    run_tool(selfore, "synth", "--relations", "4", "--per-relation", "25",
             "--seed", "0", "--out", corpus)
    with open(corpus, encoding="utf-8") as fh:
        corpus_ids = [json.loads(line)["id"] for line in fh if line.strip()]
    assert len(corpus_ids) == 100

    first = str(tmp_path / "feats_a.sore")
    second = str(tmp_path / "feats_b.sore")
    for out in (first, second):
        run_tool(exporter, "--corpus", corpus, "--model", model_dir,
                 "--out", out, "--max-length", "64")
    with open(first, "rb") as fh:
        payload = fh.read()
    with open(second, "rb") as fh:
        assert fh.read() == payload, "rerun produced different bytes"

    with open(os.path.join(model_dir, "config.json"), encoding="utf-8") as fh:
        hidden = json.load(fh)["hidden_size"]
    assert hidden == HIDDEN_SIZE
    feats, ids = read_features(first)
    assert feats.shape == (100, 2 * hidden)
    assert ids == corpus_ids

    run_dir = str(tmp_path / "run")
    run_tool(selfore, "run", "--corpus", corpus, "--out", run_dir, "--k", "4",
             "encoder=precomputed", f"features={first}", "max_length=64",
             "ae_hidden=16", "ae_latent=4", "ae_epochs=10", "ac_epochs=2",
             "clf_epochs=1", "clf_freeze_epochs=1", "max_loops=2")
    assert os.path.exists(os.path.join(run_dir, "report.final"))
    assert os.path.exists(os.path.join(run_dir, "labels.tsv"))
