"""The staged command-line pipeline, end to end in a temporary directory.

Every stage is a separate command so each analysis has a one-command
reproduction path:

    stats -> split -> grid -> predict -> ensemble -> correct -> evaluate/analyze

Run: python demos/04_cli_pipeline.py   (~30 s)
"""

import subprocess
import sys
import tempfile
from pathlib import Path

from hatemtl import generate_corpus, save_corpus

CONFIG = """\
[run]
seed = 3
[encoder]
dim = 32
hash_buckets = 4096
word_ngrams = 1
char_ngrams =
[model]
hidden_dim = 32
[train]
peak_lr = 0.05
batch_size = 16
warmup_steps = 0
epochs = 2
[grid]
batch_sizes = 4,8,16
peak_lrs = 0.05,0.02
"""


def run(*args):
    cmd = [sys.executable, "-m", "hatemtl.cli", *args]
    print(f"\n$ hatemtl {' '.join(args)}")
    subprocess.run(cmd, check=True)


with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    save_corpus(generate_corpus(1000, seed=3), tmp / "corpus.tsv")
    (tmp / "run.cfg").write_text(CONFIG)

    run("stats", "--corpus", str(tmp / "corpus.tsv"))
    run("split", "--corpus", str(tmp / "corpus.tsv"), "--out-dir", str(tmp / "splits"), "--seed", "3")
    run(
        "grid", "--config", str(tmp / "run.cfg"),
        "--train", str(tmp / "splits/train.tsv"), "--dev", str(tmp / "splits/dev.tsv"),
        "--run-dir", str(tmp / "grid"),
    )
    checkpoints = sorted(str(p) for p in (tmp / "grid").glob("run_*/checkpoint_hsc.htck"))
    run(
        "predict", "--checkpoint", *checkpoints,
        "--corpus", str(tmp / "splits/test.tsv"), "--out-dir", str(tmp / "preds"),
    )
    predictions = sorted(str(p) for p in (tmp / "preds").glob("pred_*.jsonl"))
    run("ensemble", "--pred", *predictions, "--out", str(tmp / "combined.jsonl"))
    run("correct", "--pred", str(tmp / "combined.jsonl"), "--out", str(tmp / "corrected.jsonl"))
    run(
        "evaluate", "--gold", str(tmp / "splits/test.tsv"),
        "--pred", str(tmp / "combined.jsonl"), "--compare", str(tmp / "corrected.jsonl"),
    )
    run(
        "analyze", "--pred", str(tmp / "combined.jsonl"),
        "--corrected", str(tmp / "corrected.jsonl"), "--gold", str(tmp / "splits/test.tsv"),
    )
    run(
        "finetune-hsc", "--checkpoint", str(tmp / "grid/run_00/checkpoint_hsc.htck"),
        "--train", str(tmp / "splits/train.tsv"), "--dev", str(tmp / "splits/dev.tsv"),
        "--run-dir", str(tmp / "finetune"), "--epochs", "1", "--warmup-steps", "10",
    )

print("\npipeline complete")
