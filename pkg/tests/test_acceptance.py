"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines. The toy experiment criteria train real models and take a couple of
minutes in total; everything is seeded and deterministic.
"""

import json
import math
import time
from pathlib import Path

import numpy as np
import pytest
from threadpoolctl import threadpool_limits

from hatemtl.cli import main as cli_main
from hatemtl.consistency import correct_batch
from hatemtl.corpus import HsCategory, LabelTriple, compute_stats, load_corpus, save_corpus, split_corpus
from hatemtl.encoder import EncoderConfig
from hatemtl.ensemble import ensemble_combine, predict
from hatemtl.evaluation import build_report, compare_runs, contradiction_rates, macro_metrics
from hatemtl.model import ModelConfig, ProbTriple, TASKS
from hatemtl.synthetic import corpus_from_label_counts, generate_corpus
from hatemtl.training import TrainConfig, lr_at, train

from test_ensemble import random_triple
from test_evaluation import brute_force_macro
from test_model import _grad_check_case


def criterion(n: int, description: str, ok: bool, details: str = ""):
    print(f"[criterion {n:02d}] {'PASS' if ok else 'FAIL'} {description} {details}".rstrip())
    assert ok, f"criterion {n}: {description} {details}"


# Desk-scale encoder/model for the toy experiments; the library default
# (2^18 buckets, word+char n-grams) is sized for real corpora.
TOY_ENCODER = dict(dim=64, hash_buckets=2**13, word_ngrams=(1,), char_ngrams=())


def test_criterion_01_dataset_statistics():
    published = {
        "clean": (8235, 64.85),
        "offensive": (4463, 35.15),
        "hate": (1339, 10.54),
        HsCategory.GENDER: (641, 5.05),
        HsCategory.RACE: (366, 2.88),
        HsCategory.IDEOLOGY: (190, 1.50),
        HsCategory.SOCIAL_CLASS: (101, 0.80),
        HsCategory.RELIGION: (38, 0.30),
        HsCategory.DISABILITY: (3, 0.02),
    }
    t0 = time.monotonic()
    corpus = corpus_from_label_counts(
        clean=8235,
        offensive_only=4463 - 1339,
        categories={c: published[c][0] for c in list(HsCategory)[1:]},
    )
    stats = compute_stats(corpus)
    elapsed = time.monotonic() - t0
    worst = 0.0
    for key, (count, pct) in published.items():
        if isinstance(key, HsCategory):
            got = stats.percentage(stats.categories[key])
        else:
            got = stats.percentage(getattr(stats, key))
        worst = max(worst, abs(got - pct))
    criterion(
        1,
        "dataset-statistics reproduction within ±0.005pp, < 1s",
        stats.total == 12698 and worst <= 0.005 and elapsed < 1.0,
        f"(worst diff {worst:.4f}pp, {elapsed:.2f}s)",
    )


def test_criterion_02_self_consistency_exclusion():
    rng = np.random.default_rng(20)
    t0 = time.monotonic()
    preds = [predict(random_triple(rng)) for _ in range(10_000)]
    outcomes, _ = correct_batch(preds)
    after = [o.after for o in outcomes]
    rule_a = sum(1 for p in after if p.offd and p.hsd and p.hsc == HsCategory.NONE)
    rule_b = sum(1 for p in after if not p.offd and not p.hsd and p.hsc != HsCategory.NONE)
    again, _ = correct_batch(after)
    idempotent = [o.after for o in again] == after
    heads_untouched = all(
        o.after.offd == o.before.offd and o.after.hsd == o.before.hsd for o in outcomes
    )
    elapsed = time.monotonic() - t0
    criterion(
        2,
        "self-consistency exclusion over 10k fuzzed triples, < 5s",
        rule_a == 0 and rule_b == 0 and idempotent and heads_untouched and elapsed < 5.0,
        f"(violations {rule_a}+{rule_b}, {elapsed:.2f}s)",
    )


def test_criterion_03_contradiction_monotonicity():
    rng = np.random.default_rng(30)
    ok = True
    for _ in range(200):
        preds = [predict(random_triple(rng)) for _ in range(int(rng.integers(1, 300)))]
        after = [o.after for o in correct_batch(preds)[0]]
        before_rate = contradiction_rates(preds)[1]
        after_rate = contradiction_rates(after)[1]
        ok &= after_rate <= before_rate
        for p in after:
            if p.hsd != (p.hsc != HsCategory.NONE):
                ok &= p.offd != p.hsd
    criterion(3, "HSD<->HSC contradiction rate never increases; residuals only on binary disagreement", ok)


def test_criterion_04_metrics_oracle():
    rng = np.random.default_rng(40)
    ok = True
    for _ in range(1000):
        n_classes = int(rng.integers(2, 8))
        classes = list(range(n_classes))
        n = int(rng.integers(1, 51))
        gold = list(rng.integers(0, n_classes, size=n))
        pred = list(rng.integers(0, n_classes, size=n))
        got = macro_metrics(gold, pred, classes)
        want = brute_force_macro(gold, pred, classes)
        ok &= got.accuracy == want[0]
        ok &= abs(got.precision - want[1]) < 1e-12
        ok &= abs(got.recall - want[2]) < 1e-12
        ok &= abs(got.f1 - want[3]) < 1e-12
    worked = macro_metrics([1, 0, 0, 1], [1, 0, 1, 1], [0, 1])
    ok &= abs(worked.f1 - 11 / 15) < 1e-12
    # absent class drags the macro mean down via the 0/0 -> 0 convention
    absent = macro_metrics([0, 1, 1], [0, 1, 1], [0, 1, 2])
    ok &= abs(absent.f1 - 2 / 3) < 1e-12
    criterion(4, "macro metrics equal brute-force oracle on 1000 cases incl. conventions", ok)


def test_criterion_05_gradient_check():
    worst = max(_grad_check_case(seed) for seed in range(20))
    criterion(
        5,
        "analytic gradients match central differences (20 configs, rel err < 1e-4)",
        worst < 1e-4,
        f"(worst {worst:.2e})",
    )


def test_criterion_06_schedule_exactness():
    cfg = TrainConfig(peak_lr=1e-5, warmup_steps=500)
    total = 12_345
    ok = lr_at(0, cfg, total) == 0.0
    ok &= lr_at(500, cfg, total) == 1e-5
    ok &= lr_at(total, cfg, total) == 0.0
    ok &= abs(lr_at(250, cfg, total) - 5e-6) < 1e-15
    for s in range(1, 500):
        ok &= abs(lr_at(s, cfg, total) - 1e-5 * s / 500) < 1e-20
    for s in range(500, total + 1, 97):
        ok &= abs(lr_at(s, cfg, total) - 1e-5 * (total - s) / (total - 500)) < 1e-20
    criterion(6, "warmup/decay schedule exact (0 -> peak at 500 -> 0, linear)", ok)


def test_criterion_07_ensemble_properties():
    rng = np.random.default_rng(70)
    ok = True
    for _ in range(1000):
        t = random_triple(rng)
        single = ensemble_combine([t])
        ok &= all(
            np.allclose(single.probs(task), t.probs(task), atol=1e-12) for task in TASKS
        )
    for _ in range(1000):
        triples = [random_triple(rng) for _ in range(int(rng.integers(2, 6)))]
        a = ensemble_combine(triples)
        order = list(rng.permutation(len(triples)))
        b = ensemble_combine([triples[i] for i in order])
        ok &= all(np.allclose(a.probs(task), b.probs(task), atol=1e-9) for task in TASKS)
    for _ in range(1000):
        k = int(rng.integers(1, 5))
        triples = [random_triple(rng) for _ in range(k)]
        combined = ensemble_combine(triples)
        scales = rng.uniform(0.01, 100.0, size=k)
        for task in TASKS:
            rescaled = np.prod([scales[i] * triples[i].probs(task) for i in range(k)], axis=0)
            direct = np.prod([t.probs(task) for t in triples], axis=0)
            ok &= int(np.argmax(rescaled)) == int(np.argmax(combined.probs(task)))
            ok &= int(np.argmax(direct)) == int(np.argmax(combined.probs(task)))
    criterion(7, "ensemble identity/order/rescaling/log-vs-direct properties (1000 cases each)", ok)


@pytest.fixture(scope="module")
def toy_experiment():
    corpus = generate_corpus(2000, seed=42)
    tr, dv, te = split_corpus(corpus, (0.7, 0.1, 0.2), seed=42)
    model_cfg = ModelConfig(encoder=EncoderConfig(seed=42, **TOY_ENCODER), hidden_dim=64)
    return corpus, tr, dv, te, model_cfg


def test_criterion_08_toy_multitask_end_to_end(toy_experiment):
    _, tr, dv, te, model_cfg = toy_experiment
    cfg = TrainConfig(peak_lr=0.05, seed=42)  # defaults: batch 16, 10 epochs, warmup 500
    with threadpool_limits(1):
        t0 = time.monotonic()
        mtl = train(tr, dv, model_cfg, cfg)
        elapsed = time.monotonic() - t0
    f1 = {t: mtl.checkpoints[t].dev_f1_macro for t in TASKS}
    ok = f1["offd"] >= 0.95 and f1["hsd"] >= 0.95 and f1["hsc"] >= 0.85 and elapsed < 60.0

    # Ablation arms: one single-task run per subtask, then the side-by-side
    # comparison (no MTL-vs-single ordering is asserted).
    reports = []
    for task in TASKS:
        arm = train(tr, dv, model_cfg, TrainConfig(peak_lr=0.05, seed=42, task_mask=(task,)))
        preds = _predict_corpus(te, arm.checkpoints[task].params, model_cfg)
        reports.append((f"single_{task}", build_report([s.gold for s in te], preds)))
    mtl_preds = _predict_corpus(te, mtl.checkpoints["hsc"].params, model_cfg)
    corrected = [o.after for o in correct_batch(mtl_preds)[0]]
    reports.append(
        ("multitask", build_report([s.gold for s in te], mtl_preds, corrected=corrected))
    )
    table = compare_runs(reports)
    rows = [l for l in table.splitlines() if l.startswith(("OFFD", "HSD", "HSC"))]
    ok &= len(rows) == 12 and any("/" in r for r in rows if r.startswith("HSC"))
    criterion(
        8,
        "toy MTL run: dev F1 >= 0.95/0.95/0.85 in < 60s; ablation comparison emitted",
        ok,
        f"(offd {f1['offd']:.3f}, hsd {f1['hsd']:.3f}, hsc {f1['hsc']:.3f}, {elapsed:.1f}s)",
    )


def _predict_corpus(corpus, params, model_cfg):
    from hatemtl.encoder import features_matrix
    from hatemtl.model import batch_forward

    feats = features_matrix(list(corpus), model_cfg.encoder)
    probs = batch_forward(feats, params, model_cfg)
    return [
        predict(ProbTriple(offd=probs["offd"][i], hsd=probs["hsd"][i], hsc=probs["hsc"][i]))
        for i in range(len(corpus))
    ]


GRID_CONFIG = """\
[run]
seed = 11
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
epochs = 1
[grid]
batch_sizes = 2,4,8,16
peak_lrs = 0.05,0.02,0.01
"""


def _stage_corpus(tmp_path: Path, n: int, seed: int) -> None:
    corpus = generate_corpus(n, seed=seed)
    tr, dv, te = split_corpus(corpus, (0.7, 0.1, 0.2), seed=seed)
    for part, name in ((tr, "train"), (dv, "dev"), (te, "test")):
        save_corpus(part, tmp_path / f"{name}.tsv")
    (tmp_path / "grid.cfg").write_text(GRID_CONFIG)


def _run_pipeline(base: Path, tag: str) -> dict[str, bytes]:
    """grid -> predict(x12) -> ensemble -> correct -> evaluate, returning artifact bytes."""
    run = base / tag
    assert cli_main([
        "grid", "--config", str(base / "grid.cfg"),
        "--train", str(base / "train.tsv"), "--dev", str(base / "dev.tsv"),
        "--run-dir", str(run / "grid"),
    ]) == 0
    ckpts = sorted(str(p) for p in (run / "grid").glob("run_*/checkpoint_hsc.htck"))
    assert len(ckpts) == 12
    assert cli_main([
        "predict", "--checkpoint", *ckpts,
        "--corpus", str(base / "test.tsv"), "--out-dir", str(run / "preds"),
    ]) == 0
    assert cli_main([
        "ensemble", "--pred", *sorted(str(p) for p in (run / "preds").glob("pred_*.jsonl")),
        "--out", str(run / "combined.jsonl"),
    ]) == 0
    assert cli_main([
        "correct", "--pred", str(run / "combined.jsonl"), "--out", str(run / "corrected.jsonl"),
    ]) == 0
    assert cli_main([
        "evaluate", "--gold", str(base / "test.tsv"), "--pred", str(run / "combined.jsonl"),
        "--compare", str(run / "corrected.jsonl"), "--json", str(run / "report.json"),
    ]) == 0
    artifacts = {}
    for path in sorted(run.rglob("*")):
        # Manifests carry wall-clock timestamps by design; the recorded
        # artifact hashes inside them are covered by comparing the artifacts.
        if path.is_file() and not path.name.endswith("manifest.json"):
            artifacts[str(path.relative_to(run))] = path.read_bytes()
    return artifacts


def test_criterion_09_grid_determinism(tmp_path):
    _stage_corpus(tmp_path, n=240, seed=11)
    a = _run_pipeline(tmp_path, "first")
    b = _run_pipeline(tmp_path, "second")
    same_keys = set(a) == set(b)
    diffs = [k for k in a if same_keys and a[k] != b[k]]
    criterion(
        9,
        "two identical grid runs are byte-identical (checkpoints, logs, predictions, reports)",
        same_keys and not diffs,
        f"({len(a)} artifacts compared{'; first diff ' + diffs[0] if diffs else ''})",
    )


def test_criterion_10_pipeline_fidelity(tmp_path, capsys):
    _stage_corpus(tmp_path, n=1200, seed=10)
    run = tmp_path / "p"
    assert cli_main([
        "grid", "--config", str(tmp_path / "grid.cfg"),
        "--train", str(tmp_path / "train.tsv"), "--dev", str(tmp_path / "dev.tsv"),
        "--run-dir", str(run / "grid"),
    ]) == 0
    ckpts = sorted(str(p) for p in (run / "grid").glob("run_*/checkpoint_hsc.htck"))
    ok = len(ckpts) == 12
    assert cli_main([
        "predict", "--checkpoint", *ckpts,
        "--corpus", str(tmp_path / "test.tsv"), "--out-dir", str(run / "preds"),
    ]) == 0
    preds = sorted(str(p) for p in (run / "preds").glob("pred_*.jsonl"))
    ok &= len(preds) == 12
    assert cli_main(["ensemble", "--pred", *preds, "--out", str(run / "combined.jsonl")]) == 0
    assert cli_main([
        "correct", "--pred", str(run / "combined.jsonl"), "--out", str(run / "corrected.jsonl"),
    ]) == 0
    capsys.readouterr()
    assert cli_main([
        "evaluate", "--gold", str(tmp_path / "test.tsv"),
        "--pred", str(run / "combined.jsonl"), "--compare", str(run / "corrected.jsonl"),
    ]) == 0
    out = capsys.readouterr().out
    with capsys.disabled():
        hsc_rows = [l for l in out.splitlines() if l.startswith("HSC")]
        ok &= bool(hsc_rows) and all("/" in row for row in hsc_rows)
        criterion(
            10,
            "staged grid -> predict(x12) -> ensemble -> correct -> evaluate with dual-cell HSC",
            ok,
            f"({len(preds)} prediction files)",
        )
