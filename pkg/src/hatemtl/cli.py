"""Command-line pipeline: stats, split, train, grid, finetune-hsc, predict,
ensemble, correct, evaluate, analyze.

The pipeline is staged so every analysis has a one-command reproduction path:
`grid` trains the model zoo, `predict` emits per-model probabilities,
`ensemble` multiplies them, `correct` repairs fine-grained contradictions,
and `evaluate`/`analyze` score the result. Exit codes: 0 success, 2
usage/input error, 1 internal failure.

The HATEMTL_RUN_ROOT environment variable, when set, anchors relative run
directories.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, load_run_config
from .consistency import correct_batch
from .corpus import (
    Corpus,
    CorpusFormatError,
    compute_stats,
    format_stats,
    load_corpus,
    save_corpus,
    split_corpus,
)
from .encoder import attach_embeddings, embedding_matrix, features_matrix
from .ensemble import (
    ProbTriple,
    ensemble_combine,
    predict,
    read_prediction_file,
    write_prediction_file,
)
from .evaluation import (
    TASK_DISPLAY,
    build_report,
    compare_runs,
    contradiction_rates,
    fp_fn_rates,
    render_report,
    report_to_json,
)
from .manifest import build_manifest, write_manifest
from .model import batch_forward
from .training import finetune_hsc, grid_search, read_checkpoint, train, write_checkpoint


class UsageError(Exception):
    pass


def _resolve_run_dir(value: str) -> Path:
    path = Path(value)
    root = os.environ.get("HATEMTL_RUN_ROOT")
    if root and not path.is_absolute():
        path = Path(root) / path
    return path


def _load_labeled(path, fmt=None) -> Corpus:
    corpus = load_corpus(path, fmt)
    if len(corpus) == 0:
        raise UsageError(f"corpus {path} is empty")
    if not corpus.fully_labeled():
        raise UsageError(f"corpus {path} must be fully labeled")
    return corpus


def _overrides_from_args(args) -> dict[str, str]:
    table = {
        "seed": "run.seed",
        "peak_lr": "train.peak_lr",
        "batch_size": "train.batch_size",
        "epochs": "train.epochs",
        "task_mask": "train.task_mask",
    }
    overrides = {}
    for attr, dotted in table.items():
        value = getattr(args, attr, None)
        if value is not None:
            overrides[dotted] = str(value)
    return overrides


def _probs_for_corpus(corpus: Corpus, ckpt) -> list[ProbTriple]:
    cfg = ckpt.model_config
    samples = list(corpus)
    if cfg.encoder.mode == "passthrough":
        feats = embedding_matrix(samples, cfg.encoder)
    else:
        feats = features_matrix(samples, cfg.encoder)
    probs = batch_forward(feats, ckpt.params, cfg)
    return [
        ProbTriple(offd=probs["offd"][i], hsd=probs["hsd"][i], hsc=probs["hsc"][i])
        for i in range(len(samples))
    ]


def _align_to_gold(corpus: Corpus, ids, preds):
    by_id = dict(zip(ids, preds))
    if len(by_id) != len(ids):
        raise UsageError("duplicate ids in prediction file")
    missing = [s.id for s in corpus if s.id not in by_id]
    if missing:
        raise UsageError(f"prediction file missing ids (first: {missing[0]!r})")
    extra = set(ids) - {s.id for s in corpus}
    if extra:
        raise UsageError(f"prediction file has unknown ids (first: {sorted(extra)[0]!r})")
    return [by_id[s.id] for s in corpus]


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_stats(args) -> int:
    corpus = _load_labeled(args.corpus, args.format)
    print(format_stats(compute_stats(corpus)))
    return 0


def cmd_split(args) -> int:
    corpus = _load_labeled(args.corpus, args.format)
    fractions = tuple(float(x) for x in args.fractions.split(","))
    if len(fractions) != 3:
        raise UsageError("--fractions must be three comma-separated numbers")
    parts = split_corpus(corpus, fractions, seed=args.seed, strategy=args.split_strategy)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    suffix = ".jsonl" if (args.format == "jsonl" or str(args.corpus).endswith(".jsonl")) else ".tsv"
    outputs = []
    for part in parts:
        path = out_dir / f"{part.split_tag}{suffix}"
        save_corpus(part, path)
        outputs.append(path)
        print(f"{part.split_tag}: {len(part)} samples -> {path}")
    manifest = build_manifest("split", inputs=[args.corpus], outputs=outputs, seed=args.seed)
    write_manifest(manifest, out_dir / "manifest.json")
    return 0


def cmd_train(args) -> int:
    run_cfg = load_run_config(args.config, _overrides_from_args(args))
    train_corpus = _load_labeled(args.train)
    dev_corpus = _load_labeled(args.dev)
    run_dir = _resolve_run_dir(args.run_dir)
    result = train(train_corpus, dev_corpus, run_cfg.model, run_cfg.train, run_dir)
    outputs = sorted(run_dir.glob("checkpoint_*.htck")) + [run_dir / "train_log.jsonl"]
    manifest = build_manifest(
        "train",
        inputs=[args.train, args.dev],
        outputs=outputs,
        seed=run_cfg.seed,
        config_path=args.config,
    )
    write_manifest(manifest, run_dir / "manifest.json")
    for task in run_cfg.train.task_mask:
        ckpt = result.checkpoints[task]
        print(f"{TASK_DISPLAY[task]}: best dev macro-F1 {ckpt.dev_f1_macro:.4f} at step {ckpt.step}")
    return 0


def cmd_grid(args) -> int:
    run_cfg = load_run_config(args.config, _overrides_from_args(args))
    train_corpus = _load_labeled(args.train)
    dev_corpus = _load_labeled(args.dev)
    run_dir = _resolve_run_dir(args.run_dir)
    result = grid_search(
        train_corpus, dev_corpus, run_cfg.model, run_cfg.train, run_cfg.grid, run_dir
    )
    summary = {
        "runs": [
            {
                "index": run.index,
                "batch_size": run.config.batch_size,
                "peak_lr": run.config.peak_lr,
                "seed": run.config.seed,
                "best_dev_f1": {
                    t: c.dev_f1_macro for t, c in sorted(run.result.checkpoints.items())
                },
            }
            for run in result.runs
        ],
        "rankings": {t: result.ranking(t) for t in run_cfg.train.task_mask},
    }
    with open(run_dir / "grid_summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs = sorted(run_dir.glob("run_*/checkpoint_*.htck"))
    outputs += sorted(run_dir.glob("run_*/train_log.jsonl"))
    outputs.append(run_dir / "grid_summary.json")
    manifest = build_manifest(
        "grid",
        inputs=[args.train, args.dev],
        outputs=outputs,
        seed=run_cfg.seed,
        config_path=args.config,
    )
    write_manifest(manifest, run_dir / "manifest.json")
    print(f"{len(result.runs)} grid runs complete")
    for task in run_cfg.train.task_mask:
        best = result.best_checkpoint(task)
        print(
            f"{TASK_DISPLAY[task]}: best run {result.ranking(task)[0]} "
            f"(dev macro-F1 {best.dev_f1_macro:.4f})"
        )
    return 0


def cmd_finetune_hsc(args) -> int:
    ckpt = read_checkpoint(args.checkpoint)
    train_corpus = _load_labeled(args.train)
    dev_corpus = _load_labeled(args.dev)
    cfg = ckpt.train_config
    cfg = replace(
        cfg,
        epochs=args.epochs,
        peak_lr=args.peak_lr if args.peak_lr is not None else cfg.peak_lr,
        seed=args.seed if args.seed is not None else cfg.seed,
        warmup_steps=args.warmup_steps if args.warmup_steps is not None else cfg.warmup_steps,
        task_mask=("hsc",),
    )
    run_dir = _resolve_run_dir(args.run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    best = finetune_hsc(ckpt, train_corpus, dev_corpus, cfg, run_dir)
    if cfg.epochs == 0:
        # No-op finetune still persists the (unchanged) checkpoint.
        write_checkpoint(best, run_dir / "checkpoint_hsc.htck")
    outputs = [run_dir / "checkpoint_hsc.htck"]
    log = run_dir / "train_log.jsonl"
    if log.exists():
        outputs.append(log)
    manifest = build_manifest(
        "finetune-hsc",
        inputs=[args.checkpoint, args.train, args.dev],
        outputs=outputs,
        seed=cfg.seed,
    )
    write_manifest(manifest, run_dir / "manifest.json")
    print(f"HSC: best dev macro-F1 {best.dev_f1_macro:.4f} at step {best.step}")
    return 0


def cmd_predict(args) -> int:
    corpus = load_corpus(args.corpus, args.format)
    if len(corpus) == 0:
        raise UsageError(f"corpus {args.corpus} is empty")
    if args.embeddings:
        corpus = attach_embeddings(corpus, args.embeddings)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ids = [s.id for s in corpus]
    outputs = []
    for i, ckpt_path in enumerate(args.checkpoint):
        if not Path(ckpt_path).is_file():
            raise UsageError(f"checkpoint not found: {ckpt_path}")
        ckpt = read_checkpoint(ckpt_path)
        triples = _probs_for_corpus(corpus, ckpt)
        out_path = out_dir / (f"pred_{i:02d}.jsonl" if len(args.checkpoint) > 1 else "pred.jsonl")
        write_prediction_file(out_path, ids, triples)
        outputs.append(out_path)
        print(f"{ckpt_path} -> {out_path} ({len(ids)} rows)")
    manifest = build_manifest(
        "predict", inputs=list(args.checkpoint) + [args.corpus], outputs=outputs
    )
    write_manifest(manifest, out_dir / "manifest.json")
    return 0


def cmd_ensemble(args) -> int:
    all_ids = None
    per_model: list[list[ProbTriple]] = []
    for path in args.pred:
        ids, preds, _rules = read_prediction_file(path)
        if all_ids is None:
            all_ids = ids
        elif ids != all_ids:
            raise UsageError(f"prediction files disagree on ids ({path})")
        per_model.append([p.source_probs for p in preds])
    combined = [
        ensemble_combine([model[i] for model in per_model]) for i in range(len(all_ids))
    ]
    write_prediction_file(args.out, all_ids, combined)
    manifest = build_manifest("ensemble", inputs=list(args.pred), outputs=[args.out])
    write_manifest(manifest, str(args.out) + ".manifest.json")
    print(f"combined {len(per_model)} models over {len(all_ids)} rows -> {args.out}")
    return 0


def cmd_correct(args) -> int:
    ids, preds, _rules = read_prediction_file(args.pred)
    outcomes, counts = correct_batch(preds)
    write_prediction_file(
        args.out,
        ids,
        [o.after.source_probs for o in outcomes],
        labels=[o.after for o in outcomes],
        rules=[o.rule_applied for o in outcomes],
    )
    manifest = build_manifest("correct", inputs=[args.pred], outputs=[args.out])
    write_manifest(manifest, str(args.out) + ".manifest.json")
    print(
        f"corrected {len(ids)} rows -> {args.out} "
        f"(promoted {counts['promote_second_best']}, demoted {counts['demote_to_none']}, "
        f"unchanged {counts['none']})"
    )
    return 0


def _read_aligned(corpus: Corpus, path):
    ids, preds, rules = read_prediction_file(path)
    return _align_to_gold(corpus, ids, preds), rules


def cmd_evaluate(args) -> int:
    corpus = _load_labeled(args.gold, args.format)
    gold = [s.gold for s in corpus]
    preds, _ = _read_aligned(corpus, args.pred)

    compare_files = args.compare or []
    if len(compare_files) == 1:
        other, other_rules = _read_aligned(corpus, compare_files[0])
        if other_rules is not None:
            # Before/after-correction pair: one report with dual cells.
            report = build_report(gold, preds, corrected=other)
            print(render_report(report))
            if args.json:
                with open(args.json, "w", encoding="utf-8") as fh:
                    json.dump(report_to_json(report), fh, indent=2, sort_keys=True)
                    fh.write("\n")
            return 0

    reports = [(Path(args.pred).stem, build_report(gold, preds))]
    for path in compare_files:
        other, _ = _read_aligned(corpus, path)
        reports.append((Path(path).stem, build_report(gold, other)))
    if len(reports) == 1:
        print(render_report(reports[0][1]))
        payload = report_to_json(reports[0][1])
    else:
        print(compare_runs(reports))
        payload = {name: report_to_json(rep) for name, rep in reports}
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    return 0


def cmd_analyze(args) -> int:
    ids, preds, _ = read_prediction_file(args.pred)
    if not preds:
        raise UsageError(f"no predictions in {args.pred}")
    before = contradiction_rates(preds)
    after = None
    corrected = None
    if args.corrected:
        cids, corrected, _ = read_prediction_file(args.corrected)
        if cids != ids:
            raise UsageError("corrected file ids do not match predictions")
        after = contradiction_rates(corrected)

    def dual(b, a):
        return f"{100*b:.2f}%" if a is None else f"{100*b:.2f}/{100*a:.2f}%"

    print(f"{'Subtask':<8}{'Contradiction':>18}")
    print(f"{'OFFD':<8}{dual(before[0], after[0] if after else None):>18}")
    print(f"{'HSD':<8}{dual(before[1], after[1] if after else None):>18}")
    print(f"{'HSC':<8}{dual(before[1], after[1] if after else None):>18}")

    if args.gold:
        corpus = _load_labeled(args.gold, args.format)
        gold = [s.gold for s in corpus]
        aligned, _ = _read_aligned(corpus, args.pred)
        rates = fp_fn_rates(gold, aligned)
        rates_after = None
        if corrected is not None:
            aligned_corr = _align_to_gold(corpus, ids, corrected)
            rates_after = fp_fn_rates(gold, aligned_corr)
        print()
        print(f"{'Subtask':<8}{'False +ve':>18}{'False -ve':>18}")
        for task in ("offd", "hsd", "hsc"):
            r = rates[task]
            if task == "hsc" and rates_after is not None:
                ra = rates_after[task]
                print(f"{TASK_DISPLAY[task]:<8}{dual(r.fp, ra.fp):>18}{dual(r.fn, ra.fn):>18}")
            else:
                print(f"{TASK_DISPLAY[task]:<8}{dual(r.fp, None):>18}{dual(r.fn, None):>18}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hatemtl",
        description="Hierarchical multitask offensive/hate-speech classification pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_format(p):
        p.add_argument("--format", choices=["tsv", "jsonl"], default=None,
                       help="corpus file format (default: from suffix)")

    p = sub.add_parser("stats", help="print class counts and percentages")
    p.add_argument("--corpus", required=True)
    add_format(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("split", help="stratified train/dev/test split")
    p.add_argument("--corpus", required=True)
    add_format(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--fractions", default="0.7,0.1,0.2")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-strategy", choices=["stratified", "uniform"], default="stratified")
    p.set_defaults(func=cmd_split)

    def add_train_args(p):
        p.add_argument("--config", default=None, help="run config file")
        p.add_argument("--train", required=True, help="training corpus")
        p.add_argument("--dev", required=True, help="validation corpus")
        p.add_argument("--run-dir", required=True)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--peak-lr", dest="peak_lr", type=float, default=None)
        p.add_argument("--batch-size", dest="batch_size", type=int, default=None)
        p.add_argument("--epochs", type=int, default=None)

    p = sub.add_parser("train", help="one multitask (or masked single-task) training run")
    add_train_args(p)
    p.add_argument("--task-mask", dest="task_mask", default=None,
                   help="comma-separated subset of offd,hsd,hsc")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("grid", help="train once per (batch size, peak lr) grid cell")
    add_train_args(p)
    p.add_argument("--task-mask", dest="task_mask", default=None)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("finetune-hsc", help="continue a checkpoint on the HSC subtask only")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--train", required=True)
    p.add_argument("--dev", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--epochs", type=int, default=2)
    p.add_argument("--peak-lr", dest="peak_lr", type=float, default=None)
    p.add_argument("--warmup-steps", dest="warmup_steps", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=cmd_finetune_hsc)

    p = sub.add_parser("predict", help="per-model probability files for a corpus")
    p.add_argument("--checkpoint", required=True, nargs="+")
    p.add_argument("--corpus", required=True)
    add_format(p)
    p.add_argument("--embeddings", default=None, help="embedding sidecar JSONL (passthrough mode)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("ensemble", help="combine probability files by element-wise product")
    p.add_argument("--pred", required=True, nargs="+")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("correct", help="apply self-consistency correction to predictions")
    p.add_argument("--pred", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("evaluate", help="score predictions against a gold corpus")
    p.add_argument("--gold", required=True)
    add_format(p)
    p.add_argument("--pred", required=True)
    p.add_argument("--compare", nargs="+", default=None,
                   help="additional prediction files; a corrected file yields dual cells")
    p.add_argument("--json", default=None, help="also write the report as JSON")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("analyze", help="contradiction rates and FP/FN rates")
    p.add_argument("--pred", required=True)
    p.add_argument("--corrected", default=None)
    p.add_argument("--gold", default=None)
    add_format(p)
    p.set_defaults(func=cmd_analyze)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, CorpusFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception:
        traceback.print_exc()
        return 1


if __name__ == "__main__":
    sys.exit(main())
