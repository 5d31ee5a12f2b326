"""Joint multitask optimization.

AdamW with decoupled weight decay, linear warmup/decay schedule, mid-epoch
validation, per-subtask best-checkpoint selection, a hyperparameter grid,
and the HSC-only finetuning stage. Runs are fully determined by
(seed, config, corpus): the same inputs reproduce every checkpoint byte.
"""

from __future__ import annotations

import dataclasses
import json
import math
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import Corpus
from .encoder import EncoderConfig, EncoderParams, embedding_matrix, features_matrix
from .evaluation import macro_metrics
from .model import (
    TASKS,
    TASK_NUM_CLASSES,
    HeadParams,
    ModelConfig,
    ModelParams,
    batch_forward,
    batch_loss_and_grads,
    gold_indices,
    init_model_params,
    params_to_dict,
)

CHECKPOINT_MAGIC = b"HTCK"
CHECKPOINT_FORMAT_VERSION = 1

# Weight decay skips biases and layer-norm gain/bias vectors.
_NO_DECAY = ("b1", "b2", "ln_gain", "ln_bias")


@dataclass(frozen=True)
class TrainConfig:
    peak_lr: float
    batch_size: int = 16
    warmup_steps: int = 500
    epochs: int = 10
    evals_per_epoch: int = 4
    weight_decay: float = 0.01
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    task_mask: tuple[str, ...] = TASKS

    def __post_init__(self):
        if self.peak_lr <= 0:
            raise ValueError("peak_lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        # epochs=0 is legal so finetuning can be a no-op; train() requires >= 1.
        if self.epochs < 0 or self.warmup_steps < 0:
            raise ValueError("epochs and warmup_steps must be non-negative")
        if self.evals_per_epoch < 1:
            raise ValueError("evals_per_epoch must be >= 1")
        mask = tuple(t for t in TASKS if t in tuple(self.task_mask))
        if not mask or len(mask) != len(tuple(self.task_mask)):
            raise ValueError(f"task_mask must be a nonempty subset of {TASKS}")
        object.__setattr__(self, "task_mask", mask)


@dataclass(frozen=True)
class GridSpec:
    batch_sizes: tuple[int, ...] = (2, 4, 8, 16)
    peak_lrs: tuple[float, ...] = (1e-5, 5e-6, 1e-6)

    def __post_init__(self):
        if not self.batch_sizes or not self.peak_lrs:
            raise ValueError("grid axes must be nonempty")
        object.__setattr__(self, "batch_sizes", tuple(self.batch_sizes))
        object.__setattr__(self, "peak_lrs", tuple(self.peak_lrs))

    def cells(self) -> list[tuple[int, float]]:
        return [(bs, lr) for bs in self.batch_sizes for lr in self.peak_lrs]


@dataclass
class Checkpoint:
    """Model parameters plus the full config echo and selection metadata."""

    params: ModelParams
    train_config: TrainConfig
    model_config: ModelConfig
    subtask: str
    dev_f1_macro: float
    step: int
    format_version: int = CHECKPOINT_FORMAT_VERSION

    def __post_init__(self):
        if not 0.0 <= self.dev_f1_macro <= 1.0:
            raise ValueError("dev_f1_macro must lie in [0, 1]")


def lr_at(step: int, cfg: TrainConfig, total_steps: int) -> float:
    """Linear warmup to peak_lr over warmup_steps, then linear decay to zero."""
    if total_steps <= cfg.warmup_steps:
        raise ValueError(
            f"total_steps ({total_steps}) must exceed warmup_steps ({cfg.warmup_steps})"
        )
    if not 0 <= step <= total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps}]")
    if step < cfg.warmup_steps:
        return cfg.peak_lr * step / cfg.warmup_steps
    return cfg.peak_lr * (total_steps - step) / (total_steps - cfg.warmup_steps)


@dataclass
class AdamState:
    step: int
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]


def init_adam_state(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        step=0,
        m={n: np.zeros_like(p) for n, p in params.items()},
        v={n: np.zeros_like(p) for n, p in params.items()},
    )


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    cfg: TrainConfig,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """One decoupled-weight-decay Adam update. Mutates params and state in place.

    Weight decay is skipped for bias/gain/layer-norm vectors (see _NO_DECAY).
    """
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    state.step += 1
    bc1 = 1.0 - b1**state.step
    bc2 = 1.0 - b2**state.step
    for name, theta in params.items():
        g = grads[name]
        if g.shape != theta.shape:
            raise ValueError(f"gradient shape mismatch for {name}: {g.shape} vs {theta.shape}")
        if not np.isfinite(float(g.sum())):
            raise ValueError(f"non-finite gradient in tensor {name!r}")
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        denom = np.sqrt(v / bc2)
        denom += eps
        update = m / bc1
        update /= denom
        if cfg.weight_decay != 0.0 and name.split(".")[-1] not in _NO_DECAY:
            update += cfg.weight_decay * theta
        update *= lr
        theta -= update
    return params, state


@dataclass
class TrainResult:
    checkpoints: dict[str, Checkpoint]
    log: list[dict]
    final_params: ModelParams


def _prepare(corpus: Corpus, cfg: ModelConfig):
    """Precompute the feature batch and gold index arrays for a labeled corpus."""
    samples = list(corpus)
    if cfg.encoder.mode == "passthrough":
        feats = embedding_matrix(samples, cfg.encoder)
    else:
        feats = features_matrix(samples, cfg.encoder)
    gold = {t: np.empty(len(samples), dtype=np.intp) for t in TASKS}
    for i, s in enumerate(samples):
        idx = gold_indices(s.gold)
        for t in TASKS:
            gold[t][i] = idx[t]
    return feats, gold


def _dev_f1(feats, gold: dict[str, np.ndarray], params: ModelParams, cfg: ModelConfig):
    probs = batch_forward(feats, params, cfg)
    out = {}
    for task in TASKS:
        pred = probs[task].argmax(axis=1)
        classes = list(range(TASK_NUM_CLASSES[task]))
        out[task] = macro_metrics(list(gold[task]), list(pred), classes).f1
    return out


def _eval_offsets(steps_per_epoch: int, evals_per_epoch: int) -> list[int]:
    # k evenly spaced in-epoch eval points; the last one is the epoch end.
    return sorted({math.ceil(k * steps_per_epoch / evals_per_epoch) for k in range(1, evals_per_epoch + 1)})


def _run_training(
    params: ModelParams,
    train_corpus: Corpus,
    dev_corpus: Corpus,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    run_dir: Optional[Path],
) -> TrainResult:
    for name, c in (("train", train_corpus), ("dev", dev_corpus)):
        if len(c) == 0:
            raise ValueError(f"{name} corpus is empty")
        if not c.fully_labeled():
            raise ValueError(f"{name} corpus must be fully labeled")
    if cfg.epochs < 1:
        raise ValueError("training requires epochs >= 1")

    feats_train, gold_train = _prepare(train_corpus, model_cfg)
    feats_dev, gold_dev = _prepare(dev_corpus, model_cfg)

    n = len(train_corpus)
    steps_per_epoch = math.ceil(n / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    eval_offsets = set(_eval_offsets(steps_per_epoch, cfg.evals_per_epoch))

    flat = params_to_dict(params)
    trainable = {
        name: arr
        for name, arr in flat.items()
        if name == "projection" or name.split(".")[0] in cfg.task_mask
    }
    state = init_adam_state(trainable)
    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))

    best: dict[str, float] = {t: -1.0 for t in cfg.task_mask}
    checkpoints: dict[str, Checkpoint] = {}
    log: list[dict] = []
    if run_dir is not None:
        run_dir = Path(run_dir)
        run_dir.mkdir(parents=True, exist_ok=True)

    step = 0
    for _epoch in range(cfg.epochs):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            step += 1
            batch = perm[start : start + cfg.batch_size]
            lr = lr_at(step, cfg, total_steps)
            loss, grads = batch_loss_and_grads(
                feats_train[batch],
                {t: gold_train[t][batch] for t in cfg.task_mask},
                params,
                model_cfg,
                cfg.task_mask,
            )
            adamw_step(trainable, grads, state, lr, cfg)
            row = {"step": step, "lr": lr, "train_loss": loss}
            step_in_epoch = step - _epoch * steps_per_epoch
            if step_in_epoch in eval_offsets:
                f1 = _dev_f1(feats_dev, gold_dev, params, model_cfg)
                row.update({f"dev_f1_{t}": f1[t] for t in TASKS})
                for task in cfg.task_mask:
                    if f1[task] > best[task]:
                        best[task] = f1[task]
                        ckpt = Checkpoint(
                            params=params.copy(),
                            train_config=cfg,
                            model_config=model_cfg,
                            subtask=task,
                            dev_f1_macro=f1[task],
                            step=step,
                        )
                        checkpoints[task] = ckpt
                        if run_dir is not None:
                            write_checkpoint(ckpt, run_dir / f"checkpoint_{task}.htck")
            log.append(row)

    if run_dir is not None:
        with open(run_dir / "train_log.jsonl", "w", encoding="utf-8") as fh:
            for row in log:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return TrainResult(checkpoints=checkpoints, log=log, final_params=params)


def train(
    train_corpus: Corpus,
    dev_corpus: Corpus,
    model_cfg: ModelConfig,
    cfg: TrainConfig,
    run_dir=None,
) -> TrainResult:
    """Train from a fresh seeded initialization; see _run_training for the loop."""
    params = init_model_params(model_cfg, np.random.SeedSequence([cfg.seed, 0]))
    return _run_training(params, train_corpus, dev_corpus, model_cfg, cfg, run_dir)


def finetune_hsc(
    ckpt: Checkpoint,
    train_corpus: Corpus,
    dev_corpus: Corpus,
    cfg: TrainConfig,
    run_dir=None,
) -> Checkpoint:
    """Continue from a checkpoint on the HSC subtask only.

    Optimizer state is reset and the warmup/decay schedule restarts over the
    finetune run. epochs=0 returns the input checkpoint unchanged.
    """
    if cfg.epochs == 0:
        return ckpt
    cfg = replace(cfg, task_mask=("hsc",))
    result = _run_training(
        ckpt.params.copy(), train_corpus, dev_corpus, ckpt.model_config, cfg, run_dir
    )
    return result.checkpoints["hsc"]


@dataclass
class GridRun:
    index: int
    config: TrainConfig
    result: TrainResult


@dataclass
class GridResult:
    runs: list[GridRun]

    def ranking(self, task: str) -> list[int]:
        """Run indices ranked by dev macro-F1 on `task`, best first (stable)."""
        scored = [
            (run.index, run.result.checkpoints[task].dev_f1_macro)
            for run in self.runs
            if task in run.result.checkpoints
        ]
        return [i for i, _ in sorted(scored, key=lambda x: (-x[1], x[0]))]

    def best_checkpoint(self, task: str) -> Checkpoint:
        return self.runs[self.ranking(task)[0]].result.checkpoints[task]


def grid_search(
    train_corpus: Corpus,
    dev_corpus: Corpus,
    model_cfg: ModelConfig,
    base_cfg: TrainConfig,
    grid: GridSpec = GridSpec(),
    run_dir=None,
) -> GridResult:
    """One independent training run per (batch_size, peak_lr) grid cell.

    Per-run seeds are derived as base seed + run index, so cells are
    reproducible individually and as a set.
    """
    runs = []
    for index, (bs, lr) in enumerate(grid.cells()):
        run_cfg = replace(base_cfg, batch_size=bs, peak_lr=lr, seed=base_cfg.seed + index)
        sub_dir = None if run_dir is None else Path(run_dir) / f"run_{index:02d}"
        result = train(train_corpus, dev_corpus, model_cfg, run_cfg, sub_dir)
        runs.append(GridRun(index=index, config=run_cfg, result=result))
    return GridResult(runs=runs)


# ---------------------------------------------------------------------------
# Checkpoint container: HTCK magic, version, JSON metadata, named tensors.
# ---------------------------------------------------------------------------


def _config_to_json(train_cfg: TrainConfig, model_cfg: ModelConfig) -> dict:
    return {
        "train": dataclasses.asdict(train_cfg),
        "model": dataclasses.asdict(model_cfg),
    }


def train_config_from_dict(d: dict) -> TrainConfig:
    d = dict(d)
    d["task_mask"] = tuple(d["task_mask"])
    return TrainConfig(**d)


def model_config_from_dict(d: dict) -> ModelConfig:
    enc = dict(d["encoder"])
    enc["word_ngrams"] = tuple(enc["word_ngrams"])
    enc["char_ngrams"] = tuple(enc["char_ngrams"])
    return ModelConfig(
        encoder=EncoderConfig(**enc),
        hidden_dim=d["hidden_dim"],
        layer_norm_eps=d["layer_norm_eps"],
    )


def write_checkpoint(ckpt: Checkpoint, path) -> None:
    meta = {
        "format_version": ckpt.format_version,
        "subtask": ckpt.subtask,
        "dev_f1_macro": ckpt.dev_f1_macro,
        "step": ckpt.step,
        "config": _config_to_json(ckpt.train_config, ckpt.model_config),
    }
    meta_bytes = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tensors = params_to_dict(ckpt.params)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<I", ckpt.format_version))
        fh.write(struct.pack("<Q", len(meta_bytes)))
        fh.write(meta_bytes)
        fh.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.ascontiguousarray(tensors[name], dtype="<f8")
            name_bytes = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_bytes)))
            fh.write(name_bytes)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            fh.write(arr.tobytes())


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != CHECKPOINT_FORMAT_VERSION:
            raise ValueError(f"{path}: unsupported checkpoint format version {version}")
        (meta_len,) = struct.unpack("<Q", fh.read(8))
        meta = json.loads(fh.read(meta_len).decode("utf-8"))
        (n_tensors,) = struct.unpack("<I", fh.read(4))
        tensors: dict[str, np.ndarray] = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack("<H", fh.read(2))
            name = fh.read(name_len).decode("utf-8")
            (ndim,) = struct.unpack("<B", fh.read(1))
            shape = struct.unpack(f"<{ndim}Q", fh.read(8 * ndim))
            count = int(np.prod(shape)) if ndim else 1
            data = np.frombuffer(fh.read(8 * count), dtype="<f8").reshape(shape)
            tensors[name] = data.copy()

    heads = {}
    for task in TASKS:
        heads[task] = HeadParams(
            **{k: tensors[f"{task}.{k}"] for k in ("W1", "b1", "ln_gain", "ln_bias", "W2", "b2")}
        )
    params = ModelParams(
        encoder=EncoderParams(projection=tensors.get("projection")),
        offd=heads["offd"],
        hsd=heads["hsd"],
        hsc=heads["hsc"],
    )
    return Checkpoint(
        params=params,
        train_config=train_config_from_dict(meta["config"]["train"]),
        model_config=model_config_from_dict(meta["config"]["model"]),
        subtask=meta["subtask"],
        dev_f1_macro=meta["dev_f1_macro"],
        step=meta["step"],
        format_version=meta["format_version"],
    )
