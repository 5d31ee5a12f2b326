"""Sectioned key-value run configuration.

One config file fully determines a run (together with the input corpora):
encoder and head architecture, optimizer settings, and the grid axes. Flags
override file values. Validation problems are collected and reported
together rather than one at a time.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .encoder import EncoderConfig
from .model import ModelConfig
from .training import GridSpec, TrainConfig


class ConfigError(ValueError):
    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n" + "\n".join(f"  - {p}" for p in problems))


@dataclass
class RunConfig:
    seed: int
    model: ModelConfig
    train: TrainConfig
    grid: GridSpec


_DEFAULTS = {
    "run": {"seed": "0"},
    "encoder": {
        "mode": "surrogate",
        "dim": "64",
        "hash_buckets": str(2**18),
        "word_ngrams": "1,2",
        "char_ngrams": "3,4,5",
        "max_tokens": "256",
    },
    "model": {"hidden_dim": "64", "layer_norm_eps": "1e-5"},
    "train": {
        "peak_lr": "",
        "batch_size": "16",
        "warmup_steps": "500",
        "epochs": "10",
        "evals_per_epoch": "4",
        "weight_decay": "0.01",
        "adam_beta1": "0.9",
        "adam_beta2": "0.999",
        "adam_eps": "1e-8",
        "task_mask": "offd,hsd,hsc",
    },
    "grid": {"batch_sizes": "2,4,8,16", "peak_lrs": "1e-5,5e-6,1e-6"},
}


def _int_tuple(raw: str) -> tuple[int, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(int(x) for x in raw.split(","))


def _float_tuple(raw: str) -> tuple[float, ...]:
    raw = raw.strip()
    if not raw:
        return ()
    return tuple(float(x) for x in raw.split(","))


def load_run_config(path=None, overrides: Optional[dict[str, str]] = None) -> RunConfig:
    """Parse a run config file, apply flag overrides, validate everything.

    `overrides` maps "section.key" to a raw string value, e.g.
    {"train.peak_lr": "0.05", "run.seed": "3"}.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    parser.read_dict(_DEFAULTS)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError([f"config file not found: {path}"])
        read = parser.read(path)
        if not read:
            raise ConfigError([f"could not parse config file: {path}"])
    for dotted, value in (overrides or {}).items():
        section, _, key = dotted.partition(".")
        if not parser.has_section(section) or key not in _DEFAULTS.get(section, {}):
            raise ConfigError([f"unknown config key {dotted!r}"])
        parser.set(section, key, value)

    problems: list[str] = []

    def grab(section: str, key: str, conv, required: bool = True):
        raw = parser.get(section, key, fallback="").strip()
        if raw == "":
            if required:
                problems.append(f"{section}.{key} is required")
            return None
        try:
            return conv(raw)
        except (ValueError, TypeError):
            problems.append(f"{section}.{key}: cannot parse {raw!r}")
            return None

    seed = grab("run", "seed", int)
    mode = grab("encoder", "mode", str)
    dim = grab("encoder", "dim", int)
    hash_buckets = grab("encoder", "hash_buckets", int)
    word_ngrams = grab("encoder", "word_ngrams", _int_tuple, required=False) or ()
    char_ngrams = grab("encoder", "char_ngrams", _int_tuple, required=False) or ()
    max_tokens = grab("encoder", "max_tokens", int)
    hidden_dim = grab("model", "hidden_dim", int)
    ln_eps = grab("model", "layer_norm_eps", float)
    peak_lr = grab("train", "peak_lr", float)
    batch_size = grab("train", "batch_size", int)
    warmup = grab("train", "warmup_steps", int)
    epochs = grab("train", "epochs", int)
    evals = grab("train", "evals_per_epoch", int)
    weight_decay = grab("train", "weight_decay", float)
    beta1 = grab("train", "adam_beta1", float)
    beta2 = grab("train", "adam_beta2", float)
    adam_eps = grab("train", "adam_eps", float)
    task_mask = grab("train", "task_mask", lambda s: tuple(t.strip() for t in s.split(",") if t.strip()))
    batch_sizes = grab("grid", "batch_sizes", _int_tuple)
    peak_lrs = grab("grid", "peak_lrs", _float_tuple)

    if problems:
        raise ConfigError(problems)

    try:
        encoder = EncoderConfig(
            mode=mode,
            dim=dim,
            hash_buckets=hash_buckets,
            word_ngrams=word_ngrams,
            char_ngrams=char_ngrams,
            max_tokens=max_tokens,
            seed=seed,
        )
    except ValueError as exc:
        problems.append(f"encoder: {exc}")
        encoder = None
    try:
        train = TrainConfig(
            peak_lr=peak_lr,
            batch_size=batch_size,
            warmup_steps=warmup,
            epochs=epochs,
            evals_per_epoch=evals,
            weight_decay=weight_decay,
            adam_beta1=beta1,
            adam_beta2=beta2,
            adam_eps=adam_eps,
            seed=seed,
            task_mask=task_mask,
        )
    except ValueError as exc:
        problems.append(f"train: {exc}")
        train = None
    try:
        grid = GridSpec(batch_sizes=batch_sizes, peak_lrs=peak_lrs)
    except ValueError as exc:
        problems.append(f"grid: {exc}")
        grid = None

    if problems:
        raise ConfigError(problems)
    model = ModelConfig(encoder=encoder, hidden_dim=hidden_dim, layer_norm_eps=ln_eps)
    return RunConfig(seed=seed, model=model, train=train, grid=grid)
