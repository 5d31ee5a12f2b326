"""Three task-specific classification heads over one shared representation.

Each head is dense(hidden) -> GELU -> layer norm -> linear(num_classes).
The joint objective is the sum of per-head negative log-likelihoods. The
backward pass is written out explicitly for this fixed architecture; no
autodiff framework is involved.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import sparse, special

from .corpus import LabelTriple, Sample
from .encoder import EncoderConfig, EncoderParams, encode, init_encoder_params

TASKS = ("offd", "hsd", "hsc")
TASK_NUM_CLASSES = {"offd": 2, "hsd": 2, "hsc": 7}

_SQRT2 = np.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / np.sqrt(2.0 * np.pi)
PROB_FLOOR = 1e-12


def gelu(x):
    """Exact GELU, x * Phi(x), with Phi the standard normal CDF."""
    x = np.asarray(x, dtype=float)
    out = x * 0.5 * (1.0 + special.erf(x / _SQRT2))
    return float(out) if out.ndim == 0 else out


def gelu_grad(x):
    """d/dx [x * Phi(x)] = Phi(x) + x * phi(x)."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * (1.0 + special.erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)
    return float(out) if out.ndim == 0 else out


def layer_norm(v: np.ndarray, gain: np.ndarray, bias: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """Layer normalization with biased (divide-by-n) variance."""
    v = np.asarray(v, dtype=float)
    mean = v.mean()
    var = ((v - mean) ** 2).mean()
    return gain * (v - mean) / np.sqrt(var + eps) + bias


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax (works for 1-D or 2-D input)."""
    z = np.asarray(logits, dtype=float)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass(frozen=True)
class HeadConfig:
    input_dim: int
    hidden_dim: int
    num_classes: int
    layer_norm_eps: float = 1e-5

    def __post_init__(self):
        if self.num_classes not in (2, 7):
            raise ValueError("num_classes must be 2 or 7")
        if self.hidden_dim < 1:
            raise ValueError("hidden_dim must be >= 1")


@dataclass
class HeadParams:
    W1: np.ndarray  # (input_dim, hidden_dim)
    b1: np.ndarray  # (hidden_dim,)
    ln_gain: np.ndarray  # (hidden_dim,)
    ln_bias: np.ndarray  # (hidden_dim,)
    W2: np.ndarray  # (hidden_dim, num_classes)
    b2: np.ndarray  # (num_classes,)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture settings shared by all heads plus the encoder settings."""

    encoder: EncoderConfig = EncoderConfig()
    hidden_dim: int = 64
    layer_norm_eps: float = 1e-5

    def head_config(self, task: str) -> HeadConfig:
        return HeadConfig(
            input_dim=self.encoder.dim,
            hidden_dim=self.hidden_dim,
            num_classes=TASK_NUM_CLASSES[task],
            layer_norm_eps=self.layer_norm_eps,
        )


@dataclass
class ModelParams:
    encoder: EncoderParams
    offd: HeadParams
    hsd: HeadParams
    hsc: HeadParams

    def head(self, task: str) -> HeadParams:
        return getattr(self, task)

    def copy(self) -> "ModelParams":
        return copy.deepcopy(self)


def init_head_params(cfg: HeadConfig, rng: np.random.Generator) -> HeadParams:
    s1 = np.sqrt(2.0 / (cfg.input_dim + cfg.hidden_dim))
    s2 = np.sqrt(2.0 / (cfg.hidden_dim + cfg.num_classes))
    return HeadParams(
        W1=rng.standard_normal((cfg.input_dim, cfg.hidden_dim)) * s1,
        b1=np.zeros(cfg.hidden_dim),
        ln_gain=np.ones(cfg.hidden_dim),
        ln_bias=np.zeros(cfg.hidden_dim),
        W2=rng.standard_normal((cfg.hidden_dim, cfg.num_classes)) * s2,
        b2=np.zeros(cfg.num_classes),
    )


def init_model_params(cfg: ModelConfig, seed: int) -> ModelParams:
    rng = np.random.default_rng(seed)
    enc = init_encoder_params(cfg.encoder, rng)
    heads = {task: init_head_params(cfg.head_config(task), rng) for task in TASKS}
    return ModelParams(encoder=enc, **heads)


def params_to_dict(params: ModelParams) -> dict[str, np.ndarray]:
    """Flat name->tensor view sharing the underlying arrays."""
    out: dict[str, np.ndarray] = {}
    if params.encoder.projection is not None:
        out["projection"] = params.encoder.projection
    for task in TASKS:
        hp = params.head(task)
        for name in ("W1", "b1", "ln_gain", "ln_bias", "W2", "b2"):
            out[f"{task}.{name}"] = getattr(hp, name)
    return out


@dataclass(frozen=True)
class ProbTriple:
    """One probability distribution per task head.

    The hsc vector follows the canonical category order with None first.
    """

    offd: np.ndarray
    hsd: np.ndarray
    hsc: np.ndarray

    def __post_init__(self):
        for name, n in TASK_NUM_CLASSES.items():
            vec = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, vec)
            if vec.shape != (n,):
                raise ValueError(f"{name} distribution must have {n} entries, got {vec.shape}")
            if vec.min() < 0 or abs(vec.sum() - 1.0) > 1e-6:
                raise ValueError(f"{name} is not a probability distribution: {vec}")

    def probs(self, task: str) -> np.ndarray:
        return getattr(self, task)


def _check_head_shapes(h: np.ndarray, p: HeadParams, cfg: HeadConfig) -> None:
    if h.shape[-1] != cfg.input_dim or p.W1.shape != (cfg.input_dim, cfg.hidden_dim):
        raise ValueError(
            f"head dimension mismatch: input {h.shape[-1]}, W1 {p.W1.shape}, "
            f"expected input_dim={cfg.input_dim}, hidden_dim={cfg.hidden_dim}"
        )
    if p.W2.shape != (cfg.hidden_dim, cfg.num_classes):
        raise ValueError(f"head dimension mismatch: W2 {p.W2.shape}")


def _head_forward_batch(H: np.ndarray, p: HeadParams, eps: float):
    """Forward one head over a batch; returns logits and the backward cache."""
    Z1 = H @ p.W1 + p.b1
    A = gelu(Z1)
    mean = A.mean(axis=1, keepdims=True)
    D = A - mean
    var = (D * D).mean(axis=1, keepdims=True)
    istd = 1.0 / np.sqrt(var + eps)
    Xhat = D * istd
    Y = Xhat * p.ln_gain + p.ln_bias
    logits = Y @ p.W2 + p.b2
    return logits, (Z1, Xhat, istd, Y)


def _head_backward(dlogits: np.ndarray, H: np.ndarray, cache, p: HeadParams):
    """Backprop one head; returns (dH, per-tensor grads)."""
    Z1, Xhat, istd, Y = cache
    n = Xhat.shape[1]
    grads = {}
    grads["W2"] = Y.T @ dlogits
    grads["b2"] = dlogits.sum(axis=0)
    dY = dlogits @ p.W2.T
    grads["ln_gain"] = (dY * Xhat).sum(axis=0)
    grads["ln_bias"] = dY.sum(axis=0)
    dXhat = dY * p.ln_gain
    # Layer-norm backward with biased variance.
    dA = (istd / n) * (
        n * dXhat
        - dXhat.sum(axis=1, keepdims=True)
        - Xhat * (dXhat * Xhat).sum(axis=1, keepdims=True)
    )
    dZ1 = dA * gelu_grad(Z1)
    grads["W1"] = H.T @ dZ1
    grads["b1"] = dZ1.sum(axis=0)
    dH = dZ1 @ p.W1.T
    return dH, grads


def head_forward(h: np.ndarray, p: HeadParams, cfg: HeadConfig) -> np.ndarray:
    """Logits for one representation vector through one head."""
    h = np.asarray(h, dtype=float)
    _check_head_shapes(h, p, cfg)
    logits, _ = _head_forward_batch(h[None, :], p, cfg.layer_norm_eps)
    return logits[0]


def _representations(feats, params: ModelParams) -> np.ndarray:
    """Shared representation for a batch: sparse features x projection, or
    precomputed embeddings passed through."""
    if sparse.issparse(feats):
        return feats @ params.encoder.projection
    return np.asarray(feats, dtype=float)


def batch_forward(feats, params: ModelParams, cfg: ModelConfig) -> dict[str, np.ndarray]:
    """Per-task probability matrices (batch x classes) for a feature batch."""
    H = _representations(feats, params)
    out = {}
    for task in TASKS:
        logits, _ = _head_forward_batch(H, params.head(task), cfg.layer_norm_eps)
        out[task] = softmax(logits)
    return out


def model_forward(sample: Sample, params: ModelParams, cfg: ModelConfig) -> ProbTriple:
    """Encode once, run all three heads, softmax each."""
    h = encode(sample, params.encoder, cfg.encoder)
    probs = {
        task: softmax(head_forward(h, params.head(task), cfg.head_config(task)))
        for task in TASKS
    }
    return ProbTriple(**probs)


def gold_indices(gold: LabelTriple) -> dict[str, int]:
    return {
        "offd": int(gold.offensive),
        "hsd": int(gold.hate),
        "hsc": int(gold.category),
    }


def joint_nll(pt: ProbTriple, gold: LabelTriple, task_mask: Sequence[str] = TASKS) -> float:
    """Sum of per-head negative log-likelihoods, restricted to task_mask."""
    idx = gold_indices(gold)
    total = 0.0
    for task in task_mask:
        p = float(pt.probs(task)[idx[task]])
        total -= np.log(max(p, PROB_FLOOR))
    return float(total)


def batch_loss_and_grads(
    feats,
    gold_idx: dict[str, np.ndarray],
    params: ModelParams,
    cfg: ModelConfig,
    task_mask: Sequence[str] = TASKS,
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean joint NLL over a batch and its gradients w.r.t. every trained tensor.

    `feats` is a CSR feature matrix (surrogate mode) or a dense embedding
    matrix (passthrough mode). Heads outside task_mask contribute neither
    loss nor gradients.
    """
    H = _representations(feats, params)
    B = H.shape[0]
    dH = np.zeros_like(H)
    grads: dict[str, np.ndarray] = {}
    loss = 0.0
    for task in TASKS:
        if task not in task_mask:
            continue
        p = params.head(task)
        logits, cache = _head_forward_batch(H, p, cfg.layer_norm_eps)
        probs = softmax(logits)
        rows = np.arange(B)
        gold_p = np.maximum(probs[rows, gold_idx[task]], PROB_FLOOR)
        loss += float(-np.log(gold_p).mean())
        dlogits = probs.copy()
        dlogits[rows, gold_idx[task]] -= 1.0
        dlogits /= B
        dH_task, head_grads = _head_backward(dlogits, H, cache, p)
        dH += dH_task
        for name, g in head_grads.items():
            grads[f"{task}.{name}"] = g
    if sparse.issparse(feats) and params.encoder.projection is not None:
        grads["projection"] = feats.T @ dH
    return loss, grads
