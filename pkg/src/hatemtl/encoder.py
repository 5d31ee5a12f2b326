"""Shared text representation: hashed-n-gram surrogate encoder or embedding passthrough.

The surrogate path maps a sample to a fixed-width vector by extracting word
and character n-grams, feature-hashing them with a seeded 64-bit hash plus a
sign hash, L2-normalizing the counts, and projecting through a trainable
dense matrix. The passthrough path forwards precomputed embedding vectors
unchanged, so externally produced representations run through the identical
head/ensemble/correction stack.
"""

from __future__ import annotations

import functools
import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import sparse

from .corpus import Corpus, Sample


@dataclass(frozen=True)
class EncoderConfig:
    mode: str = "surrogate"  # surrogate | passthrough
    dim: int = 64
    hash_buckets: int = 2**18
    word_ngrams: tuple[int, ...] = (1, 2)
    char_ngrams: tuple[int, ...] = (3, 4, 5)
    max_tokens: int = 256
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("surrogate", "passthrough"):
            raise ValueError(f"unknown encoder mode {self.mode!r}")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        if self.hash_buckets < self.dim:
            raise ValueError("hash_buckets must be >= dim")
        object.__setattr__(self, "word_ngrams", tuple(self.word_ngrams))
        object.__setattr__(self, "char_ngrams", tuple(self.char_ngrams))


@dataclass(frozen=True)
class FeatureVector:
    """Sparse bucket->weight map; L2-normalized counts with hashed signs."""

    indices: np.ndarray  # int64, sorted, unique
    values: np.ndarray  # float64
    size: int

    def to_dense(self) -> np.ndarray:
        dense = np.zeros(self.size)
        dense[self.indices] = self.values
        return dense


@dataclass
class EncoderParams:
    """Trainable projection for the surrogate encoder; None in passthrough mode."""

    projection: Optional[np.ndarray] = None  # (hash_buckets, dim)


def tokenize(text: str, max_tokens: int) -> list[str]:
    """Lowercased whitespace tokens, truncated to the first max_tokens."""
    return text.lower().split()[:max_tokens]


@functools.lru_cache(maxsize=1 << 20)
def _hash64(key: bytes, seed: int) -> int:
    digest = hashlib.blake2b(key, digest_size=8, key=seed.to_bytes(8, "little", signed=True)).digest()
    return int.from_bytes(digest, "little")


def _ngrams(tokens: Sequence[str], cfg: EncoderConfig) -> list[str]:
    grams: list[str] = []
    for n in cfg.word_ngrams:
        grams.extend("w%d:%s" % (n, " ".join(tokens[i : i + n])) for i in range(len(tokens) - n + 1))
    joined = " ".join(tokens)
    for n in cfg.char_ngrams:
        grams.extend("c%d:%s" % (n, joined[i : i + n]) for i in range(len(joined) - n + 1))
    return grams


def hash_features(tokens: Sequence[str], cfg: EncoderConfig) -> FeatureVector:
    """Hash word/char n-grams into signed buckets and L2-normalize the counts."""
    accum: dict[int, float] = {}
    for gram in _ngrams(tokens, cfg):
        h = _hash64(gram.encode("utf-8"), cfg.seed)
        bucket = h % cfg.hash_buckets
        sign = 1.0 if h >> 63 else -1.0
        accum[bucket] = accum.get(bucket, 0.0) + sign
    if not accum:
        return FeatureVector(
            indices=np.empty(0, dtype=np.int64), values=np.empty(0), size=cfg.hash_buckets
        )
    indices = np.array(sorted(accum), dtype=np.int64)
    values = np.array([accum[int(i)] for i in indices])
    norm = float(np.linalg.norm(values))
    if norm > 0:
        values = values / norm
    return FeatureVector(indices=indices, values=values, size=cfg.hash_buckets)


def featurize(sample: Sample, cfg: EncoderConfig) -> FeatureVector:
    return hash_features(tokenize(sample.text, cfg.max_tokens), cfg)


def features_matrix(samples: Sequence[Sample], cfg: EncoderConfig) -> sparse.csr_matrix:
    """Stack per-sample feature vectors into a CSR matrix (n_samples x buckets)."""
    indptr = [0]
    indices: list[np.ndarray] = []
    data: list[np.ndarray] = []
    for s in samples:
        fv = featurize(s, cfg)
        indices.append(fv.indices)
        data.append(fv.values)
        indptr.append(indptr[-1] + len(fv.indices))
    return sparse.csr_matrix(
        (
            np.concatenate(data) if data else np.empty(0),
            np.concatenate(indices) if indices else np.empty(0, dtype=np.int64),
            np.array(indptr, dtype=np.int64),
        ),
        shape=(len(samples), cfg.hash_buckets),
    )


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator) -> EncoderParams:
    if cfg.mode == "passthrough":
        return EncoderParams(projection=None)
    # Input feature vectors have unit L2 norm, so unit-variance entries give
    # roughly unit-variance representations.
    return EncoderParams(projection=rng.standard_normal((cfg.hash_buckets, cfg.dim)))


def embedding_matrix(samples: Sequence[Sample], cfg: EncoderConfig) -> np.ndarray:
    """Stack attached embeddings for passthrough mode; validates presence and width."""
    out = np.empty((len(samples), cfg.dim))
    for i, s in enumerate(samples):
        if s.embedding is None:
            raise ValueError(f"sample {s.id!r} has no attached embedding (passthrough mode)")
        emb = np.asarray(s.embedding, dtype=float)
        if emb.shape != (cfg.dim,):
            raise ValueError(
                f"sample {s.id!r}: embedding width {emb.shape} does not match dim={cfg.dim}"
            )
        out[i] = emb
    return out


def encode(sample: Sample, params: EncoderParams, cfg: EncoderConfig) -> np.ndarray:
    """Map one sample to its shared representation vector of width cfg.dim."""
    if cfg.mode == "passthrough":
        return embedding_matrix([sample], cfg)[0]
    fv = featurize(sample, cfg)
    if len(fv.indices) == 0:
        return np.zeros(cfg.dim)
    return fv.values @ params.projection[fv.indices]


def attach_embeddings(corpus: Corpus, path) -> Corpus:
    """Attach embeddings from a JSONL sidecar ({"id": ..., "embedding": [...]}).

    Every corpus sample must have a row; the first missing id is named in the
    error.
    """
    table: dict[str, np.ndarray] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            if "id" not in row or "embedding" not in row:
                raise ValueError(f"{path}: line {lineno} must carry id and embedding keys")
            table[str(row["id"])] = np.asarray(row["embedding"], dtype=float)
    samples = []
    for s in corpus:
        if s.id not in table:
            raise ValueError(f"no embedding for sample id {s.id!r} in {path}")
        samples.append(
            Sample(id=s.id, raw_text=s.raw_text, text=s.text, gold=s.gold, embedding=table[s.id])
        )
    return Corpus(samples=tuple(samples), split_tag=corpus.split_tag)
