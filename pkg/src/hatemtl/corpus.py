"""Corpus ingestion, text normalization, stratified splitting, and class statistics.

Labeled text corpora carry a three-level label per sample: an offensive flag,
a hate flag, and a fine-grained hate category. The label hierarchy is
enforced everywhere: hate implies offensive, and a non-None category is
equivalent to the hate flag being set.
"""

from __future__ import annotations

import json
import re
import warnings
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np


class HsCategory(IntEnum):
    """Fine-grained hate-speech category. NONE means "not hate speech".

    The declaration order is the canonical ordering used for class indexing
    and tie-breaking throughout the toolkit.
    """

    NONE = 0
    GENDER = 1
    RACE = 2
    IDEOLOGY = 3
    SOCIAL_CLASS = 4
    RELIGION = 5
    DISABILITY = 6


CATEGORY_TOKENS = {
    HsCategory.NONE: "none",
    HsCategory.GENDER: "gender",
    HsCategory.RACE: "race",
    HsCategory.IDEOLOGY: "ideology",
    HsCategory.SOCIAL_CLASS: "social_class",
    HsCategory.RELIGION: "religion",
    HsCategory.DISABILITY: "disability",
}
TOKEN_CATEGORIES = {v: k for k, v in CATEGORY_TOKENS.items()}

SPLIT_TAGS = ("train", "dev", "test", "unsplit")


class CorpusFormatError(ValueError):
    """Raised for malformed corpus files or label-hierarchy violations."""


@dataclass(frozen=True)
class LabelTriple:
    """Gold label for one sample: offensive flag, hate flag, hate category."""

    offensive: bool
    hate: bool
    category: HsCategory

    def __post_init__(self):
        if self.hate and not self.offensive:
            raise CorpusFormatError("hierarchy violation: hate=true requires offensive=true")
        if (self.category != HsCategory.NONE) != self.hate:
            raise CorpusFormatError(
                "hierarchy violation: category must be none iff hate=false"
            )


@dataclass(frozen=True)
class Sample:
    """One text item. `text` is always the normalized form of `raw_text`."""

    id: str
    raw_text: str
    text: str
    gold: Optional[LabelTriple] = None
    embedding: Optional[np.ndarray] = None

    @classmethod
    def make(cls, id: str, raw_text: str, gold: Optional[LabelTriple] = None) -> "Sample":
        return cls(id=id, raw_text=raw_text, text=normalize_text(raw_text), gold=gold)


@dataclass(frozen=True)
class Corpus:
    samples: tuple[Sample, ...]
    split_tag: str = "unsplit"

    def __post_init__(self):
        if self.split_tag not in SPLIT_TAGS:
            raise ValueError(f"unknown split tag {self.split_tag!r}")
        object.__setattr__(self, "samples", tuple(self.samples))
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise CorpusFormatError(f"duplicate sample id {s.id!r}")
            seen.add(s.id)

    def __len__(self) -> int:
        return len(self.samples)

    def __iter__(self) -> Iterator[Sample]:
        return iter(self.samples)

    def fully_labeled(self) -> bool:
        return all(s.gold is not None for s in self.samples)


# Mention runs: one or more @-mentions separated only by whitespace collapse
# to a single @USER token. URLs are anything scheme://... or www.-prefixed.
_MENTION_RUN_RE = re.compile(r"@\w+(?:\s+@\w+)*")
_URL_RE = re.compile(r"\b(?:[a-zA-Z][a-zA-Z0-9+.\-]*://\S+|www\.\S+)")
_LINEBREAK_RE = re.compile(r"\r\n|[\r\n\v\f  ]")
_WS_RE = re.compile(r"\s+")


def normalize_text(raw: str) -> str:
    """Normalize raw text: @USER / URL / <LF> placeholders, whitespace collapse.

    Total and idempotent. URLs are rewritten before mentions so that an
    @-prefixed URL ("@www.x") collapses to @USER within one pass; mention
    runs are collapsed before line breaks are rewritten, so a run spanning a
    line break still becomes one @USER.
    """
    text = _URL_RE.sub("URL", raw)
    text = _MENTION_RUN_RE.sub("@USER", text)
    text = _LINEBREAK_RE.sub(" <LF> ", text)
    text = _WS_RE.sub(" ", text)
    return text.strip()


def _parse_bool_flag(value, column: str, lineno: int) -> bool:
    # Accepts 0/1 as str, int, or JSON bool.
    if isinstance(value, bool):
        return value
    if str(value).strip() not in ("0", "1"):
        raise CorpusFormatError(f"line {lineno}: {column} must be 0 or 1, got {value!r}")
    return str(value).strip() == "1"


def _parse_category(value: str, lineno: int) -> HsCategory:
    try:
        return TOKEN_CATEGORIES[value.strip().lower()]
    except KeyError:
        raise CorpusFormatError(f"line {lineno}: unknown category {value!r}") from None


def _gold_from_parts(offensive: bool, hate: bool, category: HsCategory, lineno: int) -> LabelTriple:
    try:
        return LabelTriple(offensive=offensive, hate=hate, category=category)
    except CorpusFormatError as exc:
        raise CorpusFormatError(f"{exc} at line {lineno}") from None


TSV_COLUMNS = ("id", "text", "offensive", "hate", "category")


def _load_tsv(path: Path, on_violation: str) -> list[Sample]:
    samples: list[Sample] = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        cols = header.split("\t")
        if cols != list(TSV_COLUMNS) and cols != ["id", "text"]:
            raise CorpusFormatError(
                f"{path}: bad TSV header {cols!r}, expected {list(TSV_COLUMNS)} or ['id', 'text']"
            )
        labeled = len(cols) == 5
        for lineno, line in enumerate(fh, start=2):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != len(cols):
                raise CorpusFormatError(
                    f"line {lineno}: expected {len(cols)} fields, got {len(parts)}"
                )
            gold = None
            if labeled:
                offensive = _parse_bool_flag(parts[2], "offensive", lineno)
                hate = _parse_bool_flag(parts[3], "hate", lineno)
                category = _parse_category(parts[4], lineno)
                try:
                    gold = _gold_from_parts(offensive, hate, category, lineno)
                except CorpusFormatError:
                    if on_violation == "drop":
                        warnings.warn(f"{path}: dropping row at line {lineno} (hierarchy violation)")
                        continue
                    raise
            samples.append(Sample.make(id=parts[0], raw_text=parts[1], gold=gold))
    return samples


def _load_jsonl(path: Path, on_violation: str) -> list[Sample]:
    samples: list[Sample] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
            if not isinstance(row, dict) or "id" not in row or "text" not in row:
                raise CorpusFormatError(f"line {lineno}: object must carry id and text keys")
            gold = None
            if "offensive" in row or "hate" in row or "category" in row:
                if "offensive" not in row or "hate" not in row:
                    raise CorpusFormatError(
                        f"line {lineno}: partial labels; offensive and hate are both required"
                    )
                offensive = _parse_bool_flag(row["offensive"], "offensive", lineno)
                hate = _parse_bool_flag(row["hate"], "hate", lineno)
                category = _parse_category(str(row.get("category", "none")), lineno)
                try:
                    gold = _gold_from_parts(offensive, hate, category, lineno)
                except CorpusFormatError:
                    if on_violation == "drop":
                        warnings.warn(f"{path}: dropping row at line {lineno} (hierarchy violation)")
                        continue
                    raise
            samples.append(Sample.make(id=str(row["id"]), raw_text=str(row["text"]), gold=gold))
    return samples


def load_corpus(path, format: str = None, on_violation: str = "reject") -> Corpus:
    """Load a corpus from TSV or JSONL.

    `format` defaults from the file suffix. `on_violation` controls what
    happens to rows breaking the label hierarchy: "reject" (default) fails
    the whole file, "drop" skips the row with a warning.
    """
    path = Path(path)
    if on_violation not in ("reject", "drop"):
        raise ValueError(f"unknown violation policy {on_violation!r}")
    if format is None:
        format = "jsonl" if path.suffix == ".jsonl" else "tsv"
    if format == "tsv":
        samples = _load_tsv(path, on_violation)
    elif format == "jsonl":
        samples = _load_jsonl(path, on_violation)
    else:
        raise ValueError(f"unknown corpus format {format!r}")
    return Corpus(samples=tuple(samples))


def save_corpus(corpus: Corpus, path, format: str = None) -> None:
    """Write a corpus to TSV or JSONL. Normalized text is written out."""
    path = Path(path)
    if format is None:
        format = "jsonl" if path.suffix == ".jsonl" else "tsv"
    labeled = corpus.fully_labeled()
    with open(path, "w", encoding="utf-8") as fh:
        if format == "tsv":
            fh.write("\t".join(TSV_COLUMNS if labeled else TSV_COLUMNS[:2]) + "\n")
            for s in corpus:
                if labeled:
                    g = s.gold
                    fh.write(
                        f"{s.id}\t{s.text}\t{int(g.offensive)}\t{int(g.hate)}\t"
                        f"{CATEGORY_TOKENS[g.category]}\n"
                    )
                else:
                    fh.write(f"{s.id}\t{s.text}\n")
        elif format == "jsonl":
            for s in corpus:
                row = {"id": s.id, "text": s.text}
                if s.gold is not None:
                    row["offensive"] = int(s.gold.offensive)
                    row["hate"] = int(s.gold.hate)
                    row["category"] = CATEGORY_TOKENS[s.gold.category]
                fh.write(json.dumps(row, ensure_ascii=False) + "\n")
        else:
            raise ValueError(f"unknown corpus format {format!r}")


def _stratum_key(sample: Sample) -> str:
    g = sample.gold
    if g.category != HsCategory.NONE:
        return CATEGORY_TOKENS[g.category]
    return "offensive" if g.offensive else "clean"


def _largest_remainder(n: int, fractions: Sequence[float]) -> list[int]:
    exact = [n * f for f in fractions]
    counts = [int(e) for e in exact]
    remainders = sorted(
        range(len(fractions)), key=lambda i: (exact[i] - counts[i], fractions[i]), reverse=True
    )
    for i in remainders[: n - sum(counts)]:
        counts[i] += 1
    return counts


def _allocate(n: int, fractions: Sequence[float]) -> list[int]:
    counts = _largest_remainder(n, fractions)
    if n >= 3:
        # Rare strata must land in every split; steal from the largest split.
        for i in range(3):
            if counts[i] == 0:
                counts[int(np.argmax(counts))] -= 1
                counts[i] += 1
    return counts


def split_corpus(
    corpus: Corpus,
    fractions: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
    strategy: str = "stratified",
) -> tuple[Corpus, Corpus, Corpus]:
    """Deterministic train/dev/test split.

    The default strategy stratifies by hate category, then by the offensive
    flag among category-None samples, so rare classes show up in every split
    (guaranteed for strata of size >= 3). A single-sample stratum goes to
    train with a warning. `strategy="uniform"` shuffles globally instead.
    """
    if len(corpus) == 0:
        raise ValueError("cannot split an empty corpus")
    if not corpus.fully_labeled():
        raise ValueError("split requires every sample to carry a gold label")
    if any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"fractions must be positive and sum to 1, got {fractions}")
    if strategy not in ("stratified", "uniform"):
        raise ValueError(f"unknown split strategy {strategy!r}")

    rng = np.random.default_rng(seed)
    if strategy == "uniform":
        strata = {"all": list(range(len(corpus)))}
    else:
        strata = {}
        for i, s in enumerate(corpus):
            strata.setdefault(_stratum_key(s), []).append(i)

    assigned: list[set[int]] = [set(), set(), set()]
    for key in sorted(strata):
        idx = np.array(strata[key])
        rng.shuffle(idx)
        n = len(idx)
        if n == 1 and strategy == "stratified":
            warnings.warn(f"stratum {key!r} has a single sample; placing it in train")
            counts = [1, 0, 0]
        else:
            counts = _allocate(n, fractions)
        offsets = np.cumsum([0] + counts)
        for part in range(3):
            assigned[part].update(int(j) for j in idx[offsets[part] : offsets[part + 1]])

    tags = ("train", "dev", "test")
    return tuple(
        Corpus(
            samples=tuple(s for i, s in enumerate(corpus) if i in assigned[part]),
            split_tag=tags[part],
        )
        for part in range(3)
    )


@dataclass(frozen=True)
class ClassStats:
    """Per-class counts over a labeled corpus. Hate counts nest inside offensive."""

    total: int
    clean: int
    offensive: int
    hate: int
    categories: dict[HsCategory, int]

    def percentage(self, count: int) -> float:
        return 100.0 * count / self.total

    def rows(self) -> list[tuple[str, int, float]]:
        """(label, count, percentage) rows in display order."""
        out = [
            ("Clean", self.clean, self.percentage(self.clean)),
            ("Offensive", self.offensive, self.percentage(self.offensive)),
            ("Hate Speech", self.hate, self.percentage(self.hate)),
        ]
        for cat in list(HsCategory)[1:]:
            count = self.categories[cat]
            out.append((f"HS - {CATEGORY_TOKENS[cat]}", count, self.percentage(count)))
        return out


def compute_stats(corpus: Corpus) -> ClassStats:
    """Count clean/offensive/hate and per-category samples."""
    if len(corpus) == 0:
        raise ValueError("cannot compute stats of an empty corpus")
    if not corpus.fully_labeled():
        raise ValueError("stats require every sample to carry a gold label")
    clean = offensive = hate = 0
    categories = {cat: 0 for cat in list(HsCategory)[1:]}
    for s in corpus:
        g = s.gold
        if g.offensive:
            offensive += 1
        else:
            clean += 1
        if g.hate:
            hate += 1
            categories[g.category] += 1
    return ClassStats(
        total=len(corpus), clean=clean, offensive=offensive, hate=hate, categories=categories
    )


def format_stats(stats: ClassStats) -> str:
    """Plain-text class-distribution table with 2-decimal percentages."""
    lines = [f"{'Class':<20}{'# Samples':>12}{'Percentage':>12}"]
    for label, count, pct in stats.rows():
        lines.append(f"{label:<20}{count:>12,}{pct:>11.2f}%")
    lines.append(f"{'Total':<20}{stats.total:>12,}")
    return "\n".join(lines)
