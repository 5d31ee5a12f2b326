"""Synthetic labeled corpora for desk-scale experiments.

Texts are generated from keyword rules that respect the label hierarchy by
construction: offensive samples carry generic insult markers, hate samples
additionally carry keywords of the targeted group, clean samples carry
neither (though some mention target groups neutrally, so the group keyword
alone is not a hate signal).
"""

from __future__ import annotations

import numpy as np

from .corpus import Corpus, HsCategory, LabelTriple, Sample

NEUTRAL_WORDS = (
    "river morning coffee garden music window travel bridge market street "
    "cloud dinner library bicycle forest winter summer letter photo kitchen "
    "mountain station train harbor meadow lantern orchard village theatre "
    "festival painting journal recipe weather holiday neighbor"
).split()

# Generic insult markers: offensive but not targeted at any group.
OFFENSIVE_WORDS = (
    "idiot trash loser pathetic disgusting worthless stupid awful garbage "
    "clown fool moron"
).split()

CATEGORY_WORDS = {
    HsCategory.GENDER: "women men girls boys wives husbands".split(),
    HsCategory.RACE: "foreigners immigrants migrants nationality ethnicity tribe".split(),
    HsCategory.IDEOLOGY: "leftists rightists partisans activists ideologues voters".split(),
    HsCategory.SOCIAL_CLASS: "peasants elites rich poor landlords beggars".split(),
    HsCategory.RELIGION: "believers clerics worshippers pilgrims sect temple".split(),
    HsCategory.DISABILITY: "disabled wheelchair blind deaf autistic illness".split(),
}

# Share of each label in the generated corpus; hate is split over the six
# categories so that even the rarest one is populated at the default size.
LABEL_MIX = [
    (LabelTriple(False, False, HsCategory.NONE), 0.40),
    (LabelTriple(True, False, HsCategory.NONE), 0.25),
    (LabelTriple(True, True, HsCategory.GENDER), 0.10),
    (LabelTriple(True, True, HsCategory.RACE), 0.08),
    (LabelTriple(True, True, HsCategory.IDEOLOGY), 0.06),
    (LabelTriple(True, True, HsCategory.SOCIAL_CLASS), 0.05),
    (LabelTriple(True, True, HsCategory.RELIGION), 0.04),
    (LabelTriple(True, True, HsCategory.DISABILITY), 0.02),
]


def _compose(rng: np.random.Generator, gold: LabelTriple) -> str:
    words = list(rng.choice(NEUTRAL_WORDS, size=rng.integers(5, 11)))
    if gold.offensive:
        words.extend(rng.choice(OFFENSIVE_WORDS, size=rng.integers(1, 3)))
    if gold.hate:
        words.extend(rng.choice(CATEGORY_WORDS[gold.category], size=rng.integers(1, 3)))
    elif not gold.offensive and rng.random() < 0.25:
        # Neutral group mention in clean text: keeps the group keyword from
        # being a sufficient hate signal on its own. Never added to
        # offensive-only samples, where it would collide with real hate.
        cat = HsCategory(int(rng.integers(1, 7)))
        words.append(str(rng.choice(CATEGORY_WORDS[cat])))
    rng.shuffle(words)
    if rng.random() < 0.3:
        words.insert(0, "@USER")
    if rng.random() < 0.1:
        words.append("URL")
    return " ".join(words)


def generate_corpus(n: int = 2000, seed: int = 0) -> Corpus:
    """Generate a labeled synthetic corpus of n samples (all 7 classes present)."""
    rng = np.random.default_rng(seed)
    counts = [int(round(n * share)) for _, share in LABEL_MIX]
    counts[0] += n - sum(counts)
    samples = []
    i = 0
    for (gold, _), count in zip(LABEL_MIX, counts):
        for _ in range(count):
            samples.append(Sample.make(id=f"syn-{i:06d}", raw_text=_compose(rng, gold), gold=gold))
            i += 1
    order = rng.permutation(len(samples))
    return Corpus(samples=tuple(samples[int(j)] for j in order))


def corpus_from_label_counts(
    clean: int, offensive_only: int, categories: dict[HsCategory, int]
) -> Corpus:
    """Minimal corpus with exactly the given per-class counts (fixture helper)."""
    samples = []
    i = 0

    def add(gold: LabelTriple, count: int):
        nonlocal i
        for _ in range(count):
            samples.append(Sample.make(id=f"fix-{i:06d}", raw_text=f"sample {i}", gold=gold))
            i += 1

    add(LabelTriple(False, False, HsCategory.NONE), clean)
    add(LabelTriple(True, False, HsCategory.NONE), offensive_only)
    for cat in list(HsCategory)[1:]:
        add(LabelTriple(True, True, cat), categories.get(cat, 0))
    return Corpus(samples=tuple(samples))
