"""Corpus handling walkthrough: normalization, class statistics, stratified splits.

Run: python demos/01_corpus_and_stats.py
"""

from hatemtl import compute_stats, normalize_text, split_corpus
from hatemtl.corpus import format_stats
from hatemtl.synthetic import generate_corpus

# -- Text normalization ------------------------------------------------------
# Mention runs collapse to a single @USER, URLs become URL, line breaks
# become <LF>, and whitespace is tidied. Normalization is idempotent.
for raw in (
    "@alice @bob did you see this?",
    "breaking: https://example.org/story\nmore below",
    "   spaced    out\ttext   ",
):
    print(f"{raw!r:55} -> {normalize_text(raw)!r}")
print()

# -- A synthetic labeled corpus ----------------------------------------------
# Keyword-driven generation that respects the label hierarchy: hate implies
# offensive, and a non-None category appears iff the hate flag is set.
corpus = generate_corpus(n=2000, seed=42)
print(f"generated {len(corpus)} samples; first: {corpus.samples[0].text!r}")
print()

# -- Class statistics ---------------------------------------------------------
print(format_stats(compute_stats(corpus)))
print()

# -- Stratified split ----------------------------------------------------------
# Stratified by category (then by the offensive flag among category-None
# samples), so rare classes land in every split.
from hatemtl import HsCategory

train, dev, test = split_corpus(corpus, (0.7, 0.1, 0.2), seed=42)
for part in (train, dev, test):
    stats = compute_stats(part)
    print(
        f"{part.split_tag:<6} n={len(part):<5} hate={stats.hate:<4} "
        f"rarest counts: religion={stats.categories[HsCategory.RELIGION]}, "
        f"disability={stats.categories[HsCategory.DISABILITY]}"
    )
