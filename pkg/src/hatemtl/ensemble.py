"""Probability-product ensembling and argmax prediction.

Distributions from several models are combined per head by element-wise
multiplication; the argmax of the combined distribution is the prediction.
The product is accumulated in log space with a floor so large ensembles
cannot underflow; argmax is unaffected and the combined distribution is
renormalized for output hygiene.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .corpus import CATEGORY_TOKENS, TOKEN_CATEGORIES, HsCategory
from .model import PROB_FLOOR, TASKS, ProbTriple


@dataclass(frozen=True)
class PredictionTriple:
    """Per-head argmax labels plus the (combined, renormalized) distributions."""

    offd: bool
    hsd: bool
    hsc: HsCategory
    source_probs: ProbTriple


def predict(triple: ProbTriple) -> PredictionTriple:
    """Argmax per head; ties break toward the lower class index."""
    return PredictionTriple(
        offd=bool(np.argmax(triple.offd) == 1),
        hsd=bool(np.argmax(triple.hsd) == 1),
        hsc=HsCategory(int(np.argmax(triple.hsc))),
        source_probs=triple,
    )


def ensemble_combine(triples: Sequence[ProbTriple]) -> ProbTriple:
    """Element-wise probability product across models, renormalized per head."""
    if len(triples) == 0:
        raise ValueError("cannot combine an empty list of model outputs")
    combined = {}
    for task in TASKS:
        stack = np.stack([t.probs(task) for t in triples])
        log_prod = np.log(np.maximum(stack, PROB_FLOOR)).sum(axis=0)
        log_prod -= log_prod.max()
        p = np.exp(log_prod)
        combined[task] = p / p.sum()
    return ProbTriple(**combined)


def _row_probs(row: dict, task: str, lineno: int, path) -> np.ndarray:
    if task not in row:
        raise ValueError(f"{path}: line {lineno} missing {task!r} probabilities")
    return np.asarray(row[task], dtype=float)


def read_prediction_file(path):
    """Read a prediction/probability JSONL file.

    Returns (ids, predictions, rules). Plain probability files yield argmax
    predictions and rules=None; corrected files (carrying explicit labels and
    a rule_applied field) yield the stored labels and per-row rules.
    """
    ids: list[str] = []
    preds: list[PredictionTriple] = []
    rules: list[str] = []
    corrected = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            triple = ProbTriple(
                offd=_row_probs(row, "offd", lineno, path),
                hsd=_row_probs(row, "hsd", lineno, path),
                hsc=_row_probs(row, "hsc", lineno, path),
            )
            has_labels = "labels" in row
            if corrected is None:
                corrected = has_labels
            elif corrected != has_labels:
                raise ValueError(f"{path}: line {lineno} mixes labeled and unlabeled rows")
            if has_labels:
                lab = row["labels"]
                preds.append(
                    PredictionTriple(
                        offd=bool(lab["offensive"]),
                        hsd=bool(lab["hate"]),
                        hsc=TOKEN_CATEGORIES[lab["category"]],
                        source_probs=triple,
                    )
                )
                rules.append(row.get("rule_applied", "none"))
            else:
                preds.append(predict(triple))
            ids.append(str(row["id"]))
    return ids, preds, (rules if corrected else None)


def write_prediction_file(
    path,
    ids: Sequence[str],
    triples: Sequence[ProbTriple],
    labels: Optional[Sequence[PredictionTriple]] = None,
    rules: Optional[Sequence[str]] = None,
) -> None:
    """Write probability rows; include explicit labels/rule fields when given."""
    with open(path, "w", encoding="utf-8") as fh:
        for i, (sid, t) in enumerate(zip(ids, triples)):
            row = {
                "id": sid,
                "offd": [float(x) for x in t.offd],
                "hsd": [float(x) for x in t.hsd],
                "hsc": [float(x) for x in t.hsc],
            }
            if labels is not None:
                p = labels[i]
                row["labels"] = {
                    "offensive": p.offd,
                    "hate": p.hsd,
                    "category": CATEGORY_TOKENS[p.hsc],
                }
            if rules is not None:
                row["rule_applied"] = rules[i]
            fh.write(json.dumps(row) + "\n")
