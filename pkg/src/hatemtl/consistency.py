"""Self-consistency correction of fine-grained predictions.

The three heads are interdependent: hate implies offensive, and a non-None
category implies hate. When the two binary heads agree but the fine-grained
head contradicts them, the fine-grained prediction is repaired:

* both binary heads positive but category None -> promote the most probable
  non-None category (the second most probable class overall);
* both binary heads negative but category non-None -> demote to None.

The binary heads are never modified, and only these two patterns trigger; a
disagreement between the binary heads themselves is left alone.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .corpus import HsCategory
from .ensemble import PredictionTriple

RULE_NONE = "none"
RULE_PROMOTE = "promote_second_best"
RULE_DEMOTE = "demote_to_none"
RULES = (RULE_NONE, RULE_PROMOTE, RULE_DEMOTE)


@dataclass(frozen=True)
class CorrectionOutcome:
    before: PredictionTriple
    after: PredictionTriple
    rule_applied: str


def self_consistency_correct(pred: PredictionTriple) -> CorrectionOutcome:
    """Repair the fine-grained label when it contradicts both binary heads."""
    if pred.offd and pred.hsd and pred.hsc == HsCategory.NONE:
        # Argmax over non-None categories; ties break by canonical order.
        hsc_probs = pred.source_probs.hsc
        promoted = HsCategory(1 + int(np.argmax(hsc_probs[1:])))
        return CorrectionOutcome(
            before=pred, after=replace(pred, hsc=promoted), rule_applied=RULE_PROMOTE
        )
    if not pred.offd and not pred.hsd and pred.hsc != HsCategory.NONE:
        return CorrectionOutcome(
            before=pred, after=replace(pred, hsc=HsCategory.NONE), rule_applied=RULE_DEMOTE
        )
    return CorrectionOutcome(before=pred, after=pred, rule_applied=RULE_NONE)


def correct_batch(
    preds: Sequence[PredictionTriple],
) -> tuple[list[CorrectionOutcome], dict[str, int]]:
    """Apply self_consistency_correct element-wise; counts per rule returned."""
    outcomes = [self_consistency_correct(p) for p in preds]
    counts = {rule: 0 for rule in RULES}
    for o in outcomes:
        counts[o.rule_applied] += 1
    return outcomes, counts
