"""Metrics and analyses: macro P/R/F1, contradiction rates, FP/FN rates, run comparison.

Macro averages run over the FULL class list, including classes absent from
the gold labels; any 0/0 quotient is defined as 0. This makes never-predicted
rare classes drag the macro average down, which is the intended behavior for
imbalanced fine-grained classification.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .corpus import HsCategory, LabelTriple
from .ensemble import PredictionTriple

REPORT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ConfusionMatrix:
    classes: tuple
    counts: np.ndarray  # rows: gold, cols: predicted

    @classmethod
    def from_labels(cls, gold: Sequence, pred: Sequence, classes: Sequence) -> "ConfusionMatrix":
        if len(gold) != len(pred):
            raise ValueError(f"gold/pred length mismatch: {len(gold)} vs {len(pred)}")
        index = {c: i for i, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for g, p in zip(gold, pred):
            if g not in index or p not in index:
                raise ValueError(f"label outside class list: gold={g!r} pred={p!r}")
            counts[index[g], index[p]] += 1
        return cls(classes=tuple(classes), counts=counts)


class MacroMetrics(NamedTuple):
    accuracy: float
    precision: float
    recall: float
    f1: float


def _safe_div(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def macro_metrics(gold: Sequence, pred: Sequence, classes: Sequence) -> MacroMetrics:
    """Accuracy and unweighted macro precision/recall/F1 over `classes`."""
    if len(gold) == 0:
        raise ValueError("cannot compute metrics on empty label lists")
    cm = ConfusionMatrix.from_labels(gold, pred, classes)
    tp = np.diag(cm.counts).astype(float)
    fp = cm.counts.sum(axis=0) - tp
    fn = cm.counts.sum(axis=1) - tp
    precisions, recalls, f1s = [], [], []
    for c in range(len(classes)):
        p = _safe_div(tp[c], tp[c] + fp[c])
        r = _safe_div(tp[c], tp[c] + fn[c])
        precisions.append(p)
        recalls.append(r)
        f1s.append(_safe_div(2 * p * r, p + r))
    return MacroMetrics(
        accuracy=float(tp.sum() / len(gold)),
        precision=float(np.mean(precisions)),
        recall=float(np.mean(recalls)),
        f1=float(np.mean(f1s)),
    )


def contradiction_rates(preds: Sequence[PredictionTriple]) -> tuple[float, float]:
    """(offd_rate, hsd_hsc_rate) over a batch of predictions.

    offd_rate counts samples where the offensive head is negative while the
    hate head or the fine-grained head is positive. hsd_hsc_rate is the
    symmetric disagreement between the hate head and the fine-grained head
    (either positive while the other is negative); it is reported for both
    heads.
    """
    if len(preds) == 0:
        raise ValueError("cannot compute contradiction rates on an empty batch")
    offd_hits = 0
    hsd_hsc_hits = 0
    for p in preds:
        hsc_positive = p.hsc != HsCategory.NONE
        if not p.offd and (p.hsd or hsc_positive):
            offd_hits += 1
        if p.hsd != hsc_positive:
            hsd_hsc_hits += 1
    n = len(preds)
    return offd_hits / n, hsd_hsc_hits / n


@dataclass(frozen=True)
class ErrorRates:
    fp: float  # false positives as a fraction of all samples
    fn: float


def fp_fn_rates(
    gold: Sequence[LabelTriple], preds: Sequence[PredictionTriple]
) -> dict[str, ErrorRates]:
    """Per-subtask FP/FN fractions after binarization.

    The fine-grained subtask binarizes to "is hate speech at all"
    (category != None); rates are fractions of the full sample count.
    """
    if len(gold) != len(preds):
        raise ValueError(f"gold/pred length mismatch: {len(gold)} vs {len(preds)}")
    n = len(gold)
    out = {}
    pairs = {
        "offd": [(g.offensive, p.offd) for g, p in zip(gold, preds)],
        "hsd": [(g.hate, p.hsd) for g, p in zip(gold, preds)],
        "hsc": [
            (g.category != HsCategory.NONE, p.hsc != HsCategory.NONE)
            for g, p in zip(gold, preds)
        ],
    }
    for task, gp in pairs.items():
        fp = sum(1 for g, p in gp if p and not g)
        fn = sum(1 for g, p in gp if g and not p)
        out[task] = ErrorRates(fp=fp / n, fn=fn / n)
    return out


@dataclass(frozen=True)
class EvaluationReport:
    """Everything the analysis battery reports for one prediction set.

    When a corrected prediction set is supplied alongside, the fine-grained
    metrics, error rates, and contradiction rates carry before/after values.
    """

    n_samples: int
    metrics: dict[str, MacroMetrics]
    error_rates: dict[str, ErrorRates]
    contradiction_offd: float
    contradiction_hsd_hsc: float
    hsc_corrected: Optional[MacroMetrics] = None
    hsc_corrected_error_rates: Optional[ErrorRates] = None
    contradiction_offd_corrected: Optional[float] = None
    contradiction_hsd_hsc_corrected: Optional[float] = None


TASK_DISPLAY = {"offd": "OFFD", "hsd": "HSD", "hsc": "HSC"}


def _task_labels(task: str, gold: Sequence[LabelTriple], preds: Sequence[PredictionTriple]):
    if task == "offd":
        return [int(g.offensive) for g in gold], [int(p.offd) for p in preds], [0, 1]
    if task == "hsd":
        return [int(g.hate) for g in gold], [int(p.hsd) for p in preds], [0, 1]
    return (
        [int(g.category) for g in gold],
        [int(p.hsc) for p in preds],
        list(range(len(HsCategory))),
    )


def build_report(
    gold: Sequence[LabelTriple],
    preds: Sequence[PredictionTriple],
    corrected: Optional[Sequence[PredictionTriple]] = None,
) -> EvaluationReport:
    """Compute the full evaluation report for one prediction set."""
    if len(gold) != len(preds):
        raise ValueError(f"gold/pred length mismatch: {len(gold)} vs {len(preds)}")
    metrics = {}
    for task in ("offd", "hsd", "hsc"):
        g, p, classes = _task_labels(task, gold, preds)
        metrics[task] = macro_metrics(g, p, classes)
    rates = fp_fn_rates(gold, preds)
    c_offd, c_hsd_hsc = contradiction_rates(preds)
    kwargs = {}
    if corrected is not None:
        if len(corrected) != len(gold):
            raise ValueError("corrected predictions misaligned with gold")
        g, p, classes = _task_labels("hsc", gold, corrected)
        kwargs["hsc_corrected"] = macro_metrics(g, p, classes)
        kwargs["hsc_corrected_error_rates"] = fp_fn_rates(gold, corrected)["hsc"]
        co, ch = contradiction_rates(corrected)
        kwargs["contradiction_offd_corrected"] = co
        kwargs["contradiction_hsd_hsc_corrected"] = ch
    return EvaluationReport(
        n_samples=len(gold),
        metrics=metrics,
        error_rates=rates,
        contradiction_offd=c_offd,
        contradiction_hsd_hsc=c_hsd_hsc,
        **kwargs,
    )


def _metrics_to_dict(m: MacroMetrics) -> dict:
    return {"accuracy": m.accuracy, "precision": m.precision, "recall": m.recall, "f1": m.f1}


def report_to_json(report: EvaluationReport) -> dict:
    out = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "n_samples": report.n_samples,
        "subtasks": {t: _metrics_to_dict(m) for t, m in report.metrics.items()},
        "error_rates": {
            t: {"fp": r.fp, "fn": r.fn} for t, r in report.error_rates.items()
        },
        "contradictions": {
            "offd": report.contradiction_offd,
            "hsd_hsc": report.contradiction_hsd_hsc,
        },
    }
    if report.hsc_corrected is not None:
        out["subtasks"]["hsc_corrected"] = _metrics_to_dict(report.hsc_corrected)
        out["error_rates"]["hsc_corrected"] = {
            "fp": report.hsc_corrected_error_rates.fp,
            "fn": report.hsc_corrected_error_rates.fn,
        }
        out["contradictions"]["offd_corrected"] = report.contradiction_offd_corrected
        out["contradictions"]["hsd_hsc_corrected"] = report.contradiction_hsd_hsc_corrected
    return out


def _pct(x: float) -> str:
    return f"{100.0 * x:.2f}%"


def _dual(before: float, after: Optional[float]) -> str:
    if after is None:
        return _pct(before)
    return f"{100.0 * before:.2f}/{100.0 * after:.2f}%"


def render_report(report: EvaluationReport) -> str:
    """Aligned plain-text rendering; fine-grained cells show before/after
    correction when a corrected set was evaluated."""
    lines = [f"# evaluation report (schema v{REPORT_SCHEMA_VERSION}, n={report.n_samples})"]
    header = f"{'Subtask':<8}{'Accuracy':>16}{'Precision':>16}{'Recall':>16}{'F1 Macro':>16}"
    lines.append(header)
    for task in ("offd", "hsd", "hsc"):
        m = report.metrics[task]
        if task == "hsc" and report.hsc_corrected is not None:
            mc = report.hsc_corrected
            cells = [
                _dual(m.accuracy, mc.accuracy),
                _dual(m.precision, mc.precision),
                _dual(m.recall, mc.recall),
                _dual(m.f1, mc.f1),
            ]
        else:
            cells = [_pct(m.accuracy), _pct(m.precision), _pct(m.recall), _pct(m.f1)]
        lines.append(f"{TASK_DISPLAY[task]:<8}" + "".join(f"{c:>16}" for c in cells))
    lines.append("")
    lines.append(f"{'Subtask':<8}{'Contradiction':>16}{'False +ve':>16}{'False -ve':>16}")
    rows = {
        "offd": (
            _dual(report.contradiction_offd, report.contradiction_offd_corrected),
            _pct(report.error_rates["offd"].fp),
            _pct(report.error_rates["offd"].fn),
        ),
        "hsd": (
            _dual(report.contradiction_hsd_hsc, report.contradiction_hsd_hsc_corrected),
            _pct(report.error_rates["hsd"].fp),
            _pct(report.error_rates["hsd"].fn),
        ),
        "hsc": (
            _dual(report.contradiction_hsd_hsc, report.contradiction_hsd_hsc_corrected),
            _dual(
                report.error_rates["hsc"].fp,
                report.hsc_corrected_error_rates.fp if report.hsc_corrected_error_rates else None,
            ),
            _dual(
                report.error_rates["hsc"].fn,
                report.hsc_corrected_error_rates.fn if report.hsc_corrected_error_rates else None,
            ),
        ),
    }
    for task, cells in rows.items():
        lines.append(f"{TASK_DISPLAY[task]:<8}" + "".join(f"{c:>16}" for c in cells))
    return "\n".join(lines)


def compare_runs(named_reports: Sequence[tuple[str, EvaluationReport]]) -> str:
    """Side-by-side comparison table; the best value per metric row is starred.

    Reports carrying corrected fine-grained metrics render dual before/after
    cells; the post-correction value enters the best-of-row comparison.
    """
    if len(named_reports) < 2:
        raise ValueError("comparison needs at least two reports")
    names = [n for n, _ in named_reports]
    width = max(18, max(len(n) for n in names) + 10)
    lines = [f"# run comparison (schema v{REPORT_SCHEMA_VERSION})"]
    lines.append(f"{'Subtask':<8}{'Metric':<11}" + "".join(f"{n:>{width}}" for n in names))
    for task in ("offd", "hsd", "hsc"):
        for metric in ("accuracy", "precision", "recall", "f1"):
            values, cells = [], []
            for _, rep in named_reports:
                base = getattr(rep.metrics[task], metric)
                after = (
                    getattr(rep.hsc_corrected, metric)
                    if task == "hsc" and rep.hsc_corrected is not None
                    else None
                )
                values.append(base if after is None else after)
                cells.append(_dual(base, after))
            best = max(values)
            cells = [
                cell + ("*" if abs(v - best) < 1e-12 else "")
                for cell, v in zip(cells, values)
            ]
            lines.append(f"{TASK_DISPLAY[task]:<8}{metric:<11}" + "".join(f"{c:>{width}}" for c in cells))
    return "\n".join(lines)
