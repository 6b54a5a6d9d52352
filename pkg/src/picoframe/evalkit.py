"""Token-level strict-match scoring: per-class and macro P/R/F1/accuracy.

A token counts as a true positive for class ``c`` only when gold and
prediction both assign ``c`` at that position (B/I kind is ignored unless
kind-sensitive scoring is requested). Accuracy here is the Jaccard index
``tp / (tp + fp + fn)``, which is algebraically ``F1 / (2 - F1)``; both
derive from the same counts, so the identity holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .corpus import LabelScheme, LabeledSentence
from .errors import DataError
from .extractparse import AlignedPrediction

METRIC_NAMES = ("precision", "recall", "f1", "accuracy")


@dataclass
class ClassCounts:
    label: str
    tp: int = 0
    fp: int = 0
    fn: int = 0

    def add(self, other: "ClassCounts") -> None:
        if other.label != self.label:
            raise ValueError(f"cannot merge counts for {other.label!r} into {self.label!r}")
        self.tp += other.tp
        self.fp += other.fp
        self.fn += other.fn


@dataclass(frozen=True)
class MetricsReport:
    per_class: dict[str, dict[str, float]]
    macro: dict[str, float]
    counts: dict[str, dict[str, int]]
    sentence_count: int = 0
    warning_total: int = 0


def f1_from_precision_recall(precision: float, recall: float) -> float:
    """Harmonic mean of precision and recall; 0 when both are 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def accuracy_from_f1(f1: float) -> float:
    """The Jaccard accuracy implied by an F1 value computed from shared counts."""
    if f1 == 0:
        return 0.0
    return f1 / (2 - f1)


def count_tokens(
    gold: LabeledSentence,
    pred: AlignedPrediction,
    scheme: LabelScheme,
    *,
    kind_sensitive: bool = False,
) -> dict[str, ClassCounts]:
    """Per-class tp/fp/fn deltas for one sentence; gold and pred must be coarse-labeled."""
    if len(gold.tags) != len(pred.tags):
        raise DataError(
            f"{gold.sentence_id}: gold has {len(gold.tags)} tokens but prediction has {len(pred.tags)}"
        )
    counts = {label: ClassCounts(label) for label in scheme.coarse}
    for g, p in zip(gold.tags, pred.tags):
        same = (g.label == p.label) and (not kind_sensitive or g.kind == p.kind)
        if same and g.label is not None:
            counts[g.label].tp += 1
        else:
            if p.label is not None:
                counts[p.label].fp += 1
            if g.label is not None:
                counts[g.label].fn += 1
    return counts


def merge_counts(
    totals: dict[str, ClassCounts], delta: Mapping[str, ClassCounts]
) -> dict[str, ClassCounts]:
    for label, c in delta.items():
        totals.setdefault(label, ClassCounts(label)).add(c)
    return totals


def class_metrics(c: ClassCounts) -> dict[str, float]:
    precision = c.tp / (c.tp + c.fp) if c.tp + c.fp else 0.0
    recall = c.tp / (c.tp + c.fn) if c.tp + c.fn else 0.0
    f1 = f1_from_precision_recall(precision, recall)
    accuracy = c.tp / (c.tp + c.fp + c.fn) if c.tp + c.fp + c.fn else 0.0
    return {"precision": precision, "recall": recall, "f1": f1, "accuracy": accuracy}


def macro_metrics(
    all_counts: Mapping[str, ClassCounts] | Iterable[ClassCounts],
    *,
    sentence_count: int = 0,
    warning_total: int = 0,
) -> MetricsReport:
    """Unweighted means over classes.

    The macro F1 is the mean of the per-class F1 values, not the harmonic
    mean of macro precision and macro recall; likewise for accuracy.
    """
    if isinstance(all_counts, Mapping):
        counts = list(all_counts.values())
    else:
        counts = list(all_counts)
    if not counts:
        raise ValueError("macro_metrics requires at least one class")
    per_class = {c.label: class_metrics(c) for c in counts}
    macro = {
        name: sum(m[name] for m in per_class.values()) / len(per_class)
        for name in METRIC_NAMES
    }
    return MetricsReport(
        per_class=per_class,
        macro=macro,
        counts={c.label: {"tp": c.tp, "fp": c.fp, "fn": c.fn} for c in counts},
        sentence_count=sentence_count,
        warning_total=warning_total,
    )


def format_report(report: MetricsReport) -> str:
    """Human-readable table, one row per class plus the macro row, in percent."""
    width = max(len("macro"), *(len(label) for label in report.per_class))
    lines = [
        f"{'class':<{width}}  {'P':>7} {'R':>7} {'F':>7} {'Acc':>7} {'TP':>7} {'FP':>7} {'FN':>7}"
    ]
    for label in sorted(report.per_class):
        m = report.per_class[label]
        c = report.counts[label]
        lines.append(
            f"{label:<{width}}  "
            f"{100 * m['precision']:>7.2f} {100 * m['recall']:>7.2f} "
            f"{100 * m['f1']:>7.2f} {100 * m['accuracy']:>7.2f} "
            f"{c['tp']:>7} {c['fp']:>7} {c['fn']:>7}"
        )
    m = report.macro
    lines.append(
        f"{'macro':<{width}}  "
        f"{100 * m['precision']:>7.2f} {100 * m['recall']:>7.2f} "
        f"{100 * m['f1']:>7.2f} {100 * m['accuracy']:>7.2f} {'':>7} {'':>7} {'':>7}"
    )
    lines.append(
        f"sentences: {report.sentence_count}   parse warnings: {report.warning_total}"
    )
    return "\n".join(lines)
