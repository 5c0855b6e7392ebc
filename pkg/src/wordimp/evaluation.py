"""Test-set measures: RMS deviation, 6-class macro-F1, confusion matrices,
and model-vs-human concordance.

All metrics pool tokens across utterances; nothing is averaged per
utterance first.  Classes with no predicted or no true instances get an
F1 of zero rather than NaN, keeping the macro average total.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .agreement import DegenerateVarianceError, ScorePair, concordance
from .corpus import NUM_CLASSES, AnnotatedUtterance, discretize


def rms(pred: Sequence[float], gold: Sequence[float]) -> float:
    """Root mean squared deviation over pooled tokens."""
    if len(pred) != len(gold):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(gold)}")
    if not pred:
        raise ValueError("empty inputs")
    p = np.asarray(pred, dtype=np.float64)
    g = np.asarray(gold, dtype=np.float64)
    return float(np.sqrt(((p - g) ** 2).mean()))


def _check_classes(classes: Sequence[int]) -> None:
    for c in classes:
        if not 0 <= int(c) < NUM_CLASSES:
            raise ValueError(f"unknown class id {c}")


def macro_f1(
    pred_classes: Sequence[int], gold_classes: Sequence[int]
) -> tuple[float, list[float]]:
    """Unweighted mean F1 over all six classes, plus the per-class values.

    Precision or recall with an empty denominator counts as zero.
    """
    if len(pred_classes) != len(gold_classes):
        raise ValueError(f"length mismatch: {len(pred_classes)} vs {len(gold_classes)}")
    _check_classes(pred_classes)
    _check_classes(gold_classes)
    per_class: list[float] = []
    for c in range(NUM_CLASSES):
        tp = sum(1 for p, g in zip(pred_classes, gold_classes) if p == c and g == c)
        pred_n = sum(1 for p in pred_classes if p == c)
        gold_n = sum(1 for g in gold_classes if g == c)
        precision = tp / pred_n if pred_n else 0.0
        recall = tp / gold_n if gold_n else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append(f1)
    return sum(per_class) / NUM_CLASSES, per_class


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (6, 6) ints, rows = true class, columns = predicted
    normalized: np.ndarray  # rows divided by their sums; zero-support rows stay zero


def confusion(pred_classes: Sequence[int], gold_classes: Sequence[int]) -> ConfusionMatrix:
    if len(pred_classes) != len(gold_classes):
        raise ValueError(f"length mismatch: {len(pred_classes)} vs {len(gold_classes)}")
    _check_classes(pred_classes)
    _check_classes(gold_classes)
    counts = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for p, g in zip(pred_classes, gold_classes):
        counts[int(g), int(p)] += 1
    normalized = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.float64)
    row_sums = counts.sum(axis=1)
    for row in range(NUM_CLASSES):
        if row_sums[row]:
            normalized[row] = counts[row] / row_sums[row]
    return ConfusionMatrix(counts=counts, normalized=normalized)


@dataclass
class EvalReport:
    rms: float
    macro_f1: float
    per_class_f1: list[float]
    confusion: ConfusionMatrix
    ccc_vs_human: float | None  # None when agreement is undefined (zero variance)
    n_tokens: int


def evaluate(
    model,
    test: list[AnnotatedUtterance],
    expected_head: str | None = None,
) -> EvalReport:
    """Pooled test-set report, treating the annotations as ground truth.

    The sigmoid head contributes its continuous outputs directly; the CRF
    head contributes Viterbi classes mapped to class midpoints for the
    continuous measures.
    """
    if not test:
        raise ValueError("empty test set")
    if expected_head is not None and expected_head != model.head_kind:
        raise ValueError(
            f"model has head {model.head_kind!r} but {expected_head!r} was requested"
        )
    pred_scores: list[float] = []
    pred_classes: list[int] = []
    gold_scores: list[float] = []
    gold_classes: list[int] = []
    for item in test:
        texts = [t.text for t in item.utterance.tokens]
        scores, classes = model.predict(texts)
        pred_scores.extend(scores)
        pred_classes.extend(classes)
        gold_scores.extend(item.scores)
        gold_classes.extend(int(discretize(s)) for s in item.scores)

    macro, per_class = macro_f1(pred_classes, gold_classes)
    try:
        ccc = concordance(ScorePair(pred_scores, gold_scores)).ccc
    except DegenerateVarianceError:
        ccc = None
    return EvalReport(
        rms=rms(pred_scores, gold_scores),
        macro_f1=macro,
        per_class_f1=per_class,
        confusion=confusion(pred_classes, gold_classes),
        ccc_vs_human=ccc,
        n_tokens=len(gold_scores),
    )


def average_reports(reports: Sequence[EvalReport]) -> EvalReport:
    """Arithmetic mean of several reports (e.g. across seeded runs).

    Scalar metrics and normalized confusion rows are averaged; counts are
    summed.  The ccc is None if it was undefined in any run.
    """
    if not reports:
        raise ValueError("no reports to average")
    n = len(reports)
    cccs = [r.ccc_vs_human for r in reports]
    return EvalReport(
        rms=sum(r.rms for r in reports) / n,
        macro_f1=sum(r.macro_f1 for r in reports) / n,
        per_class_f1=[
            sum(r.per_class_f1[c] for r in reports) / n for c in range(NUM_CLASSES)
        ],
        confusion=ConfusionMatrix(
            counts=np.sum([r.confusion.counts for r in reports], axis=0),
            normalized=np.mean([r.confusion.normalized for r in reports], axis=0),
        ),
        ccc_vs_human=None if any(c is None for c in cccs) else sum(cccs) / n,
        n_tokens=sum(r.n_tokens for r in reports),
    )


def report_lines(report: EvalReport) -> list[str]:
    """Human-readable key: value lines."""
    ccc = "undefined" if report.ccc_vs_human is None else f"{report.ccc_vs_human:.6f}"
    lines = [
        f"n_tokens: {report.n_tokens}",
        f"rms: {report.rms:.6f}",
        f"macro_f1: {report.macro_f1:.6f}",
        "per_class_f1: "
        + " ".join(f"c{i + 1}={v:.6f}" for i, v in enumerate(report.per_class_f1)),
        f"ccc_vs_human: {ccc}",
    ]
    return lines


def report_record(report: EvalReport) -> dict:
    """JSON-serializable flat record with the same numbers as report_lines."""
    return {
        "n_tokens": report.n_tokens,
        "rms": report.rms,
        "macro_f1": report.macro_f1,
        "per_class_f1": list(report.per_class_f1),
        "ccc_vs_human": report.ccc_vs_human,
        "confusion_counts": report.confusion.counts.tolist(),
        "confusion_normalized": report.confusion.normalized.tolist(),
    }


def confusion_csv(matrix: ConfusionMatrix) -> str:
    """Row-normalized confusion matrix as CSV, one row per true class."""
    header = "true_class," + ",".join(f"c{i + 1}" for i in range(NUM_CLASSES))
    lines = [header]
    for row in range(NUM_CLASSES):
        cells = ",".join(f"{v:.6f}" for v in matrix.normalized[row])
        lines.append(f"c{row + 1},{cells}")
    return "\n".join(lines) + "\n"
