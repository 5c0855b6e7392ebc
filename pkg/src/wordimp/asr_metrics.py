"""Word error rate and its importance-weighted variant.

The alignment is the classic unit-cost edit distance between a reference
and a hypothesis token sequence.  Plain WER is (S + D + I) / N with N
the reference length.  Weighted WER replaces each reference-word error's
unit cost with that word's importance score:

    (sum of importance over substituted/deleted words + I * mean_importance)
    -----------------------------------------------------------------------
    (sum of importance over all reference words      + I * mean_importance)

Insertions have no reference word, so each one costs the mean reference
importance; adding the same amount to the denominator keeps the metric
inside [0, 1].  A zero denominator (all-zero importance) yields 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

MATCH = "match"
SUBSTITUTE = "substitute"
DELETE = "delete"
INSERT = "insert"


@dataclass(frozen=True)
class AlignmentOp:
    kind: str  # match | substitute | delete | insert
    ref_index: int | None
    hyp_index: int | None


@dataclass(frozen=True)
class ScoredReference:
    tokens: tuple[str, ...]
    importance: tuple[float, ...]

    def __init__(self, tokens: Sequence[str], importance: Sequence[float]):
        object.__setattr__(self, "tokens", tuple(tokens))
        object.__setattr__(self, "importance", tuple(float(v) for v in importance))
        if len(self.tokens) != len(self.importance):
            raise ValueError(
                f"{len(self.tokens)} tokens but {len(self.importance)} scores"
            )


def align(ref: Sequence[str], hyp: Sequence[str]) -> list[AlignmentOp]:
    """Minimum-edit-distance alignment with unit costs.

    Among cost-equal traceback moves the preference order is
    match > substitute > delete > insert, which makes the output
    deterministic.  An empty reference is rejected (WER is undefined).
    """
    if not ref:
        raise ValueError("empty reference")
    n, m = len(ref), len(hyp)
    dist = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        dist[i][0] = i
    for j in range(1, m + 1):
        dist[0][j] = j
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            sub = dist[i - 1][j - 1] + (0 if ref[i - 1] == hyp[j - 1] else 1)
            dist[i][j] = min(sub, dist[i - 1][j] + 1, dist[i][j - 1] + 1)

    ops: list[AlignmentOp] = []
    i, j = n, m
    while i > 0 or j > 0:
        if i > 0 and j > 0 and ref[i - 1] == hyp[j - 1] and dist[i][j] == dist[i - 1][j - 1]:
            ops.append(AlignmentOp(MATCH, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and j > 0 and dist[i][j] == dist[i - 1][j - 1] + 1:
            ops.append(AlignmentOp(SUBSTITUTE, i - 1, j - 1))
            i, j = i - 1, j - 1
        elif i > 0 and dist[i][j] == dist[i - 1][j] + 1:
            ops.append(AlignmentOp(DELETE, i - 1, None))
            i = i - 1
        else:
            ops.append(AlignmentOp(INSERT, None, j - 1))
            j = j - 1
    ops.reverse()
    return ops


def edit_counts(alignment: Sequence[AlignmentOp]) -> tuple[int, int, int, int]:
    """(substitutions, deletions, insertions, reference length)."""
    subs = sum(1 for op in alignment if op.kind == SUBSTITUTE)
    dels = sum(1 for op in alignment if op.kind == DELETE)
    ins = sum(1 for op in alignment if op.kind == INSERT)
    ref_len = sum(1 for op in alignment if op.ref_index is not None)
    return subs, dels, ins, ref_len


def wer(alignment: Sequence[AlignmentOp]) -> float:
    subs, dels, ins, ref_len = edit_counts(alignment)
    if ref_len == 0:
        raise ValueError("alignment covers no reference words")
    return (subs + dels + ins) / ref_len


def weighted_wer(alignment: Sequence[AlignmentOp], ref_scores: ScoredReference) -> float:
    """Importance-weighted error rate in [0, 1]."""
    subs, dels, ins, ref_len = edit_counts(alignment)
    if len(ref_scores.importance) != ref_len:
        raise ValueError(
            f"alignment covers {ref_len} reference words but "
            f"{len(ref_scores.importance)} scores were given"
        )
    importance = ref_scores.importance
    total = sum(importance)
    mean_importance = total / ref_len
    errors = sum(
        importance[op.ref_index]
        for op in alignment
        if op.kind in (SUBSTITUTE, DELETE)
    )
    numerator = errors + ins * mean_importance
    denominator = total + ins * mean_importance
    if denominator == 0.0:
        return 0.0
    return numerator / denominator
