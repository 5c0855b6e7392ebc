"""Conversational transcripts and their word-importance annotations.

File formats
------------
Transcript: UTF-8 text, one utterance per line::

    <utterance_id> <start_time> <end_time> <token> [<token> ...]

where the utterance id looks like ``sw2001A-0001``: conversation
``sw2001``, speaker ``A``, sequence number ``0001``.  Timing fields are
validated as numbers and then dropped; audio alignment is out of scope.

Annotations: UTF-8 TSV with header row::

    conversation_id  utterance_id  token_index  token  score  annotator_id

Annotation scores are numeric in [0, 1] at a precision of 0.05; anything
off that grid is rejected.  Token text must match the transcript token
(case-insensitive) and every token of an annotated utterance must be
covered exactly once per annotator.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable

from .agreement import ScorePair


class CorpusError(Exception):
    """Base class for transcript/annotation processing failures."""


class TranscriptParseError(CorpusError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class AnnotationValidationError(CorpusError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class AlignmentError(CorpusError):
    """Annotation rows do not line up with the transcript tokens."""


class UnknownUtteranceError(CorpusError):
    """An annotation references an utterance absent from the transcript."""


class DatasetSizeError(CorpusError):
    """Too little data to partition into train/dev/test."""


SCORE_STEP = 0.05
SCORE_TOLERANCE = 1e-9

_UTTERANCE_ID = re.compile(r"^(sw\d+)([AB])-(\d+)$")

_ANNOTATION_COLUMNS = (
    "conversation_id",
    "utterance_id",
    "token_index",
    "token",
    "score",
    "annotator_id",
)


@dataclass(frozen=True)
class Token:
    text: str
    index: int


@dataclass(frozen=True)
class Utterance:
    conversation_id: str
    utterance_id: str
    speaker: str  # "A" or "B"
    tokens: tuple[Token, ...]


@dataclass(frozen=True)
class AnnotatedUtterance:
    utterance: Utterance
    scores: tuple[float, ...]
    annotator_id: str


class ImportanceClass(IntEnum):
    """Six importance bands: [0,0.1), [0.1,0.3), [0.3,0.5), [0.5,0.7), [0.7,0.9), [0.9,1]."""

    C1 = 0
    C2 = 1
    C3 = 2
    C4 = 3
    C5 = 4
    C6 = 5


NUM_CLASSES = len(ImportanceClass)

# lower bound of each class; the last class is closed above at 1.0
CLASS_LOWER_BOUNDS = (0.0, 0.1, 0.3, 0.5, 0.7, 0.9)

# midpoint of each class interval, used to map discrete predictions back
# onto the continuous score scale
CLASS_MIDPOINTS = (0.05, 0.2, 0.4, 0.6, 0.8, 0.95)


@dataclass
class DatasetSplit:
    train: list[AnnotatedUtterance]
    dev: list[AnnotatedUtterance]
    test: list[AnnotatedUtterance]
    seed: int


def validate_score(value: float) -> float:
    """Check that a loaded score is in [0, 1] and on the 0.05 grid."""
    if not 0.0 <= value <= 1.0:
        raise ValueError(f"score {value} outside [0, 1]")
    steps = round(value / SCORE_STEP)
    if abs(value - steps * SCORE_STEP) > SCORE_TOLERANCE:
        raise ValueError(f"score {value} is not a multiple of {SCORE_STEP}")
    return value


def parse_transcript(source: Iterable[str]) -> list[Utterance]:
    """Parse utterance lines; returns utterances in file order.

    Raises TranscriptParseError with the offending line number for
    malformed ids, non-numeric time fields, token-less lines, or a
    repeated utterance id.
    """
    utterances: list[Utterance] = []
    seen: set[str] = set()
    for line_number, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) < 4:
            raise TranscriptParseError(
                line_number, "expected utterance id, start, end and at least one token"
            )
        utterance_id, start, end = fields[0], fields[1], fields[2]
        match = _UTTERANCE_ID.match(utterance_id)
        if match is None:
            raise TranscriptParseError(line_number, f"bad utterance id {utterance_id!r}")
        try:
            float(start)
            float(end)
        except ValueError:
            raise TranscriptParseError(
                line_number, f"non-numeric time fields {start!r} {end!r}"
            ) from None
        if utterance_id in seen:
            raise TranscriptParseError(line_number, f"duplicate utterance id {utterance_id!r}")
        seen.add(utterance_id)
        tokens = tuple(Token(text, i) for i, text in enumerate(fields[3:]))
        utterances.append(
            Utterance(
                conversation_id=match.group(1),
                utterance_id=utterance_id,
                speaker=match.group(2),
                tokens=tokens,
            )
        )
    return utterances


def serialize_transcript(utterances: Iterable[Utterance]) -> str:
    """Inverse of parse_transcript up to the discarded timing fields,
    which are written back as 0.00 placeholders."""
    lines = []
    for utt in utterances:
        words = " ".join(t.text for t in utt.tokens)
        lines.append(f"{utt.utterance_id} 0.00 0.00 {words}")
    return "\n".join(lines) + ("\n" if lines else "")


def parse_annotations(
    source: Iterable[str], transcript: list[Utterance]
) -> list[AnnotatedUtterance]:
    """Attach TSV annotation rows to transcript tokens.

    Rows are grouped by (utterance, annotator); each group must cover every
    token of its utterance exactly once.  Scores off the 0.05 grid raise
    AnnotationValidationError, token text mismatches raise AlignmentError,
    and references to unknown utterances raise UnknownUtteranceError.
    """
    by_id = {(u.conversation_id, u.utterance_id): u for u in transcript}
    groups: dict[tuple[str, str, str], dict[int, float]] = {}
    order: list[tuple[str, str, str]] = []

    header_seen = False
    for line_number, raw in enumerate(source, start=1):
        line = raw.rstrip("\n")
        if not line.strip():
            continue
        fields = line.split("\t")
        if not header_seen:
            if tuple(f.strip() for f in fields) != _ANNOTATION_COLUMNS:
                raise AnnotationValidationError(
                    line_number,
                    f"bad header; expected {' '.join(_ANNOTATION_COLUMNS)}",
                )
            header_seen = True
            continue
        if len(fields) != len(_ANNOTATION_COLUMNS):
            raise AnnotationValidationError(
                line_number, f"expected {len(_ANNOTATION_COLUMNS)} fields, got {len(fields)}"
            )
        conversation_id, utterance_id, index_text, token_text, score_text, annotator_id = (
            f.strip() for f in fields
        )
        try:
            token_index = int(index_text)
        except ValueError:
            raise AnnotationValidationError(
                line_number, f"bad token index {index_text!r}"
            ) from None
        try:
            score = validate_score(float(score_text))
        except ValueError as exc:
            raise AnnotationValidationError(line_number, str(exc)) from None

        utterance = by_id.get((conversation_id, utterance_id))
        if utterance is None:
            raise UnknownUtteranceError(
                f"line {line_number}: utterance {conversation_id}/{utterance_id} "
                "not present in transcript"
            )
        if not 0 <= token_index < len(utterance.tokens):
            raise AlignmentError(
                f"line {line_number}: token index {token_index} out of range "
                f"for {utterance_id} ({len(utterance.tokens)} tokens)"
            )
        if token_text.lower() != utterance.tokens[token_index].text.lower():
            raise AlignmentError(
                f"line {line_number}: token {token_text!r} does not match transcript "
                f"token {utterance.tokens[token_index].text!r} in {utterance_id}"
            )
        key = (conversation_id, utterance_id, annotator_id)
        if key not in groups:
            groups[key] = {}
            order.append(key)
        if token_index in groups[key]:
            raise AlignmentError(
                f"line {line_number}: duplicate score for token {token_index} "
                f"of {utterance_id} by {annotator_id}"
            )
        groups[key][token_index] = score

    annotated: list[AnnotatedUtterance] = []
    for key in order:
        conversation_id, utterance_id, annotator_id = key
        utterance = by_id[(conversation_id, utterance_id)]
        scores = groups[key]
        if len(scores) != len(utterance.tokens):
            missing = sorted(set(range(len(utterance.tokens))) - set(scores))
            raise AlignmentError(
                f"annotator {annotator_id} covers {len(scores)} of "
                f"{len(utterance.tokens)} tokens in {utterance_id} (missing {missing})"
            )
        ordered = tuple(scores[i] for i in range(len(utterance.tokens)))
        annotated.append(AnnotatedUtterance(utterance, ordered, annotator_id))
    return annotated


def serialize_annotations(annotated: Iterable[AnnotatedUtterance]) -> str:
    lines = ["\t".join(_ANNOTATION_COLUMNS)]
    for item in annotated:
        utt = item.utterance
        for token, score in zip(utt.tokens, item.scores):
            lines.append(
                "\t".join(
                    (
                        utt.conversation_id,
                        utt.utterance_id,
                        str(token.index),
                        token.text,
                        f"{score:.2f}",
                        item.annotator_id,
                    )
                )
            )
    return "\n".join(lines) + "\n"


def extract_overlap(
    a: list[AnnotatedUtterance], b: list[AnnotatedUtterance]
) -> list[ScorePair]:
    """Token-aligned score pairs for utterances annotated on both sides.

    Utterances covered by only one side are dropped.  Each side must
    contribute at most one annotation per utterance.
    """

    def index(side: list[AnnotatedUtterance], label: str):
        out: dict[tuple[str, str], AnnotatedUtterance] = {}
        for item in side:
            key = (item.utterance.conversation_id, item.utterance.utterance_id)
            if key in out:
                raise AlignmentError(
                    f"side {label} has multiple annotations for {key[1]}; "
                    "split annotators into separate inputs"
                )
            out[key] = item
        return out

    index_b = index(b, "b")
    seen_a: set[tuple[str, str]] = set()
    pairs: list[ScorePair] = []
    for item in a:
        key = (item.utterance.conversation_id, item.utterance.utterance_id)
        if key in seen_a:
            raise AlignmentError(
                f"side a has multiple annotations for {key[1]}; "
                "split annotators into separate inputs"
            )
        seen_a.add(key)
        other = index_b.get(key)
        if other is None:
            continue
        if len(item.scores) != len(other.scores):
            raise AlignmentError(
                f"utterance {key[1]}: {len(item.scores)} vs {len(other.scores)} scores"
            )
        pairs.append(ScorePair(x=item.scores, y=other.scores))
    return pairs


def discretize(score: float) -> ImportanceClass:
    """Map a score in [0, 1] to its importance class; 1.0 lands in C6."""
    if not 0.0 <= score <= 1.0:
        raise ValueError(f"score {score} outside [0, 1]")
    if score < 0.1:
        return ImportanceClass.C1
    if score < 0.3:
        return ImportanceClass.C2
    if score < 0.5:
        return ImportanceClass.C3
    if score < 0.7:
        return ImportanceClass.C4
    if score < 0.9:
        return ImportanceClass.C5
    return ImportanceClass.C6


def split_dataset(data: list[AnnotatedUtterance], seed: int) -> DatasetSplit:
    """Shuffle with a seeded PRNG, then partition 80/10/10 by utterance."""
    if len(data) < 10:
        raise DatasetSizeError(f"need at least 10 annotated utterances, got {len(data)}")
    items = list(data)
    random.Random(seed).shuffle(items)
    n = len(items)
    n_train = round(0.8 * n)
    n_dev = round(0.1 * n)
    train = items[:n_train]
    dev = items[n_train : n_train + n_dev]
    test = items[n_train + n_dev :]
    return DatasetSplit(train=train, dev=dev, test=test, seed=seed)
