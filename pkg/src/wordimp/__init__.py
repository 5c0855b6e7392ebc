"""Word-importance toolkit for conversational transcripts.

Parses annotated transcripts, measures inter-annotator agreement with
Lin's concordance correlation, trains BiLSTM models (CRF or sigmoid
head) on a built-in reverse-mode autodiff engine, evaluates them, and
applies importance scores to weighted ASR accuracy measurement.
"""

__version__ = "0.1.0"

from .corpus import (
    AnnotatedUtterance,
    ImportanceClass,
    Token,
    Utterance,
    discretize,
    parse_annotations,
    parse_transcript,
)

__all__ = [
    "AnnotatedUtterance",
    "ImportanceClass",
    "Token",
    "Utterance",
    "discretize",
    "parse_annotations",
    "parse_transcript",
    "__version__",
]
