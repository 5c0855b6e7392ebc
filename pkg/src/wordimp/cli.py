"""Command-line front end.

Subcommands: agreement, train, evaluate, predict, score-asr, render.
Exit codes: 0 success, 2 data/validation error, 64 usage error.  Data
errors print a single line starting with ``error:`` to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import agreement as agreement_mod
from . import asr_metrics, corpus, evaluation
from .encoder import EmbeddingFormatError, Vocabulary, load_pretrained_embeddings
from .model import ModelConfig, WordImportanceModel
from .training import (
    CheckpointError,
    ConfigError,
    TrainConfig,
    load_checkpoint,
    save_checkpoint,
    train,
)

USAGE_ERROR = 64
DATA_ERROR = 2

_DATA_ERRORS = (
    corpus.CorpusError,
    agreement_mod.DegenerateVarianceError,
    CheckpointError,
    ConfigError,
    EmbeddingFormatError,
    OSError,
    ValueError,
)

BAND_HIGH = 0.6
BAND_MID = 0.3

_ANSI_COLORS = {"high": "\x1b[32m", "mid": "\x1b[34m", "low": "\x1b[90m"}
_ANSI_RESET = "\x1b[0m"
_HTML_COLORS = {"high": "#1a7f37", "mid": "#1f6feb", "low": "#6e7781"}


def score_band(value: float) -> str:
    """Visualization band: high for >= 0.6, mid for [0.3, 0.6), low otherwise."""
    if value >= BAND_HIGH:
        return "high"
    if value >= BAND_MID:
        return "mid"
    return "low"


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad usage by default, which collides with the
    # data-error code; route usage problems to 64 instead
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"error: {message}\n")


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--seed", type=int, default=0, help="PRNG seed")
    parser.add_argument(
        "--format", choices=("text", "json"), default="text", help="output format"
    )


def _load_transcript(path) -> list[corpus.Utterance]:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            return corpus.parse_transcript(handle)
        except corpus.TranscriptParseError as exc:
            raise corpus.CorpusError(f"{path}:{exc.line_number}: {exc}") from None


def _load_annotations(path, transcript) -> list[corpus.AnnotatedUtterance]:
    with open(path, "r", encoding="utf-8") as handle:
        try:
            return corpus.parse_annotations(handle, transcript)
        except corpus.AnnotationValidationError as exc:
            raise corpus.CorpusError(f"{path}:{exc.line_number}: {exc}") from None
        except (corpus.AlignmentError, corpus.UnknownUtteranceError) as exc:
            raise corpus.CorpusError(f"{path}: {exc}") from None


def _emit(args, record: dict, text_lines: list[str]) -> None:
    if args.format == "json":
        print(json.dumps(record, sort_keys=True))
    else:
        for line in text_lines:
            print(line)


def cmd_agreement(args) -> int:
    transcript = _load_transcript(args.transcript)
    side_a = _load_annotations(args.annotations_a, transcript)
    side_b = _load_annotations(args.annotations_b, transcript)
    pairs = corpus.extract_overlap(side_a, side_b)
    if not pairs:
        raise corpus.CorpusError("empty overlap: no utterance annotated on both sides")
    stats = agreement_mod.concordance(agreement_mod.pool_pairs(pairs))
    record = {
        "n": stats.n,
        "utterances": len(pairs),
        "mean_x": stats.mean_x,
        "mean_y": stats.mean_y,
        "sd_x": stats.sd_x,
        "sd_y": stats.sd_y,
        "pearson": stats.pearson,
        "ccc": stats.ccc,
    }
    _emit(
        args,
        record,
        [
            f"n: {stats.n}",
            f"utterances: {len(pairs)}",
            f"mean_x: {stats.mean_x:.6f}",
            f"mean_y: {stats.mean_y:.6f}",
            f"sd_x: {stats.sd_x:.6f}",
            f"sd_y: {stats.sd_y:.6f}",
            f"pearson: {stats.pearson:.6f}",
            f"ccc: {stats.ccc:.6f}",
        ],
    )
    return 0


def _filter_annotator(annotated, annotator):
    if annotator is None:
        return annotated
    kept = [a for a in annotated if a.annotator_id == annotator]
    if not kept:
        raise corpus.CorpusError(f"no annotations by annotator {annotator!r}")
    return kept


def cmd_train(args) -> int:
    transcript = _load_transcript(args.transcript)
    annotated = _filter_annotator(
        _load_annotations(args.annotations, transcript), args.annotator
    )
    rng = np.random.default_rng(args.seed)

    word_table = None
    word_dim = args.word_dim
    if args.embeddings:
        with open(args.embeddings, "r", encoding="utf-8") as handle:
            first = handle.readline().split()
            if len(first) < 2:
                raise EmbeddingFormatError(1, "cannot infer embedding dimension")
            word_dim = len(first) - 1
            handle.seek(0)
            pretrained_words, word_table = load_pretrained_embeddings(
                handle, word_dim, rng
            )
        vocab = Vocabulary.build(
            (a.utterance for a in annotated), pretrained_words=pretrained_words
        )
    else:
        vocab = Vocabulary.build(a.utterance for a in annotated)

    model_config = ModelConfig(
        word_dim=word_dim,
        char_dim=args.char_dim,
        word_hidden=args.word_hidden,
        char_hidden=args.char_hidden,
        head=args.head,
    )
    model = WordImportanceModel.build(model_config, vocab, rng, word_table=word_table)

    split = corpus.split_dataset(annotated, seed=args.seed)
    config = TrainConfig(
        lr0=args.lr,
        lr_decay=args.lr_decay,
        batch_size=args.batch_size,
        dropout_p=args.dropout,
        max_epochs=args.max_epochs,
        patience=args.patience,
        seed=args.seed,
        clip_norm=None if args.no_clip else args.clip_norm,
    )

    history_handle = open(args.history, "w", encoding="utf-8") if args.history else None

    def emit_epoch(record):
        if args.format == "json":
            line = json.dumps(
                {
                    "epoch": record.epoch,
                    "lr": record.lr,
                    "train_loss": record.train_loss,
                    "dev_metric": record.dev_metric,
                },
                sort_keys=True,
            )
        else:
            line = (
                f"epoch={record.epoch} lr={record.lr:.6g} "
                f"train_loss={record.train_loss:.6f} dev_metric={record.dev_metric:.6f}"
            )
        print(line)
        if history_handle is not None:
            history_handle.write(line + "\n")

    try:
        checkpoint, history = train(model, split, config, on_epoch=emit_epoch)
    finally:
        if history_handle is not None:
            history_handle.close()
    save_checkpoint(checkpoint, args.out)
    print(f"checkpoint: {args.out} (epochs={len(history)})")
    return 0


def cmd_evaluate(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    model = WordImportanceModel.from_checkpoint(checkpoint)
    transcript = _load_transcript(args.transcript)
    annotated = _filter_annotator(
        _load_annotations(args.annotations, transcript), args.annotator
    )
    try:
        report = evaluation.evaluate(model, annotated, expected_head=args.head)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    _emit(args, evaluation.report_record(report), evaluation.report_lines(report))
    if args.confusion_csv:
        with open(args.confusion_csv, "w", encoding="utf-8") as handle:
            handle.write(evaluation.confusion_csv(report.confusion))
    return 0


def cmd_predict(args) -> int:
    checkpoint = load_checkpoint(args.checkpoint)
    model = WordImportanceModel.from_checkpoint(checkpoint)
    transcript = _load_transcript(args.transcript)
    for utt in transcript:
        texts = [t.text for t in utt.tokens]
        scores, classes = model.predict(texts)
        if args.format == "json":
            print(
                json.dumps(
                    {
                        "utterance_id": utt.utterance_id,
                        "tokens": texts,
                        "scores": scores,
                        "classes": [c + 1 for c in classes],
                    },
                    sort_keys=True,
                )
            )
        else:
            for token, score, cls in zip(utt.tokens, scores, classes):
                print(
                    f"{utt.conversation_id}\t{utt.utterance_id}\t{token.index}"
                    f"\t{token.text}\t{score:.4f}\tc{cls + 1}"
                )
    return 0


def _parse_hypotheses(path) -> dict[str, list[str]]:
    hyps: dict[str, list[str]] = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line:
                continue
            fields = line.split()
            utterance_id = fields[0]
            if utterance_id in hyps:
                raise corpus.CorpusError(
                    f"{path}:{line_number}: duplicate hypothesis for {utterance_id}"
                )
            hyps[utterance_id] = fields[1:]  # may be empty: ASR emitted nothing
    return hyps


def cmd_score_asr(args) -> int:
    transcript = _load_transcript(args.transcript)
    annotated = _filter_annotator(
        _load_annotations(args.annotations, transcript), args.annotator
    )
    hypotheses = _parse_hypotheses(args.hypothesis)

    total_edits = 0
    total_ref = 0
    weighted_num = 0.0
    weighted_den = 0.0
    for item in annotated:
        utt = item.utterance
        if utt.utterance_id not in hypotheses:
            raise corpus.CorpusError(f"no hypothesis for utterance {utt.utterance_id}")
        ref = [t.text.lower() for t in utt.tokens]
        hyp = [t.lower() for t in hypotheses[utt.utterance_id]]
        alignment = asr_metrics.align(ref, hyp)
        subs, dels, ins, ref_len = asr_metrics.edit_counts(alignment)
        utt_wer = asr_metrics.wer(alignment)
        scored = asr_metrics.ScoredReference(ref, item.scores)
        utt_weighted = asr_metrics.weighted_wer(alignment, scored)

        total_edits += subs + dels + ins
        total_ref += ref_len
        mean_importance = sum(item.scores) / ref_len
        errors = sum(
            item.scores[op.ref_index]
            for op in alignment
            if op.kind in (asr_metrics.SUBSTITUTE, asr_metrics.DELETE)
        )
        weighted_num += errors + ins * mean_importance
        weighted_den += sum(item.scores) + ins * mean_importance

        if args.format == "json":
            print(
                json.dumps(
                    {
                        "utterance_id": utt.utterance_id,
                        "wer": utt_wer,
                        "weighted_wer": utt_weighted,
                        "substitutions": subs,
                        "deletions": dels,
                        "insertions": ins,
                        "ref_words": ref_len,
                    },
                    sort_keys=True,
                )
            )
        else:
            print(
                f"{utt.utterance_id} wer={utt_wer:.6f} weighted_wer={utt_weighted:.6f} "
                f"S={subs} D={dels} I={ins} N={ref_len}"
            )

    corpus_wer = total_edits / total_ref
    corpus_weighted = weighted_num / weighted_den if weighted_den > 0 else 0.0
    if args.format == "json":
        print(
            json.dumps(
                {
                    "corpus": True,
                    "wer": corpus_wer,
                    "weighted_wer": corpus_weighted,
                    "ref_words": total_ref,
                    "edits": total_edits,
                },
                sort_keys=True,
            )
        )
    else:
        print(
            f"corpus wer={corpus_wer:.6f} weighted_wer={corpus_weighted:.6f} "
            f"edits={total_edits} N={total_ref}"
        )
    return 0


def _render_terminal(annotated) -> list[str]:
    lines = []
    for item in annotated:
        words = []
        for token, score in zip(item.utterance.tokens, item.scores):
            color = _ANSI_COLORS[score_band(score)]
            words.append(f"{color}{token.text}{_ANSI_RESET}")
        lines.append(f"{item.utterance.utterance_id} [{item.annotator_id}] " + " ".join(words))
    return lines


def _render_html(annotated) -> str:
    rows = []
    for item in annotated:
        spans = []
        for token, score in zip(item.utterance.tokens, item.scores):
            band = score_band(score)
            size = 0.8 + 1.2 * score  # font size tracks the importance score
            spans.append(
                f'<span class="{band}" style="color:{_HTML_COLORS[band]};'
                f'font-size:{size:.2f}em" title="{score:.2f}">{token.text}</span>'
            )
        rows.append(
            f'<p><span class="utt-id">{item.utterance.utterance_id}'
            f" [{item.annotator_id}]</span> " + " ".join(spans) + "</p>"
        )
    body = "\n".join(rows)
    return (
        "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n"
        "<title>word importance</title>\n"
        "<style>body{font-family:sans-serif}.utt-id{color:#999;font-size:0.8em}</style>\n"
        "</head>\n<body>\n" + body + "\n</body>\n</html>\n"
    )


def cmd_render(args) -> int:
    transcript = _load_transcript(args.transcript)
    annotated = _filter_annotator(
        _load_annotations(args.annotations, transcript), args.annotator
    )
    if args.html:
        with open(args.html, "w", encoding="utf-8") as handle:
            handle.write(_render_html(annotated))
        print(f"wrote {args.html}")
    else:
        for line in _render_terminal(annotated):
            print(line)
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="wordimp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("agreement", help="inter-annotator concordance over the overlap set")
    p.add_argument("annotations_a")
    p.add_argument("annotations_b")
    p.add_argument("transcript")
    _add_common(p)
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("train", help="train an importance model")
    p.add_argument("transcript")
    p.add_argument("annotations")
    p.add_argument("--head", choices=("crf", "sig"), required=True)
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--embeddings", help="pretrained word-embedding text file")
    p.add_argument("--annotator", help="train on one annotator's scores only")
    p.add_argument("--word-dim", type=int, default=100)
    p.add_argument("--char-dim", type=int, default=100)
    p.add_argument("--word-hidden", type=int, default=300)
    p.add_argument("--char-hidden", type=int, default=100)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--lr-decay", type=float, default=0.9)
    p.add_argument("--batch-size", type=int, default=20)
    p.add_argument("--dropout", type=float, default=0.5)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--clip-norm", type=float, default=5.0)
    p.add_argument("--no-clip", action="store_true", help="disable gradient clipping")
    p.add_argument("--history", help="also write per-epoch records to this file")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a checkpoint against annotations")
    p.add_argument("checkpoint")
    p.add_argument("transcript")
    p.add_argument("annotations")
    p.add_argument("--head", choices=("crf", "sig"), help="require this head kind")
    p.add_argument("--annotator")
    p.add_argument("--confusion-csv", help="write the normalized confusion matrix here")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("predict", help="predict scores for a transcript")
    p.add_argument("checkpoint")
    p.add_argument("transcript")
    _add_common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("score-asr", help="WER and importance-weighted WER")
    p.add_argument("transcript")
    p.add_argument("annotations")
    p.add_argument("hypothesis", help="one line per utterance: <utterance_id> <tokens...>")
    p.add_argument("--annotator")
    _add_common(p)
    p.set_defaults(func=cmd_score_asr)

    p = sub.add_parser("render", help="visualize scores on a transcript")
    p.add_argument("transcript")
    p.add_argument("annotations")
    p.add_argument("--annotator")
    p.add_argument("--html", help="write an HTML document instead of ANSI text")
    _add_common(p)
    p.set_defaults(func=cmd_render)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
