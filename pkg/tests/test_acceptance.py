"""Acceptance suite: one test per criterion, each printing a PASS line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines alongside the pytest verdicts.
"""

import itertools
import json
import math
import os
import time
from functools import lru_cache
from pathlib import Path

import numpy as np
import pytest

from wordimp import autodiff as ad
from wordimp.agreement import ScorePair, concordance
from wordimp.asr_metrics import ScoredReference, align, wer, weighted_wer
from wordimp.cli import main as cli_main
from wordimp.corpus import (
    DatasetSplit,
    ImportanceClass,
    discretize,
    parse_annotations,
    parse_transcript,
    split_dataset,
)
from wordimp.encoder import Vocabulary
from wordimp.evaluation import evaluate, rms
from wordimp.heads import crf_gold_score, crf_log_partition, viterbi_decode
from wordimp.model import ModelConfig, WordImportanceModel
from wordimp.training import TrainConfig, save_checkpoint, train


def load_fixture_corpus(fixtures_dir):
    with open(fixtures_dir / "transcript.txt", encoding="utf-8") as handle:
        transcript = parse_transcript(handle)
    with open(fixtures_dir / "annotations_full.tsv", encoding="utf-8") as handle:
        return parse_annotations(handle, transcript)


def test_concordance_matches_direct_formula_oracle():
    """ccc agrees with an independent evaluation of its formula to 1e-10."""
    started = time.monotonic()

    def oracle(xs, ys):
        n = len(xs)
        mx, my = sum(xs) / n, sum(ys) / n
        sx = math.sqrt(sum((v - mx) ** 2 for v in xs) / n)
        sy = math.sqrt(sum((v - my) ** 2 for v in ys) / n)
        r = (sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / n) / (sx * sy)
        return 2 * r * sx * sy / ((my - mx) ** 2 + sx**2 + sy**2)

    rng = np.random.default_rng(20240)
    worst = 0.0
    for _ in range(100):
        xs = rng.random(50).tolist()
        ys = rng.random(50).tolist()
        worst = max(worst, abs(concordance(ScorePair(xs, ys)).ccc - oracle(xs, ys)))
    assert worst < 1e-10

    assert concordance(ScorePair([0.2, 0.4], [0.4, 0.2])).ccc == pytest.approx(-1.0, abs=1e-15)
    assert concordance(ScorePair([0.1, 0.5, 0.9], [0.1, 0.5, 0.9])).ccc == 1.0

    elapsed = time.monotonic() - started
    assert elapsed < 1.0
    print(f"\nPASS concordance-oracle: worst |delta|={worst:.2e} over 100 pairs, {elapsed:.2f}s")


def test_crf_matches_exhaustive_path_enumeration():
    """Log-partition, Viterbi and path marginals against brute force."""
    started = time.monotonic()
    rng = np.random.default_rng(77)
    checked = 0
    worst_z = worst_v = worst_marginal = 0.0
    for steps in range(1, 6):
        for k in range(2, 5):
            for _ in range(4):  # 60 instances total, every (T, K) covered
                emissions = rng.normal(scale=1.5, size=(steps, k))
                transition = rng.normal(scale=1.5, size=(k + 2, k + 2))
                paths = list(itertools.product(range(k), repeat=steps))
                scores = np.array(
                    [
                        float(crf_gold_score(emissions, transition, list(p)).value)
                        for p in paths
                    ]
                )
                shift = scores.max()
                brute_z = shift + math.log(np.exp(scores - shift).sum())
                z = float(crf_log_partition(emissions, transition).value)
                worst_z = max(worst_z, abs(z - brute_z))

                best = int(scores.argmax())
                path, score = viterbi_decode(emissions, transition)
                assert tuple(path) == paths[best]
                worst_v = max(worst_v, abs(score - scores[best]))

                worst_marginal = max(
                    worst_marginal, abs(float(np.exp(scores - z).sum()) - 1.0)
                )
                checked += 1
    assert checked == 60
    assert worst_z < 1e-8
    assert worst_v < 1e-8
    assert worst_marginal < 1e-8

    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    print(
        f"\nPASS crf-enumeration: {checked} instances, worst logZ delta {worst_z:.2e}, "
        f"marginal-sum delta {worst_marginal:.2e}, {elapsed:.1f}s"
    )


def test_gradients_of_full_tiny_model_both_heads(fixtures_dir):
    """Central finite differences over every parameter, both heads."""
    started = time.monotonic()
    annotated = load_fixture_corpus(fixtures_dir)
    item = annotated[0]
    assert len(item.utterance.tokens) == 4
    vocab = Vocabulary.build(a.utterance for a in annotated)

    results = {}
    for head in ("sig", "crf"):
        config = ModelConfig(word_dim=5, char_dim=3, word_hidden=4, char_hidden=4, head=head)
        model = WordImportanceModel.build(config, vocab, np.random.default_rng(100))
        params = model.params()

        def build_loss():
            return model.loss(
                item, training=True, dropout_p=0.5, rng=np.random.default_rng(55)
            )

        # epsilon 1e-4: at 1e-5 the difference-quotient roundoff floor
        # (~1e-10 absolute) exceeds 1e-4 relative on near-zero gradients
        errors = ad.gradient_check_params(build_loss, params, epsilon=1e-4)
        results[head] = max(errors.values())
        assert results[head] < 1e-4, f"{head}: {errors}"

    elapsed = time.monotonic() - started
    assert elapsed < 30.0
    print(
        f"\nPASS gradient-integrity: max rel err sig={results['sig']:.2e} "
        f"crf={results['crf']:.2e}, {elapsed:.1f}s"
    )


def test_overfit_on_bundled_synthetic_fixture(fixtures_dir, tmp_path, capsys):
    """Both heads memorize the 20-sentence fixture within 200 epochs."""
    started = time.monotonic()
    annotated = load_fixture_corpus(fixtures_dir)
    assert len(annotated) == 20
    split = DatasetSplit(train=annotated, dev=annotated, test=annotated, seed=0)

    def fresh_model(head):
        vocab = Vocabulary.build(a.utterance for a in annotated)
        config = ModelConfig(word_dim=10, char_dim=4, word_hidden=8, char_hidden=4, head=head)
        return WordImportanceModel.build(config, vocab, np.random.default_rng(42))

    # sigmoid head: training RMS under 0.05
    sig_config = TrainConfig(
        lr0=0.01, lr_decay=1.0, batch_size=5, dropout_p=0.0,
        max_epochs=60, patience=60, seed=42,
    )
    sig_model = fresh_model("sig")
    _, sig_history = train(sig_model, split, sig_config)
    assert len(sig_history) <= 200
    preds, golds = [], []
    for entry in annotated:
        preds.extend(sig_model.predict([t.text for t in entry.utterance.tokens])[0])
        golds.extend(entry.scores)
    sig_rms = rms(preds, golds)
    assert sig_rms < 0.05

    # CRF head: 100% training-token class accuracy
    crf_config = TrainConfig(
        lr0=0.01, lr_decay=1.0, batch_size=5, dropout_p=0.0,
        max_epochs=200, patience=10, seed=42,
    )
    crf_model = fresh_model("crf")
    _, crf_history = train(crf_model, split, crf_config)
    assert len(crf_history) <= 200
    hits = total = 0
    for entry in annotated:
        classes = crf_model.predict([t.text for t in entry.utterance.tokens])[1]
        for got, score in zip(classes, entry.scores):
            hits += got == int(discretize(score))
            total += 1
    accuracy = hits / total
    assert accuracy == 1.0

    # the memorizing checkpoint, evaluated through the CLI, reports a
    # perfect macro-F1 on its own training fixture
    ckpt_path = tmp_path / "memorized.ckpt"
    save_checkpoint(crf_model.checkpoint(), ckpt_path)
    code = cli_main(
        [
            "evaluate",
            str(ckpt_path),
            str(fixtures_dir / "transcript.txt"),
            str(fixtures_dir / "annotations_full.tsv"),
            "--format", "json",
        ]
    )
    assert code == 0
    record = json.loads(capsys.readouterr().out)
    assert record["macro_f1"] == 1.0

    elapsed = time.monotonic() - started
    assert elapsed < 300.0
    print(
        f"\nPASS overfit: sig rms={sig_rms:.4f} in {len(sig_history)} epochs, "
        f"crf token accuracy={accuracy:.3f} in {len(crf_history)} epochs, {elapsed:.0f}s"
    )


def test_wer_alignment_against_bruteforce_and_weighted_bounds():
    """Edit counts match recursive Levenshtein; weighted rate is bounded."""
    started = time.monotonic()

    def brute(ref, hyp):
        ref, hyp = tuple(ref), tuple(hyp)

        @lru_cache(maxsize=None)
        def go(i, j):
            if i == len(ref):
                return len(hyp) - j
            if j == len(hyp):
                return len(ref) - i
            if ref[i] == hyp[j]:
                return go(i + 1, j + 1)
            return 1 + min(go(i + 1, j + 1), go(i + 1, j), go(i, j + 1))

        return go(0, 0)

    rng = np.random.default_rng(404)
    alphabet = ["a", "b", "c"]
    for _ in range(1000):
        ref = [alphabet[i] for i in rng.integers(0, 3, rng.integers(1, 9))]
        hyp = [alphabet[i] for i in rng.integers(0, 3, rng.integers(0, 9))]
        ops = align(ref, hyp)
        assert sum(1 for op in ops if op.kind != "match") == brute(ref, hyp)

    # uniform importance, no insertions: the two rates coincide exactly
    checked_uniform = 0
    for _ in range(500):
        ref = [alphabet[i] for i in rng.integers(0, 3, rng.integers(1, 9))]
        hyp = [alphabet[i] for i in rng.integers(0, 3, rng.integers(0, len(ref) + 1))]
        ops = align(ref, hyp)
        if any(op.kind == "insert" for op in ops):
            continue
        scored = ScoredReference(ref, [1.0] * len(ref))
        assert weighted_wer(ops, scored) == wer(ops)
        checked_uniform += 1
    assert checked_uniform > 100

    for _ in range(10_000):
        ref = [alphabet[i] for i in rng.integers(0, 3, rng.integers(1, 9))]
        hyp = [alphabet[i] for i in rng.integers(0, 3, rng.integers(0, 9))]
        scores = (rng.integers(0, 21, len(ref)) * 0.05).tolist()
        value = weighted_wer(align(ref, hyp), ScoredReference(ref, scores))
        assert 0.0 <= value <= 1.0

    elapsed = time.monotonic() - started
    assert elapsed < 10.0
    print(f"\nPASS wer-oracle: 1000 alignment + 10000 bound checks, {elapsed:.1f}s")


def test_discretization_boundaries_exhaustively():
    """Every multiple of 0.05 in [0, 1] lands in its published interval."""
    intervals = [
        (ImportanceClass.C1, 0.0, 0.1, False),
        (ImportanceClass.C2, 0.1, 0.3, False),
        (ImportanceClass.C3, 0.3, 0.5, False),
        (ImportanceClass.C4, 0.5, 0.7, False),
        (ImportanceClass.C5, 0.7, 0.9, False),
        (ImportanceClass.C6, 0.9, 1.0, True),  # closed above
    ]
    checked = 0
    for i in range(21):
        score = round(i * 0.05, 2)
        expected = None
        for cls, lo, hi, closed in intervals:
            if lo <= score < hi or (closed and score == hi):
                expected = cls
                break
        assert discretize(score) == expected, score
        checked += 1
    assert checked == 21
    print("\nPASS discretization: all 21 grid scores in their intervals")


def test_full_pipeline_determinism(fixtures_dir, tmp_path, capsys):
    """Same seed, same data: byte-identical checkpoints and reports."""
    started = time.monotonic()
    outputs = []
    for run_id in ("one", "two"):
        ckpt = tmp_path / f"{run_id}.ckpt"
        code = cli_main(
            [
                "train",
                str(fixtures_dir / "transcript.txt"),
                str(fixtures_dir / "annotations_full.tsv"),
                "--head", "crf",
                "--out", str(ckpt),
                "--word-dim", "6", "--char-dim", "3",
                "--word-hidden", "4", "--char-hidden", "2",
                "--max-epochs", "3", "--batch-size", "5",
                "--seed", "7",
            ]
        )
        assert code == 0
        # keep only the per-epoch records; the trailing status line names
        # the run-specific checkpoint path
        train_out = "".join(
            line + "\n"
            for line in capsys.readouterr().out.splitlines()
            if line.startswith("epoch=")
        )
        code = cli_main(
            [
                "evaluate",
                str(ckpt),
                str(fixtures_dir / "transcript.txt"),
                str(fixtures_dir / "annotations_full.tsv"),
                "--format", "json",
            ]
        )
        assert code == 0
        eval_out = capsys.readouterr().out
        outputs.append((ckpt.read_bytes(), train_out, eval_out))

    assert outputs[0][0] == outputs[1][0], "checkpoint bytes differ"
    assert outputs[0][1] == outputs[1][1], "training histories differ"
    assert outputs[0][2] == outputs[1][2], "evaluation reports differ"
    elapsed = time.monotonic() - started
    print(f"\nPASS determinism: byte-identical checkpoints and reports, {elapsed:.0f}s")


RELEASE_DIR = os.environ.get("WORDIMP_RELEASE_DIR")


@pytest.mark.skipif(
    not RELEASE_DIR,
    reason="headline soft check needs the released annotation data; "
    "set WORDIMP_RELEASE_DIR to a directory with transcript.txt and "
    "annotations.tsv in the toolkit's file formats",
)
def test_released_data_soft_check():
    """Optional: with real released data, LSTM-SIG test RMS near 0.120."""
    root = Path(RELEASE_DIR)
    with open(root / "transcript.txt", encoding="utf-8") as handle:
        transcript = parse_transcript(handle)
    with open(root / "annotations.tsv", encoding="utf-8") as handle:
        annotated = parse_annotations(handle, transcript)
    split = split_dataset(annotated, seed=0)
    vocab = Vocabulary.build(a.utterance for a in split.train)
    model = WordImportanceModel.build(
        ModelConfig(head="sig"), vocab, np.random.default_rng(0)
    )
    config = TrainConfig(max_epochs=100, seed=0)
    train(model, split, config)
    report = evaluate(model, split.test)
    assert abs(report.rms - 0.120) <= 0.10
    print(f"\nPASS release-soft-check: test rms={report.rms:.4f}")
