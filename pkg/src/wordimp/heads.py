"""Prediction heads over encoded tokens.

Two heads share the encoder output: a linear-chain CRF over the six
importance classes (decoded with Viterbi, trained by negative
log-likelihood) and a sigmoid regression unit trained with square loss
for continuous scores.

The CRF transition matrix has two virtual states appended after the K
class states: start (index K) and stop (index K+1).  Scoring only ever
reads the structurally legal entries; transitions into start and out of
stop are exposed as -inf through masked_transitions().
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .autodiff import Node, logsumexp, matmul, sigmoid, stack, transpose, wrap
from .encoder import EncodedToken, glorot_uniform


class CRFHead:
    """Emission projection plus learnable transition scores."""

    def __init__(self, input_dim: int, num_classes: int, rng: np.random.Generator):
        if num_classes < 2:
            raise ValueError("need at least two classes")
        self.num_classes = num_classes
        self.proj = Node(glorot_uniform(rng, (input_dim, num_classes)), op="param")
        self.transition = Node(
            glorot_uniform(rng, (num_classes + 2, num_classes + 2)), op="param"
        )

    @property
    def start_id(self) -> int:
        return self.num_classes

    @property
    def stop_id(self) -> int:
        return self.num_classes + 1

    def params(self) -> dict[str, Node]:
        return {"crf.proj": self.proj, "crf.transition": self.transition}

    def emissions(self, encoded: Sequence[EncodedToken]) -> Node:
        """Per-token class scores, stacked into a (T, K) matrix."""
        return stack([matmul(tok.c, self.proj) for tok in encoded])


class SigmoidHead:
    """Single sigmoid unit mapping each encoded token into (0, 1)."""

    def __init__(self, input_dim: int, rng: np.random.Generator):
        self.proj = Node(glorot_uniform(rng, (input_dim, 1)).reshape(-1), op="param")
        self.bias = Node(0.0, op="param")

    def params(self) -> dict[str, Node]:
        return {"sig.proj": self.proj, "sig.bias": self.bias}

    def scores(self, encoded: Sequence[EncodedToken]) -> Node:
        """Per-token predictions as a (T,) vector."""
        return stack([sigmoid(matmul(tok.c, self.proj) + self.bias) for tok in encoded])


def _check_crf_shapes(emissions: Node, transition: Node) -> int:
    if emissions.value.ndim != 2 or emissions.value.shape[0] < 1:
        raise ValueError(f"emissions must be (T, K) with T >= 1, got {emissions.shape}")
    k = emissions.value.shape[1]
    if transition.value.shape != (k + 2, k + 2):
        raise ValueError(
            f"transition must be ({k + 2}, {k + 2}) for {k} classes, "
            f"got {transition.value.shape}"
        )
    return k


def crf_log_partition(emissions, transition) -> Node:
    """log of the summed exponentiated scores of all K^T tag paths.

    Forward recursion in log space; every path implicitly starts in the
    virtual start state and ends in the virtual stop state.
    """
    emissions, transition = wrap(emissions), wrap(transition)
    k = _check_crf_shapes(emissions, transition)
    steps = emissions.value.shape[0]
    start, stop = k, k + 1

    alpha = transition[start, 0:k] + emissions[0]
    if steps > 1:
        # rows of the transposed class block give incoming scores per target tag
        incoming = transpose(transition[0:k, 0:k])
        for t in range(1, steps):
            alpha = logsumexp(incoming + alpha) + emissions[t]
    return logsumexp(alpha + transition[0:k, stop])


def crf_gold_score(emissions, transition, tags: Sequence[int]) -> Node:
    """Unnormalized score of one tag path, boundary transitions included."""
    emissions, transition = wrap(emissions), wrap(transition)
    k = _check_crf_shapes(emissions, transition)
    steps = emissions.value.shape[0]
    if len(tags) != steps:
        raise ValueError(f"gold path has {len(tags)} tags for {steps} tokens")
    if any(not 0 <= t < k for t in tags):
        raise ValueError(f"tag id out of range for {k} classes: {list(tags)}")
    start, stop = k, k + 1

    score = transition[start, tags[0]] + emissions[0, tags[0]]
    for t in range(1, steps):
        score = score + transition[tags[t - 1], tags[t]] + emissions[t, tags[t]]
    return score + transition[tags[-1], stop]


def crf_nll(emissions, transition, tags: Sequence[int]) -> Node:
    """Negative log-likelihood of the gold path: log-partition minus its score."""
    return crf_log_partition(emissions, transition) - crf_gold_score(
        emissions, transition, tags
    )


def viterbi_decode(
    emissions: np.ndarray, transition: np.ndarray
) -> tuple[list[int], float]:
    """Best-scoring tag path and its score.

    Ties break toward the lowest class index at every backpointer, so
    all-zero scores decode to the all-class-0 path deterministically.
    """
    emissions = np.asarray(emissions, dtype=np.float64)
    transition = np.asarray(transition, dtype=np.float64)
    k = _check_crf_shapes(Node(emissions), Node(transition))
    steps = emissions.shape[0]
    start, stop = k, k + 1

    alpha = transition[start, :k] + emissions[0]
    backpointers = []
    for t in range(1, steps):
        candidates = alpha[:, np.newaxis] + transition[:k, :k]  # (prev, cur)
        best_prev = candidates.argmax(axis=0)  # argmax takes the lowest index on ties
        alpha = candidates[best_prev, np.arange(k)] + emissions[t]
        backpointers.append(best_prev)

    final = alpha + transition[:k, stop]
    tag = int(final.argmax())
    score = float(final[tag])
    path = [tag]
    for best_prev in reversed(backpointers):
        tag = int(best_prev[tag])
        path.append(tag)
    path.reverse()
    return path, score


def masked_transitions(transition: np.ndarray, num_classes: int) -> np.ndarray:
    """Transition scores with structurally impossible moves set to -inf."""
    out = np.array(transition, dtype=np.float64)
    start, stop = num_classes, num_classes + 1
    out[:, start] = -np.inf
    out[stop, :] = -np.inf
    return out


def sigmoid_predict(encoded: Sequence[EncodedToken], head: SigmoidHead) -> list[float]:
    """Continuous per-token predictions, each strictly inside (0, 1)."""
    if not encoded:
        raise ValueError("nothing to predict on")
    return [float(v) for v in head.scores(encoded).value]


def squared_loss(pred, gold: Sequence[float]) -> Node:
    """Mean squared difference between predictions and targets."""
    pred = wrap(pred)
    gold_arr = np.asarray(gold, dtype=np.float64)
    if pred.shape != gold_arr.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gold_arr.shape}")
    diff = pred - Node(gold_arr, op="const")
    return (diff * diff).mean()
