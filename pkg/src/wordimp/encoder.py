"""Token encoders: word plus character embeddings feeding bidirectional LSTMs.

Each token is represented by the concatenation of a word-embedding row
(lowercased lookup) and a character-level BiLSTM summary (original
casing).  A word-level BiLSTM over these inputs yields per-token forward
and backward states; their concatenation is the context-aware
representation consumed by the prediction heads.

Word lookups fall back to a trainable unknown-word row, character
lookups to an unknown-character row, so any token encodes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .autodiff import Node, concat, dropout, matmul, mul, sigmoid, tanh
from .corpus import Utterance


class EmbeddingFormatError(ValueError):
    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


UNK_INIT_RANGE = 0.25  # unknown-word row drawn uniform from +-this


@dataclass
class Vocabulary:
    word_to_id: dict[str, int]
    char_to_id: dict[str, int]
    unk_word_id: int
    unk_char_id: int

    @property
    def num_words(self) -> int:
        return len(self.word_to_id) + 1  # + unk

    @property
    def num_chars(self) -> int:
        return len(self.char_to_id) + 1

    def word_id(self, text: str) -> int:
        return self.word_to_id.get(text.lower(), self.unk_word_id)

    def char_ids(self, text: str) -> list[int]:
        return [self.char_to_id.get(c, self.unk_char_id) for c in text]

    @classmethod
    def build(
        cls, utterances: Iterable[Utterance], pretrained_words: dict[str, int] | None = None
    ) -> "Vocabulary":
        """Collect word and character inventories.

        With pretrained_words given, the word inventory is exactly the
        pretrained one (ids preserved, unk appended after); otherwise words
        are collected from the data in first-seen order.  Characters always
        come from the data.
        """
        if pretrained_words is not None:
            word_to_id = dict(pretrained_words)
        else:
            word_to_id = {}
        char_to_id: dict[str, int] = {}
        for utt in utterances:
            for token in utt.tokens:
                if pretrained_words is None:
                    word_to_id.setdefault(token.text.lower(), len(word_to_id))
                for ch in token.text:
                    char_to_id.setdefault(ch, len(char_to_id))
        return cls(
            word_to_id=word_to_id,
            char_to_id=char_to_id,
            unk_word_id=len(word_to_id),
            unk_char_id=len(char_to_id),
        )


@dataclass
class EmbeddingTable:
    matrix: Node  # (vocab including unk, dim)
    dim: int
    trainable: bool = True

    @classmethod
    def random(cls, vocab_size: int, dim: int, rng: np.random.Generator) -> "EmbeddingTable":
        return cls(matrix=Node(glorot_uniform(rng, (vocab_size, dim)), op="param"), dim=dim)


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, int]) -> np.ndarray:
    """Uniform init within +-sqrt(6 / (fan_in + fan_out))."""
    bound = math.sqrt(6.0 / (shape[0] + shape[1]))
    return rng.uniform(-bound, bound, shape)


def load_pretrained_embeddings(
    source: Iterable[str], expected_dim: int, rng: np.random.Generator
) -> tuple[dict[str, int], EmbeddingTable]:
    """Parse ``<token> <f1> ... <fd>`` lines into an embedding table.

    Rows keep file order; a trainable unknown-word row drawn uniform from
    [-0.25, 0.25] is appended last, so its id is len(word_to_id).
    """
    word_to_id: dict[str, int] = {}
    rows: list[np.ndarray] = []
    for line_number, raw in enumerate(source, start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        token, values = parts[0], parts[1:]
        if len(values) != expected_dim:
            raise EmbeddingFormatError(
                line_number, f"expected {expected_dim} values, got {len(values)}"
            )
        try:
            row = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError:
            raise EmbeddingFormatError(line_number, "non-numeric embedding value") from None
        if token in word_to_id:
            raise EmbeddingFormatError(line_number, f"duplicate token {token!r}")
        word_to_id[token] = len(rows)
        rows.append(row)
    unk = rng.uniform(-UNK_INIT_RANGE, UNK_INIT_RANGE, expected_dim)
    matrix = np.vstack(rows + [unk]) if rows else unk.reshape(1, -1)
    return word_to_id, EmbeddingTable(matrix=Node(matrix, op="param"), dim=expected_dim)


class LSTMCell:
    """Single-direction LSTM cell with gate-stacked weights (i, f, g, o).

    Weights are Glorot-uniform; the forget-gate bias starts at 1.0 and the
    other biases at 0, which stabilizes early training on small data.
    """

    def __init__(self, input_size: int, hidden_size: int, rng: np.random.Generator):
        self.input_size = input_size
        self.hidden_size = hidden_size
        self.w_x = Node(glorot_uniform(rng, (input_size, 4 * hidden_size)), op="param")
        self.w_h = Node(glorot_uniform(rng, (hidden_size, 4 * hidden_size)), op="param")
        bias = np.zeros(4 * hidden_size)
        bias[hidden_size : 2 * hidden_size] = 1.0
        self.bias = Node(bias, op="param")

    def params(self) -> dict[str, Node]:
        return {"w_x": self.w_x, "w_h": self.w_h, "bias": self.bias}

    def initial_state(self) -> tuple[Node, Node]:
        zero = np.zeros(self.hidden_size)
        return Node(zero.copy(), op="const"), Node(zero.copy(), op="const")

    def step(self, x: Node, h_prev: Node, c_prev: Node) -> tuple[Node, Node]:
        h = self.hidden_size
        z = matmul(x, self.w_x) + matmul(h_prev, self.w_h) + self.bias
        i = sigmoid(z[0:h])
        f = sigmoid(z[h : 2 * h])
        g = tanh(z[2 * h : 3 * h])
        o = sigmoid(z[3 * h : 4 * h])
        c = mul(f, c_prev) + mul(i, g)
        return mul(o, tanh(c)), c

    def run(self, inputs: Sequence[Node]) -> list[Node]:
        """Hidden states for the whole input sequence, in input order."""
        h, c = self.initial_state()
        states = []
        for x in inputs:
            h, c = self.step(x, h, c)
            states.append(h)
        return states


def lstm_step(cell: LSTMCell, x: Node, h_prev: Node, c_prev: Node) -> tuple[Node, Node]:
    return cell.step(x, h_prev, c_prev)


@dataclass
class EncodedToken:
    l: Node  # forward-LSTM state
    r: Node  # backward-LSTM state
    c: Node  # concat(l, r)


def encode_chars(
    text: str,
    vocab: Vocabulary,
    char_table: EmbeddingTable,
    forward_cell: LSTMCell,
    backward_cell: LSTMCell,
) -> Node:
    """Character BiLSTM summary of one token: concat of the two final states."""
    if not text:
        raise ValueError("cannot encode an empty token")
    embs = [char_table.matrix[i] for i in vocab.char_ids(text)]
    forward_last = forward_cell.run(embs)[-1]
    backward_last = backward_cell.run(list(reversed(embs)))[-1]
    return concat([forward_last, backward_last])


class Encoder:
    """Word + character embedding lookup followed by a word-level BiLSTM."""

    def __init__(
        self,
        vocab: Vocabulary,
        word_table: EmbeddingTable,
        char_table: EmbeddingTable,
        char_forward: LSTMCell,
        char_backward: LSTMCell,
        word_forward: LSTMCell,
        word_backward: LSTMCell,
    ):
        self.vocab = vocab
        self.word_table = word_table
        self.char_table = char_table
        self.char_forward = char_forward
        self.char_backward = char_backward
        self.word_forward = word_forward
        self.word_backward = word_backward

    @classmethod
    def build(
        cls,
        vocab: Vocabulary,
        word_dim: int,
        char_dim: int,
        word_hidden: int,
        char_hidden: int,
        rng: np.random.Generator,
        word_table: EmbeddingTable | None = None,
    ) -> "Encoder":
        if word_table is None:
            word_table = EmbeddingTable.random(vocab.num_words, word_dim, rng)
        elif word_table.dim != word_dim:
            raise ValueError(f"embedding table dim {word_table.dim} != word_dim {word_dim}")
        char_table = EmbeddingTable.random(vocab.num_chars, char_dim, rng)
        char_forward = LSTMCell(char_dim, char_hidden, rng)
        char_backward = LSTMCell(char_dim, char_hidden, rng)
        word_input = word_dim + 2 * char_hidden
        word_forward = LSTMCell(word_input, word_hidden, rng)
        word_backward = LSTMCell(word_input, word_hidden, rng)
        return cls(
            vocab,
            word_table,
            char_table,
            char_forward,
            char_backward,
            word_forward,
            word_backward,
        )

    @property
    def output_dim(self) -> int:
        return 2 * self.word_forward.hidden_size

    def params(self) -> dict[str, Node]:
        out = {"word_emb": self.word_table.matrix, "char_emb": self.char_table.matrix}
        for prefix, cell in (
            ("char_fwd", self.char_forward),
            ("char_bwd", self.char_backward),
            ("word_fwd", self.word_forward),
            ("word_bwd", self.word_backward),
        ):
            for name, node in cell.params().items():
                out[f"{prefix}.{name}"] = node
        return out

    def encode(
        self,
        texts: Sequence[str],
        training: bool = False,
        dropout_p: float = 0.5,
        rng: np.random.Generator | None = None,
    ) -> list[EncodedToken]:
        """Encode a token sequence into per-token bidirectional states.

        Dropout applies to the word-embedding half of the input, only when
        training; rng is required in that case.
        """
        if not texts:
            raise ValueError("cannot encode an empty sentence")
        inputs = []
        for text in texts:
            word_vec = self.word_table.matrix[self.vocab.word_id(text)]
            if training and dropout_p > 0.0:
                if rng is None:
                    raise ValueError("training-mode encoding needs an rng for dropout")
                word_vec = dropout(word_vec, dropout_p, rng)
            char_vec = encode_chars(
                text, self.vocab, self.char_table, self.char_forward, self.char_backward
            )
            inputs.append(concat([word_vec, char_vec]))

        forward_states = self.word_forward.run(inputs)
        backward_states = list(reversed(self.word_backward.run(list(reversed(inputs)))))
        return [
            EncodedToken(l=l, r=r, c=concat([l, r]))
            for l, r in zip(forward_states, backward_states)
        ]


def encode_sentence(
    texts: Sequence[str],
    encoder: Encoder,
    training: bool = False,
    dropout_p: float = 0.5,
    rng: np.random.Generator | None = None,
) -> list[EncodedToken]:
    return encoder.encode(texts, training=training, dropout_p=dropout_p, rng=rng)
