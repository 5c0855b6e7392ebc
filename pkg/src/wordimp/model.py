"""Full word-importance models: encoder plus one prediction head.

A model owns its vocabulary, embedding tables, LSTM cells and head, and
knows how to compute its training loss per utterance, predict scores and
classes, and convert itself to and from a checkpoint.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .autodiff import Node
from .corpus import CLASS_MIDPOINTS, NUM_CLASSES, AnnotatedUtterance, discretize
from .encoder import EmbeddingTable, Encoder, Vocabulary
from .heads import CRFHead, SigmoidHead, crf_nll, squared_loss, viterbi_decode
from .training import Checkpoint, ConfigError

HEAD_KINDS = ("crf", "sig")


@dataclass
class ModelConfig:
    word_dim: int = 100
    char_dim: int = 100
    word_hidden: int = 300
    char_hidden: int = 100
    head: str = "sig"

    def __post_init__(self):
        if self.head not in HEAD_KINDS:
            raise ConfigError(f"head must be one of {HEAD_KINDS}, got {self.head!r}")
        if min(self.word_dim, self.char_dim, self.word_hidden, self.char_hidden) < 1:
            raise ConfigError("all model dimensions must be positive")


class WordImportanceModel:
    def __init__(self, config: ModelConfig, encoder: Encoder, head):
        self.config = config
        self.encoder = encoder
        self.head = head

    @property
    def head_kind(self) -> str:
        return self.config.head

    @classmethod
    def build(
        cls,
        config: ModelConfig,
        vocab: Vocabulary,
        rng: np.random.Generator,
        word_table: EmbeddingTable | None = None,
    ) -> "WordImportanceModel":
        """Fresh model; rng consumption order is fixed so a seed pins every weight."""
        encoder = Encoder.build(
            vocab,
            word_dim=config.word_dim,
            char_dim=config.char_dim,
            word_hidden=config.word_hidden,
            char_hidden=config.char_hidden,
            rng=rng,
            word_table=word_table,
        )
        if config.head == "crf":
            head = CRFHead(encoder.output_dim, NUM_CLASSES, rng)
        else:
            head = SigmoidHead(encoder.output_dim, rng)
        return cls(config, encoder, head)

    def params(self) -> dict[str, Node]:
        out = self.encoder.params()
        out.update(self.head.params())
        return out

    def loss(
        self,
        item: AnnotatedUtterance,
        training: bool = True,
        dropout_p: float = 0.5,
        rng: np.random.Generator | None = None,
    ) -> Node:
        """Scalar training loss for one annotated utterance."""
        texts = [t.text for t in item.utterance.tokens]
        encoded = self.encoder.encode(
            texts, training=training, dropout_p=dropout_p, rng=rng
        )
        if self.config.head == "crf":
            tags = [int(discretize(s)) for s in item.scores]
            return crf_nll(self.head.emissions(encoded), self.head.transition, tags)
        return squared_loss(self.head.scores(encoded), list(item.scores))

    def predict(self, texts: list[str]) -> tuple[list[float], list[int]]:
        """Continuous scores and class ids for a token sequence.

        The CRF head predicts classes and maps them to class midpoints for
        the continuous scale; the sigmoid head predicts scores and
        discretizes them.
        """
        encoded = self.encoder.encode(texts, training=False)
        if self.config.head == "crf":
            emissions = self.head.emissions(encoded).value
            classes, _ = viterbi_decode(emissions, self.head.transition.value)
            scores = [CLASS_MIDPOINTS[c] for c in classes]
            return scores, classes
        scores = [float(v) for v in self.head.scores(encoded).value]
        classes = [int(discretize(s)) for s in scores]
        return scores, classes

    def predict_scores(self, texts: list[str]) -> list[float]:
        return self.predict(texts)[0]

    def predict_classes(self, texts: list[str]) -> list[int]:
        return self.predict(texts)[1]

    def load_param_values(self, values: dict[str, np.ndarray]) -> None:
        params = self.params()
        if set(values) != set(params):
            missing = set(params) ^ set(values)
            raise ConfigError(f"parameter set mismatch: {sorted(missing)}")
        for name, arr in values.items():
            if params[name].value.shape != arr.shape:
                raise ConfigError(
                    f"shape mismatch for {name}: {params[name].value.shape} vs {arr.shape}"
                )
            params[name].value[...] = arr

    def checkpoint(self) -> Checkpoint:
        vocab = self.encoder.vocab
        config = asdict(self.config)
        config["unk_word_id"] = vocab.unk_word_id
        config["unk_char_id"] = vocab.unk_char_id
        return Checkpoint(
            params={name: p.value.copy() for name, p in self.params().items()},
            word_to_id=dict(vocab.word_to_id),
            char_to_id=dict(vocab.char_to_id),
            config=config,
        )

    @classmethod
    def from_checkpoint(cls, checkpoint: Checkpoint) -> "WordImportanceModel":
        raw = dict(checkpoint.config)
        unk_word_id = raw.pop("unk_word_id")
        unk_char_id = raw.pop("unk_char_id")
        config = ModelConfig(**raw)
        vocab = Vocabulary(
            word_to_id=dict(checkpoint.word_to_id),
            char_to_id=dict(checkpoint.char_to_id),
            unk_word_id=unk_word_id,
            unk_char_id=unk_char_id,
        )
        model = cls.build(config, vocab, rng=np.random.default_rng(0))
        model.load_param_values(checkpoint.params)
        return model
