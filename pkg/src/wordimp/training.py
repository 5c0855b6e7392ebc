"""Adam optimization, the epoch loop, and binary model checkpoints.

Checkpoint layout (all integers little-endian)::

    magic       5 bytes  b"WIMP1"
    version     u16
    header_len  u32
    header      UTF-8 JSON: config, vocabulary maps, parameter manifest
                of (name, shape) pairs in sorted-name order
    data        raw float64 arrays, C order, manifest order
    crc32       u32 over every preceding byte

Loading distinguishes bad magic/version, truncation, and checksum
failures; a round-trip is bit-exact.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .autodiff import Node, NumericError, backward, zero_gradients
from .corpus import DatasetSplit, discretize
from .evaluation import macro_f1, rms


class ConfigError(ValueError):
    """Mismatched or invalid run configuration."""


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CheckpointVersionError(CheckpointError):
    """Unrecognized magic bytes or unsupported format version."""


class CheckpointTruncatedError(CheckpointError):
    """File ends before the manifest says it should."""


class CheckpointChecksumError(CheckpointError):
    """Stored CRC-32 does not match the file contents."""


CHECKPOINT_MAGIC = b"WIMP1"
CHECKPOINT_VERSION = 1


@dataclass
class TrainConfig:
    lr0: float = 0.001
    lr_decay: float = 0.9  # per-epoch exponential learning-rate decay
    batch_size: int = 20
    dropout_p: float = 0.5
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    clip_norm: float | None = 5.0  # global-norm gradient clipping; None disables

    def __post_init__(self):
        if self.lr0 <= 0 or self.lr_decay <= 0 or self.batch_size <= 0:
            raise ConfigError("lr0, lr_decay and batch_size must be positive")
        if self.max_epochs <= 0 or self.patience < 0:
            raise ConfigError("max_epochs must be positive and patience non-negative")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.clip_norm is not None and self.clip_norm <= 0:
            raise ConfigError("clip_norm must be positive or None")


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def for_params(cls, params: dict[str, Node]) -> "AdamState":
        return cls(
            m={name: np.zeros_like(p.value) for name, p in params.items()},
            v={name: np.zeros_like(p.value) for name, p in params.items()},
        )


def adam_step(params: dict[str, Node], state: AdamState, lr: float) -> None:
    """Bias-corrected Adam update in place, reading each node's grad."""
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, p in params.items():
        g = p.grad
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for parameter {name!r}")
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * (g * g)
        m_hat = state.m[name] / (1.0 - b1**state.t)
        v_hat = state.v[name] / (1.0 - b2**state.t)
        p.value -= lr * m_hat / (np.sqrt(v_hat) + state.eps)


def clip_gradients(params: dict[str, Node], max_norm: float) -> float:
    """Scale all gradients so their global L2 norm is at most max_norm."""
    total = math.sqrt(sum(float((p.grad * p.grad).sum()) for p in params.values()))
    if not math.isfinite(total):
        raise NumericError("non-finite gradient norm")
    if total > max_norm:
        factor = max_norm / total
        for p in params.values():
            p.grad *= factor
    return total


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    dev_metric: float


@dataclass
class Checkpoint:
    """Everything needed to rebuild a model: parameters, vocab, config."""

    params: dict[str, np.ndarray]
    word_to_id: dict[str, int]
    char_to_id: dict[str, int]
    config: dict
    version: int = CHECKPOINT_VERSION

    @property
    def head(self) -> str:
        return self.config["head"]


def _dev_metric(model, dev: list) -> float:
    gold_scores: list[float] = []
    gold_classes: list[int] = []
    pred_scores: list[float] = []
    pred_classes: list[int] = []
    for item in dev:
        texts = [t.text for t in item.utterance.tokens]
        scores, classes = model.predict(texts)
        pred_scores.extend(scores)
        pred_classes.extend(classes)
        gold_scores.extend(item.scores)
        gold_classes.extend(int(discretize(s)) for s in item.scores)
    if model.head_kind == "crf":
        macro, _ = macro_f1(pred_classes, gold_classes)
        return macro
    return rms(pred_scores, gold_scores)


def train(
    model,
    split: DatasetSplit,
    config: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> tuple[Checkpoint, list[EpochRecord]]:
    """Run the epoch loop and return the best-dev checkpoint plus history.

    Epoch e uses lr0 * lr_decay**e.  Batches average per-sentence losses;
    the dev metric is macro-F1 for the CRF head (higher is better) and RMS
    for the sigmoid head (lower is better).  Training stops once the dev
    metric has failed to improve for more than `patience` epochs, and the
    model is left holding the best-dev parameters.
    """
    if not split.train or not split.dev:
        raise ValueError("training needs non-empty train and dev sets")
    rng = np.random.default_rng(config.seed)
    params = model.params()
    state = AdamState.for_params(params)
    higher_better = model.head_kind == "crf"

    history: list[EpochRecord] = []
    best_metric: float | None = None
    best_params: dict[str, np.ndarray] | None = None
    bad_epochs = 0

    for epoch in range(config.max_epochs):
        lr = config.lr0 * config.lr_decay**epoch
        order = rng.permutation(len(split.train))
        total_loss = 0.0
        for lo in range(0, len(order), config.batch_size):
            batch = [split.train[i] for i in order[lo : lo + config.batch_size]]
            zero_gradients(params.values())
            losses = [
                model.loss(item, training=True, dropout_p=config.dropout_p, rng=rng)
                for item in batch
            ]
            batch_loss = losses[0]
            for extra in losses[1:]:
                batch_loss = batch_loss + extra
            batch_loss = batch_loss * (1.0 / len(batch))
            backward(batch_loss)
            if config.clip_norm is not None:
                clip_gradients(params, config.clip_norm)
            adam_step(params, state, lr)
            total_loss += float(batch_loss.value) * len(batch)

        record = EpochRecord(
            epoch=epoch,
            lr=lr,
            train_loss=total_loss / len(split.train),
            dev_metric=_dev_metric(model, split.dev),
        )
        history.append(record)
        if on_epoch is not None:
            on_epoch(record)

        improved = best_metric is None or (
            record.dev_metric > best_metric
            if higher_better
            else record.dev_metric < best_metric
        )
        if improved:
            best_metric = record.dev_metric
            best_params = {name: p.value.copy() for name, p in params.items()}
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs > config.patience:
                break

    assert best_params is not None
    model.load_param_values(best_params)
    return model.checkpoint(), history


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    names = sorted(checkpoint.params)
    header = {
        "config": checkpoint.config,
        "word_to_id": checkpoint.word_to_id,
        "char_to_id": checkpoint.char_to_id,
        "params": [[name, list(checkpoint.params[name].shape)] for name in names],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    blob = bytearray()
    blob += CHECKPOINT_MAGIC
    blob += struct.pack("<H", checkpoint.version)
    blob += struct.pack("<I", len(header_bytes))
    blob += header_bytes
    for name in names:
        arr = np.ascontiguousarray(checkpoint.params[name], dtype="<f8")
        blob += arr.tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)))
    with open(path, "wb") as handle:
        handle.write(bytes(blob))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as handle:
        blob = handle.read()
    preamble = len(CHECKPOINT_MAGIC) + 2 + 4
    if len(blob) < preamble + 4:
        raise CheckpointTruncatedError(f"file too short ({len(blob)} bytes)")
    if blob[:5] != CHECKPOINT_MAGIC:
        raise CheckpointVersionError(f"bad magic {blob[:5]!r}")
    (version,) = struct.unpack("<H", blob[5:7])
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(f"unsupported version {version}")
    (header_len,) = struct.unpack("<I", blob[7:11])
    header_end = preamble + header_len
    if len(blob) < header_end + 4:
        raise CheckpointTruncatedError("header extends past end of file")
    try:
        header = json.loads(blob[preamble:header_end].decode("utf-8"))
        manifest = [(str(name), tuple(int(d) for d in shape)) for name, shape in header["params"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointChecksumError(f"corrupt header: {exc}") from None

    data_len = sum(8 * int(np.prod(shape, dtype=np.int64)) for _, shape in manifest)
    expected_total = header_end + data_len + 4
    if len(blob) < expected_total:
        raise CheckpointTruncatedError(
            f"expected {expected_total} bytes, file has {len(blob)}"
        )
    if len(blob) > expected_total:
        raise CheckpointChecksumError("trailing bytes after checksum")
    (stored_crc,) = struct.unpack("<I", blob[-4:])
    if zlib.crc32(blob[:-4]) != stored_crc:
        raise CheckpointChecksumError("CRC-32 mismatch")

    params: dict[str, np.ndarray] = {}
    offset = header_end
    for name, shape in manifest:
        count = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=offset)
        params[name] = arr.reshape(shape).astype(np.float64)
        offset += 8 * count
    return Checkpoint(
        params=params,
        word_to_id={str(k): int(v) for k, v in header["word_to_id"].items()},
        char_to_id={str(k): int(v) for k, v in header["char_to_id"].items()},
        config=header["config"],
        version=version,
    )
