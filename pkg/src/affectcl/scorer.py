"""Trainable slot-softmax surrogate scorer.

The scorer replaces the LLM at desk scale: a structured output is a tuple of
label slots, and the model assigns each slot an independent softmax over its
value range given hashed text features.  log-probability of a full output is
the sum of per-slot log-softmax terms; deterministic template tokens carry
probability 1 and contribute nothing.  Gradients are exact (softmax
cross-entropy closed form), so finite-difference checks hold tightly.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .corpus import LabelSet, Track
from .features import (DEFAULT_DIM, FeatureVector, SparseBatch, crc_feature_dim,
                       crc_features, featurize, stack_features)
from .templates import (Prediction, PromptInstance, PromptTask, parse_crc_output,
                        parse_sp_output)

CHECKPOINT_MAGIC = b"AFCL"
CHECKPOINT_VERSION = 1

DEFAULT_LR = {"sft": 4e-4, "crc": 4e-4, "dpo": 5e-6, "simpo": 1e-6}


class NonFiniteLossError(Exception):
    pass


class SlotMismatchError(Exception):
    pass


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 4e-4
    epochs: int = 3
    batch_size: int = 128
    adam_beta1: float = 0.8
    adam_beta2: float = 0.99
    adam_eps: float = 1e-8
    weight_decay: float = 0.0
    warmup_ratio: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if not 0.0 <= self.warmup_ratio <= 1.0:
            raise ValueError("warmup_ratio must be in [0, 1]")


@dataclass(frozen=True)
class ScoredOutput:
    per_slot_logprob: tuple[float, ...]
    total_logprob: float
    slot_count: int


class SlotScorer:
    """Per-slot softmax model over sparse features.

    ``weights`` has shape (n_slots, arity, dim).  SP scorers have one slot per
    emotion in the label set; CRC scorers have two conversation slots and
    condition on the focus emotion through a one-hot feature block.
    """

    def __init__(self, task: PromptTask, track: Track, slots: tuple[str, ...],
                 text_dim: int, dim: int, weights: np.ndarray | None = None,
                 label_set: LabelSet | None = None):
        self.task = task
        self.track = track
        self.slots = slots
        self.text_dim = text_dim
        self.dim = dim
        self.label_set = label_set
        if weights is None:
            weights = np.zeros((len(slots), track.arity, dim), dtype=np.float64)
        if weights.shape != (len(slots), track.arity, dim):
            raise ValueError(f"weight shape {weights.shape} does not match model")
        self.weights = weights

    @classmethod
    def for_sp(cls, label_set: LabelSet, track: Track,
               text_dim: int = DEFAULT_DIM) -> "SlotScorer":
        return cls(task=PromptTask.SP_A if track is Track.A else PromptTask.SP_B,
                   track=track, slots=label_set.emotions, text_dim=text_dim,
                   dim=text_dim, label_set=label_set)

    @classmethod
    def for_crc(cls, track: Track, text_dim: int = DEFAULT_DIM,
                label_set: LabelSet | None = None) -> "SlotScorer":
        return cls(task=PromptTask.CRC_A if track is Track.A else PromptTask.CRC_B,
                   track=track, slots=("conv1", "conv2"), text_dim=text_dim,
                   dim=crc_feature_dim(text_dim), label_set=label_set)

    @property
    def is_crc(self) -> bool:
        return self.task in (PromptTask.CRC_A, PromptTask.CRC_B)

    def copy(self) -> "SlotScorer":
        return SlotScorer(task=self.task, track=self.track, slots=self.slots,
                          text_dim=self.text_dim, dim=self.dim,
                          weights=self.weights.copy(), label_set=self.label_set)

    def same_architecture(self, other: "SlotScorer") -> bool:
        return (self.task is other.task and self.track is other.track
                and self.slots == other.slots and self.dim == other.dim)

    # --- featurization ---------------------------------------------------

    def features_for_text(self, input_text: str) -> FeatureVector:
        if self.is_crc:
            raise SlotMismatchError("CRC scorer needs both conversation texts")
        return featurize(input_text, self.text_dim)

    def features_for_instance(self, inst: PromptInstance) -> FeatureVector:
        if self.is_crc:
            texts = inst.meta["texts"]
            return crc_features(texts[0], texts[1], inst.meta["focus"],
                                self.text_dim)
        return featurize(inst.input_text, self.text_dim)

    def values_for_instance(self, inst: PromptInstance) -> list[int]:
        """Gold slot values parsed from the instance's target text."""
        if self.is_crc:
            parsed = parse_crc_output(inst.target_text, self.track)
            if parsed is None:
                raise SlotMismatchError("unparseable CRC target")
            return [parsed[0], parsed[1]]
        assert self.label_set is not None
        pred = parse_sp_output(inst.target_text, self.label_set, self.track)
        if not pred.ok:
            raise SlotMismatchError("unparseable SP target")
        return [pred.values[e] for e in self.slots]

    # --- scoring ----------------------------------------------------------

    def slot_logits(self, x: FeatureVector) -> np.ndarray:
        return self.weights[:, :, x.indices] @ x.values

    def logprob(self, x: FeatureVector, y: list[int] | dict[str, int]) -> ScoredOutput:
        """Exact log pi(y|x) as a sum of per-slot log-softmax terms (nats)."""
        y_list = self._slot_values(y)
        logits = self.slot_logits(x)
        log_probs = logits - _logsumexp(logits)
        per_slot = tuple(float(log_probs[s, y_list[s]]) for s in range(len(self.slots)))
        return ScoredOutput(per_slot_logprob=per_slot,
                            total_logprob=float(sum(per_slot)),
                            slot_count=len(self.slots))

    def predict_values(self, x: FeatureVector) -> list[int]:
        """Argmax per slot, ties broken toward the smaller value."""
        logits = self.slot_logits(x)
        return [int(np.argmax(logits[s])) for s in range(len(self.slots))]

    def predict(self, x: FeatureVector) -> Prediction:
        if self.is_crc:
            raise SlotMismatchError("use crc_infer for CRC scorers")
        values = self.predict_values(x)
        value_map = {e: values[i] for i, e in enumerate(self.slots)}
        from .templates import render_label_string
        assert self.label_set is not None
        raw = render_label_string(value_map, self.label_set)
        return Prediction(values=value_map, parse_status="ok", raw=raw)

    def _slot_values(self, y: list[int] | dict[str, int]) -> list[int]:
        if isinstance(y, dict):
            missing = [s for s in self.slots if s not in y]
            if missing:
                raise SlotMismatchError(f"missing slots: {missing}")
            y = [y[s] for s in self.slots]
        if len(y) != len(self.slots):
            raise SlotMismatchError(
                f"expected {len(self.slots)} slot values, got {len(y)}")
        for v in y:
            if v not in self.track.value_range:
                raise SlotMismatchError(f"value {v} out of track range")
        return list(y)

    # --- persistence --------------------------------------------------------

    def save(self, path: str | Path) -> None:
        header = json.dumps({
            "task": self.task.value,
            "track": self.track.value,
            "slots": list(self.slots),
            "text_dim": self.text_dim,
            "dim": self.dim,
            "label_set": ({"language": self.label_set.language,
                           "emotions": list(self.label_set.emotions)}
                          if self.label_set else None),
        }, sort_keys=True).encode("utf-8")
        body = np.ascontiguousarray(self.weights, dtype="<f8").tobytes()
        with Path(path).open("wb") as fh:
            fh.write(CHECKPOINT_MAGIC)
            fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
            fh.write(header)
            fh.write(body)

    @classmethod
    def load(cls, path: str | Path) -> "SlotScorer":
        with Path(path).open("rb") as fh:
            if fh.read(4) != CHECKPOINT_MAGIC:
                raise ValueError(f"{path}: not a checkpoint file")
            version, header_len = struct.unpack("<II", fh.read(8))
            if version != CHECKPOINT_VERSION:
                raise ValueError(f"{path}: unsupported checkpoint version {version}")
            meta = json.loads(fh.read(header_len))
            track = Track(meta["track"])
            slots = tuple(meta["slots"])
            weights = np.frombuffer(
                fh.read(), dtype="<f8").reshape(len(slots), track.arity,
                                                meta["dim"]).copy()
        label_set = None
        if meta.get("label_set"):
            label_set = LabelSet(language=meta["label_set"]["language"],
                                 emotions=tuple(meta["label_set"]["emotions"]))
        return cls(task=PromptTask(meta["task"]), track=track, slots=slots,
                   text_dim=meta["text_dim"], dim=meta["dim"], weights=weights,
                   label_set=label_set)


def _logsumexp(logits: np.ndarray) -> np.ndarray:
    m = logits.max(axis=-1, keepdims=True)
    return m + np.log(np.exp(logits - m).sum(axis=-1, keepdims=True))


def _batch_log_softmax(logits: np.ndarray) -> np.ndarray:
    return logits - _logsumexp(logits)


def sft_step(model: SlotScorer, batch: SparseBatch,
             ys: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean NLL over the batch and its exact gradient.

    ``ys`` holds one value index per (row, slot).
    """
    if batch.n_rows == 0:
        raise ValueError("empty batch")
    logits = kernels.batch_logits(model.weights, batch.indptr, batch.indices,
                                  batch.values)
    log_probs = _batch_log_softmax(logits)
    rows = np.arange(batch.n_rows)[:, None]
    cols = np.arange(len(model.slots))[None, :]
    loss = float(-log_probs[rows, cols, ys].sum() / batch.n_rows)
    coef = np.exp(log_probs)
    coef[rows, cols, ys] -= 1.0
    coef /= batch.n_rows
    grad = np.zeros_like(model.weights)
    kernels.scatter_grad(grad, coef, batch.indptr, batch.indices, batch.values)
    return loss, grad


def cosine_warmup_lr(step: int, total_steps: int, peak_lr: float,
                     warmup_ratio: float) -> float:
    """Linear warmup from 0 to the peak, then cosine decay to 0."""
    if total_steps <= 0:
        return 0.0
    warmup = warmup_ratio * total_steps
    if warmup > 0 and step < warmup:
        return peak_lr * step / warmup
    remaining = total_steps - warmup
    if remaining <= 0:
        return peak_lr
    progress = (step - warmup) / remaining
    return peak_lr * 0.5 * (1.0 + math.cos(math.pi * progress))


class AdamW:
    """Decoupled-weight-decay Adam on the full weight tensor."""

    def __init__(self, shape: tuple[int, ...], beta1: float, beta2: float,
                 eps: float, weight_decay: float):
        self.beta1, self.beta2 = beta1, beta2
        self.eps = eps
        self.weight_decay = weight_decay
        self.m = np.zeros(shape, dtype=np.float64)
        self.v = np.zeros(shape, dtype=np.float64)
        self.t = 0

    def step(self, weights: np.ndarray, grad: np.ndarray, lr: float) -> None:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        weights -= lr * (m_hat / (np.sqrt(v_hat) + self.eps)
                         + self.weight_decay * weights)


@dataclass
class TrainResult:
    model: SlotScorer
    curve: list[dict]  # rows: {"step", "loss", "lr"}


def build_sft_arrays(model: SlotScorer,
                     instances: list[PromptInstance]) -> tuple[SparseBatch, np.ndarray]:
    """Featurize instances and parse their targets into slot-value arrays."""
    feats = [model.features_for_instance(inst) for inst in instances]
    ys = np.array([model.values_for_instance(inst) for inst in instances],
                  dtype=np.int64)
    return stack_features(feats), ys


def train(model: SlotScorer, data: SparseBatch, ys: np.ndarray,
          config: TrainConfig) -> TrainResult:
    """SFT with AdamW and warmup+cosine schedule; deterministic given the seed."""
    if data.n_rows == 0:
        raise ValueError("empty training data")
    model = model.copy()
    n = data.n_rows
    steps_per_epoch = math.ceil(n / config.batch_size)
    total_steps = steps_per_epoch * config.epochs
    opt = AdamW(model.weights.shape, config.adam_beta1, config.adam_beta2,
                config.adam_eps, config.weight_decay)
    rng = np.random.default_rng(config.seed)
    curve = []
    step = 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            order = perm[start:start + config.batch_size]
            batch = data.take(order)
            loss, grad = sft_step(model, batch, ys[order])
            if not math.isfinite(loss):
                raise NonFiniteLossError(f"non-finite loss at step {step}")
            lr = cosine_warmup_lr(step, total_steps, config.learning_rate,
                                  config.warmup_ratio)
            opt.step(model.weights, grad, lr)
            curve.append({"step": step, "loss": loss, "lr": lr})
            step += 1
    return TrainResult(model=model, curve=curve)


def train_on_prompts(model: SlotScorer, instances: list[PromptInstance],
                     config: TrainConfig) -> TrainResult:
    data, ys = build_sft_arrays(model, instances)
    return train(model, data, ys, config)
