"""DPO and SimPO objectives over the slot scorer, plus the tuning loop.

Both losses act on preference pairs sharing one prompt: a chosen output with
the gold labels and a rejected output with mutated labels.  DPO compares the
policy's log-ratio against a frozen reference; SimPO is reference-free and
normalizes log-probabilities by the slot count, with a target margin gamma.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import kernels
from .features import FeatureVector, SparseBatch, featurize, stack_features
from .mutation import PreferencePair
from .scorer import (AdamW, NonFiniteLossError, SlotScorer, TrainConfig,
                     _batch_log_softmax, cosine_warmup_lr)


class ArchitectureMismatchError(Exception):
    pass


@dataclass(frozen=True)
class PrefConfig:
    beta: float
    gamma: float = 0.0
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be > 0")
        if self.gamma < 0:
            raise ValueError("gamma must be >= 0")

    @classmethod
    def default_dpo(cls, train: TrainConfig | None = None) -> "PrefConfig":
        return cls(beta=0.1, gamma=0.0,
                   train=train or TrainConfig(learning_rate=5e-6))

    @classmethod
    def default_simpo(cls, train: TrainConfig | None = None) -> "PrefConfig":
        return cls(beta=2.0, gamma=0.5,
                   train=train or TrainConfig(learning_rate=1e-6))


def _log_sigmoid(z: float | np.ndarray):
    # -softplus(-z), stable on both tails
    return -np.logaddexp(0.0, -z)


def _pair_grad(model: SlotScorer, x: FeatureVector, y_w: list[int],
               y_l: list[int], scale_w: float, scale_l: float,
               dloss_dz: float) -> np.ndarray:
    """Gradient of ``dloss_dz * (scale_w*logpi(y_w) - scale_l*logpi(y_l))``."""
    logits = model.slot_logits(x)
    probs = np.exp(_batch_log_softmax(logits))
    n_slots, arity = probs.shape
    coef = np.zeros_like(probs)
    for s in range(n_slots):
        coef[s] -= (scale_w - scale_l) * probs[s] * dloss_dz
        coef[s, y_w[s]] += scale_w * dloss_dz
        coef[s, y_l[s]] -= scale_l * dloss_dz
    grad = np.zeros_like(model.weights)
    grad[:, :, x.indices] += coef[:, :, None] * x.values
    return grad


def dpo_margin(policy: SlotScorer, reference: SlotScorer, x: FeatureVector,
               y_w: list[int], y_l: list[int], beta: float) -> float:
    lp_w = policy.logprob(x, y_w).total_logprob
    lp_l = policy.logprob(x, y_l).total_logprob
    ref_w = reference.logprob(x, y_w).total_logprob
    ref_l = reference.logprob(x, y_l).total_logprob
    return beta * ((lp_w - ref_w) - (lp_l - ref_l))


def dpo_loss(policy: SlotScorer, reference: SlotScorer, x: FeatureVector,
             y_w: list[int], y_l: list[int],
             beta: float) -> tuple[float, np.ndarray]:
    """-log sigmoid of the beta-scaled policy-vs-reference log-ratio margin.

    The gradient flows only through the policy; the reference is read-only.
    """
    if not policy.same_architecture(reference):
        raise ArchitectureMismatchError("policy and reference differ")
    z = dpo_margin(policy, reference, x, y_w, y_l, beta)
    loss = float(-_log_sigmoid(z))
    dloss_dz = -1.0 / (1.0 + math.exp(z)) if z > -30 else -1.0  # -sigmoid(-z)
    grad = _pair_grad(policy, x, y_w, y_l, beta, beta, dloss_dz)
    return loss, grad


def simpo_margin(policy: SlotScorer, x: FeatureVector, y_w: list[int],
                 y_l: list[int], beta: float) -> float:
    sw = policy.logprob(x, y_w)
    sl = policy.logprob(x, y_l)
    return (beta / sw.slot_count) * sw.total_logprob \
        - (beta / sl.slot_count) * sl.total_logprob


def simpo_loss(policy: SlotScorer, x: FeatureVector, y_w: list[int],
               y_l: list[int], beta: float,
               gamma: float) -> tuple[float, np.ndarray]:
    """Reference-free loss on length-normalized log-probs with target margin."""
    n = len(policy.slots)
    z = simpo_margin(policy, x, y_w, y_l, beta) - gamma
    loss = float(-_log_sigmoid(z))
    dloss_dz = -1.0 / (1.0 + math.exp(z)) if z > -30 else -1.0
    grad = _pair_grad(policy, x, y_w, y_l, beta / n, beta / n, dloss_dz)
    return loss, grad


@dataclass
class PrefTrainResult:
    model: SlotScorer
    curve: list[dict]  # rows: {"step", "loss", "margin", "lr"}
    margin_initial: float
    margin_final: float


def _pref_arrays(policy: SlotScorer,
                 pairs: list[PreferencePair]) -> tuple[SparseBatch, np.ndarray, np.ndarray]:
    feats = [featurize(p.prompt, policy.text_dim) for p in pairs]
    y_w = np.array([[p.chosen[s] for s in policy.slots] for p in pairs],
                   dtype=np.int64)
    y_l = np.array([[p.rejected[s] for s in policy.slots] for p in pairs],
                   dtype=np.int64)
    return stack_features(feats), y_w, y_l


def _batch_pref_loss(policy: SlotScorer, batch: SparseBatch, y_w: np.ndarray,
                     y_l: np.ndarray, method: str, beta: float, gamma: float,
                     ref_margin: np.ndarray | None,
                     want_grad: bool = True) -> tuple[float, float, np.ndarray | None]:
    """Mean loss, mean margin, and (optionally) the gradient for one batch.

    ``ref_margin`` carries the precomputed per-pair reference log-ratio term
    for DPO (beta * (ref_lp_l - ref_lp_w) folded in below); None for SimPO.
    """
    n_rows = batch.n_rows
    n_slots = len(policy.slots)
    logits = kernels.batch_logits(policy.weights, batch.indptr, batch.indices,
                                  batch.values)
    log_probs = _batch_log_softmax(logits)
    rows = np.arange(n_rows)[:, None]
    cols = np.arange(n_slots)[None, :]
    lp_w = log_probs[rows, cols, y_w].sum(axis=1)
    lp_l = log_probs[rows, cols, y_l].sum(axis=1)
    if method == "dpo":
        scale = beta
        margin = beta * (lp_w - lp_l) + (ref_margin if ref_margin is not None else 0.0)
        z = margin
    else:
        scale = beta / n_slots
        margin = scale * (lp_w - lp_l)
        z = margin - gamma
    loss = float(np.mean(-_log_sigmoid(z)))
    mean_margin = float(np.mean(margin))
    if not want_grad:
        return loss, mean_margin, None
    # dloss/dz = -sigmoid(-z), averaged over the batch
    dz = -1.0 / (1.0 + np.exp(np.clip(z, -500, 500))) / n_rows
    coef = np.zeros_like(log_probs)
    np.add.at(coef, (rows, cols, y_w), scale)
    np.add.at(coef, (rows, cols, y_l), -scale)
    # softmax terms cancel between chosen and rejected (same prompt, same
    # scale), so only the one-hot difference remains
    coef *= dz[:, None, None]
    grad = np.zeros_like(policy.weights)
    kernels.scatter_grad(grad, coef, batch.indptr, batch.indices, batch.values)
    return loss, mean_margin, grad


def train_preference(policy_init: SlotScorer, pairs: list[PreferencePair],
                     method: str, config: PrefConfig) -> PrefTrainResult:
    """Preference-tune an SFT model with AdamW and the shared schedule.

    For DPO a frozen copy of ``policy_init`` becomes the reference.  The curve
    logs per-batch loss/margin before each update; ``margin_initial`` and
    ``margin_final`` are full-dataset margins before and after tuning.
    """
    if method not in ("dpo", "simpo"):
        raise ValueError(f"unknown method '{method}'")
    if not pairs:
        raise ValueError("no preference pairs")
    policy = policy_init.copy()
    tc = config.train
    data, y_w, y_l = _pref_arrays(policy, pairs)
    n = data.n_rows

    ref_margin_all = None
    if method == "dpo":
        # reference log-probs are constants under tuning; precompute once
        reference = policy_init.copy()
        logits = kernels.batch_logits(reference.weights, data.indptr,
                                      data.indices, data.values)
        log_probs = _batch_log_softmax(logits)
        rows = np.arange(n)[:, None]
        cols = np.arange(len(policy.slots))[None, :]
        ref_w = log_probs[rows, cols, y_w].sum(axis=1)
        ref_l = log_probs[rows, cols, y_l].sum(axis=1)
        ref_margin_all = config.beta * (ref_l - ref_w)

    def full_margin() -> float:
        _, m, _ = _batch_pref_loss(policy, data, y_w, y_l, method, config.beta,
                                   config.gamma, ref_margin_all, want_grad=False)
        return m

    margin_initial = full_margin()
    steps_per_epoch = math.ceil(n / tc.batch_size)
    total_steps = steps_per_epoch * tc.epochs
    opt = AdamW(policy.weights.shape, tc.adam_beta1, tc.adam_beta2, tc.adam_eps,
                tc.weight_decay)
    rng = np.random.default_rng(tc.seed)
    curve = []
    step = 0
    for _ in range(tc.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, tc.batch_size):
            order = perm[start:start + tc.batch_size]
            batch = data.take(order)
            rm = ref_margin_all[order] if ref_margin_all is not None else None
            loss, margin, grad = _batch_pref_loss(
                policy, batch, y_w[order], y_l[order], method, config.beta,
                config.gamma, rm)
            if not math.isfinite(loss):
                raise NonFiniteLossError(f"non-finite loss at step {step}")
            lr = cosine_warmup_lr(step, total_steps, tc.learning_rate,
                                  tc.warmup_ratio)
            opt.step(policy.weights, grad, lr)
            curve.append({"step": step, "loss": loss, "margin": margin, "lr": lr})
            step += 1
    margin_final = full_margin()
    return PrefTrainResult(model=policy, curve=curve,
                           margin_initial=margin_initial,
                           margin_final=margin_final)


def save_curve(curve: list[dict], path: str | Path,
               columns: tuple[str, ...] = ("step", "loss", "margin", "lr")) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in curve:
            writer.writerow([repr(row[c]) if isinstance(row.get(c), float)
                             else row.get(c, "") for c in columns])
