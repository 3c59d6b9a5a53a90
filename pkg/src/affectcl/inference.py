"""Direct SP inference and anchored CRC voting inference.

CRC inference pairs each test sample with N randomly drawn training anchors,
placing the test sample at a random position each time, and takes the modal
predicted value.  Ties break toward the smaller value.  Per-sample seeds
derive from (seed, sample id, emotion), so parallel or reordered evaluation
cannot change results.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .corpus import EmotionSample, LabelSet, Track
from .features import crc_features
from .scorer import SlotScorer
from .templates import Prediction, render_label_string

DEFAULT_VOTES = {Track.A: 3, Track.B: 7}


@dataclass(frozen=True)
class VoteConfig:
    n_votes: int
    seed: int = 0

    def __post_init__(self):
        if self.n_votes < 1:
            raise ValueError("n_votes must be >= 1")

    @classmethod
    def default(cls, track: Track, seed: int = 0) -> "VoteConfig":
        return cls(n_votes=DEFAULT_VOTES[track], seed=seed)


def majority_vote(votes: list[int]) -> int:
    """Modal value; ties break toward the smaller value."""
    if not votes:
        raise ValueError("empty vote list")
    counts: dict[int, int] = {}
    for v in votes:
        counts[v] = counts.get(v, 0) + 1
    best = max(counts.values())
    return min(v for v, c in counts.items() if c == best)


def sp_infer(model: SlotScorer, samples: list[EmotionSample],
             fault_rate: float = 0.0, fault_seed: int = 0) -> list[Prediction]:
    """One prediction per sample, order preserved.

    ``fault_rate`` injects corrupted raw outputs with that probability so the
    parse-failure metric has something to measure; the surrogate itself can
    only emit well-formed strings.
    """
    rng = np.random.default_rng(fault_seed) if fault_rate > 0 else None
    preds = []
    for sample in samples:
        if rng is not None and rng.random() < fault_rate:
            preds.append(Prediction(values={}, parse_status="malformed",
                                    raw="<corrupted output>"))
            continue
        x = model.features_for_text(_sp_input(model, sample))
        preds.append(model.predict(x))
    return preds


def _sp_input(model: SlotScorer, sample: EmotionSample) -> str:
    from .templates import render_sp
    assert model.label_set is not None
    return render_sp(sample, model.label_set).input_text


@dataclass
class VoteTally:
    emotion: str
    votes: list[int]
    result: int
    # anchor sanity diagnostic: (anchor gold, anchor predicted) per repetition
    anchor_checks: list[tuple[int, int]] = field(default_factory=list)


def _sample_rng(seed: int, sample_id: str, emotion: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(
        [seed & 0xFFFFFFFFFFFFFFFF, zlib.crc32(sample_id.encode()),
         zlib.crc32(emotion.encode())]))


def crc_infer_one(model: SlotScorer, test: EmotionSample,
                  anchors: list[EmotionSample], focus: str,
                  config: VoteConfig) -> VoteTally:
    """Vote the focus-emotion value for one test sample."""
    if not anchors:
        raise ValueError("anchors must be non-empty")
    rng = _sample_rng(config.seed, test.id, focus)
    votes = []
    checks = []
    for _ in range(config.n_votes):
        anchor = anchors[int(rng.integers(len(anchors)))]
        test_position = int(rng.integers(1, 3))
        if test_position == 1:
            text1, text2 = test.text, anchor.text
        else:
            text1, text2 = anchor.text, test.text
        x = crc_features(text1, text2, focus, model.text_dim)
        v1, v2 = model.predict_values(x)
        if test_position == 1:
            votes.append(v1)
            checks.append((anchor.values.get(focus, -1), v2))
        else:
            votes.append(v2)
            checks.append((anchor.values.get(focus, -1), v1))
    return VoteTally(emotion=focus, votes=votes, result=majority_vote(votes),
                     anchor_checks=checks)


def crc_infer(model: SlotScorer, tests: list[EmotionSample],
              anchors: list[EmotionSample], label_set: LabelSet,
              config: VoteConfig) -> tuple[list[Prediction], list[dict[str, VoteTally]]]:
    """Per-sample predictions over the full label set, with vote tallies."""
    preds = []
    tallies = []
    for test in tests:
        per_emotion = {}
        values = {}
        for emotion in label_set.emotions:
            tally = crc_infer_one(model, test, anchors, emotion, config)
            per_emotion[emotion] = tally
            values[emotion] = tally.result
        raw = render_label_string(values, label_set)
        preds.append(Prediction(values=values, parse_status="ok", raw=raw))
        tallies.append(per_emotion)
    return preds, tallies
