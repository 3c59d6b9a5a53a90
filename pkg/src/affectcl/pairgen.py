"""Contrastive pair construction with per-label caps.

Pairs are ordered: (A, B) and (B, A) are distinct draws, since the prompt
template is positionally asymmetric.  Sampling is uniform over ordered pairs
without replacement, capped per label, and fully determined by the seed.  Each
label derives its own seed from ``seed ^ crc32(label)`` so per-label work can
run in any order without changing the output.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass

import numpy as np

from .corpus import EmotionSample, LabelSet, Track
from .templates import PromptInstance, render_crc

DEFAULT_CAP = {Track.A: 3000, Track.B: 6000}


class TooFewSamplesError(Exception):
    pass


class FocusEmotionMissingError(Exception):
    pass


@dataclass(frozen=True)
class PairGenConfig:
    cap_per_label: int
    seed: int = 0

    def __post_init__(self):
        if self.cap_per_label < 1:
            raise ValueError("cap_per_label must be >= 1")

    @classmethod
    def default(cls, track: Track, seed: int = 0) -> "PairGenConfig":
        return cls(cap_per_label=DEFAULT_CAP[track], seed=seed)


@dataclass(frozen=True)
class ContrastivePair:
    """Two samples contrasted on one focus emotion."""

    focus: str
    s1: EmotionSample
    s2: EmotionSample
    v1: int
    v2: int
    summary: str


# Phrase table for contrast summaries, keyed by track and value relation.
_PHRASES_A = {
    "gt": ('the speaker in Conversation1 expresses {label} while the speaker '
           'in Conversation2 does not'),
    "lt": ('the speaker in Conversation2 expresses {label} while the speaker '
           'in Conversation1 does not'),
    "eq_present": 'both conversations show the same presence of {label}',
    "eq_absent": 'both conversations show the same absence of {label}',
}

_PHRASES_B = {
    "gt_exists": ('the speaker in Conversation1 expresses {label} while the '
                  'speaker in Conversation2 does not'),
    "lt_exists": ('the speaker in Conversation2 expresses {label} while the '
                  'speaker in Conversation1 does not'),
    "gt": ('the speaker in Conversation1 expresses {label} with higher '
           'intensity than the speaker in Conversation2'),
    "lt": ('the speaker in Conversation1 expresses {label} with lower '
           'intensity than the speaker in Conversation2'),
    "eq_present": 'both conversations show the same intensity of {label}',
    "eq_absent": 'both conversations show the same absence of {label}',
}


def summarize_contrast(focus: str, v1: int, v2: int, track: Track) -> str:
    """Deterministic one-sentence contrast summary from the phrase table."""
    if track is Track.A:
        if v1 > v2:
            key = "gt"
        elif v1 < v2:
            key = "lt"
        else:
            key = "eq_present" if v1 > 0 else "eq_absent"
        return _PHRASES_A[key].format(label=focus)
    if v1 == v2:
        key = "eq_present" if v1 > 0 else "eq_absent"
    elif v2 == 0:
        key = "gt_exists"
    elif v1 == 0:
        key = "lt_exists"
    else:
        key = "gt" if v1 > v2 else "lt"
    return _PHRASES_B[key].format(label=focus)


def make_pair(s1: EmotionSample, s2: EmotionSample, focus: str) -> ContrastivePair:
    if focus not in s1.values or focus not in s2.values:
        raise FocusEmotionMissingError(focus)
    if s1.track is not s2.track:
        raise ValueError("paired samples must share a track")
    v1, v2 = s1.values[focus], s2.values[focus]
    summary = summarize_contrast(focus, v1, v2, s1.track)
    return ContrastivePair(focus=focus, s1=s1, s2=s2, v1=v1, v2=v2, summary=summary)


def _label_rng(seed: int, focus: str) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF,
                                zlib.crc32(focus.encode())]))


def sample_pairs(dataset: list[EmotionSample], focus: str,
                 config: PairGenConfig) -> list[ContrastivePair]:
    """Draw up to ``cap_per_label`` distinct ordered pairs for one emotion."""
    usable = [s for s in dataset if focus in s.values]
    n = len(usable)
    if n < 2:
        raise TooFewSamplesError(f"need >= 2 samples with '{focus}', got {n}")
    total = n * (n - 1)
    rng = _label_rng(config.seed, focus)
    if config.cap_per_label >= total:
        picks = np.arange(total)
    else:
        picks = rng.choice(total, size=config.cap_per_label, replace=False)
    pairs = []
    for flat in picks:
        a = int(flat) // (n - 1)
        r = int(flat) % (n - 1)
        b = r if r < a else r + 1
        pairs.append(make_pair(usable[a], usable[b], focus))
    return pairs


def build_crc_training_set(dataset: list[EmotionSample], label_set: LabelSet,
                           config: PairGenConfig) -> list[PromptInstance]:
    """Rendered CRC instances for every emotion, concatenated in canonical order."""
    instances = []
    for focus in label_set.emotions:
        for pair in sample_pairs(dataset, focus, config):
            instances.append(render_crc(pair))
    return instances
