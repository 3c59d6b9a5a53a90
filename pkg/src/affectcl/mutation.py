"""Preference-pair generation by label mutation.

A rejected output keeps the exact target format of the standard-prediction
template but carries wrong scores on a randomly chosen subset of labels.  The
number of mutated labels follows a fixed distribution over 1..5; each mutated
value is drawn uniformly from the track's range minus the gold value.  Format
is never corrupted, only scores change.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .corpus import EmotionSample, LabelSet, Track, _read_header, _write_header
from .templates import render_label_string, render_sp

# Probabilities of mutating 1..5 labels, as published (sum 0.999);
# renormalized to 1.0 on construction.
RAW_MUTATION_PROBS = (0.638, 0.261, 0.083, 0.016, 0.001)

DEFAULT_REPS = {Track.A: 5, Track.B: 15}


@dataclass(frozen=True)
class MutationDistribution:
    probs: tuple[float, ...]

    @classmethod
    def default(cls) -> "MutationDistribution":
        total = sum(RAW_MUTATION_PROBS)
        return cls(probs=tuple(p / total for p in RAW_MUTATION_PROBS))

    def truncated(self, label_count: int) -> np.ndarray:
        """Probabilities over 1..min(5, label_count), renormalized."""
        k = min(len(self.probs), label_count)
        p = np.asarray(self.probs[:k], dtype=np.float64)
        return p / p.sum()


@dataclass(frozen=True)
class PreferencePair:
    """Prompt with a correct (chosen) and a label-mutated (rejected) output."""

    prompt: str
    chosen: dict[str, int]
    rejected: dict[str, int]
    mutated: tuple[str, ...]
    chosen_text: str
    rejected_text: str
    sample_id: str = ""


def draw_mutation_count(dist: MutationDistribution, label_count: int,
                        rng: np.random.Generator,
                        size: int | None = None) -> int | np.ndarray:
    """Draw how many labels to mutate; vectorized when ``size`` is given."""
    if label_count < 1:
        raise ValueError("label_count must be >= 1")
    p = dist.truncated(label_count)
    draws = rng.choice(len(p), size=size, p=p) + 1
    return draws if size is not None else int(draws)


def mutate_labels(gold: dict[str, int], track: Track, k: int,
                  rng: np.random.Generator) -> tuple[dict[str, int], tuple[str, ...]]:
    """Replace k gold values with uniformly drawn wrong values.

    Returns the mutated map and the mutated emotion names.
    """
    emotions = list(gold)
    if k > len(emotions):
        raise ValueError(f"k={k} exceeds label count {len(emotions)}")
    chosen_idx = rng.choice(len(emotions), size=k, replace=False)
    mutated = dict(gold)
    names = []
    arity = track.arity
    for i in sorted(int(j) for j in chosen_idx):
        emotion = emotions[i]
        # uniform over the range minus the gold value
        offset = int(rng.integers(arity - 1))
        wrong = offset if offset < gold[emotion] else offset + 1
        mutated[emotion] = wrong
        names.append(emotion)
    return mutated, tuple(names)


def build_preference_dataset(dataset: list[EmotionSample], label_set: LabelSet,
                             reps: int | None = None,
                             dist: MutationDistribution | None = None,
                             seed: int = 0) -> list[PreferencePair]:
    """reps mutated pairs per sample; duplicates across reps are permitted."""
    if not dataset:
        return []
    track = dataset[0].track
    if reps is None:
        reps = DEFAULT_REPS[track]
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if dist is None:
        dist = MutationDistribution.default()
    pairs = []
    for i, sample in enumerate(dataset):
        rng = np.random.default_rng(
            np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, i]))
        instance = render_sp(sample, label_set)
        gold = {e: sample.values[e] for e in label_set.emotions}
        for _ in range(reps):
            k = draw_mutation_count(dist, len(label_set), rng)
            rejected, names = mutate_labels(gold, track, k, rng)
            pairs.append(PreferencePair(
                prompt=instance.input_text,
                chosen=gold,
                rejected=rejected,
                mutated=names,
                chosen_text=instance.target_text,
                rejected_text=render_label_string(rejected, label_set),
                sample_id=sample.id))
    return pairs


def save_preferences(pairs: Iterable[PreferencePair], path: str | Path,
                     extra: dict | None = None) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        _write_header(fh, "preferences", extra)
        for p in pairs:
            fh.write(json.dumps({
                "prompt": p.prompt,
                "chosen": p.chosen_text,
                "rejected": p.rejected_text,
                "mutated": list(p.mutated),
                "meta": {"id": p.sample_id},
            }, sort_keys=True, ensure_ascii=False) + "\n")


def load_preferences(path: str | Path, label_set: LabelSet,
                     track: Track) -> list[PreferencePair]:
    from .templates import parse_sp_output

    pairs = []
    with Path(path).open(encoding="utf-8") as fh:
        _read_header(fh.readline(), "preferences")
        for line in fh:
            obj = json.loads(line)
            chosen = parse_sp_output(obj["chosen"], label_set, track)
            rejected = parse_sp_output(obj["rejected"], label_set, track)
            if not (chosen.ok and rejected.ok):
                raise ValueError(f"{path}: unparseable preference line")
            pairs.append(PreferencePair(
                prompt=obj["prompt"], chosen=chosen.values,
                rejected=rejected.values, mutated=tuple(obj["mutated"]),
                chosen_text=obj["chosen"], rejected_text=obj["rejected"],
                sample_id=obj.get("meta", {}).get("id", "")))
    return pairs
