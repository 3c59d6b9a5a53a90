"""Deterministic synthetic corpora for demos and toy-scale training runs.

Each active emotion contributes a cue token unique to its (emotion, level)
combination, so a unigram model can fit the data exactly.  Filler words add
shared, uninformative features.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .corpus import EmotionSample, LabelSet, Track

TOY_EMOTIONS = ("anger", "fear", "joy", "sadness", "surprise")

_FILLER = ("well", "i", "guess", "that", "was", "quite", "a", "day",
           "you", "know", "really", "something")

_LEVEL_PROBS = {
    Track.A: [0.6, 0.4],
    Track.B: [0.45, 0.2, 0.2, 0.15],
}


def toy_corpus(track: Track, n: int, seed: int = 0, language: str = "eng",
               id_prefix: str = "toy") -> tuple[list[EmotionSample], LabelSet]:
    """n separable samples over five emotions."""
    label_set = LabelSet(language=language, emotions=TOY_EMOTIONS)
    rng = np.random.default_rng(seed)
    probs = _LEVEL_PROBS[track]
    samples = []
    for i in range(n):
        values = {e: int(rng.choice(len(probs), p=probs))
                  for e in label_set.emotions}
        words = list(rng.choice(_FILLER, size=4))
        for e in label_set.emotions:
            if values[e] > 0:
                words.append(f"{e}cue{values[e]}")
        rng.shuffle(words)
        samples.append(EmotionSample(
            id=f"{id_prefix}_{i:04d}", language=language, track=track,
            text=" ".join(words), values=values))
    return samples, label_set


def write_corpus_csv(samples: list[EmotionSample], label_set: LabelSet,
                     path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "text", *label_set.emotions])
        for s in samples:
            writer.writerow([s.id, s.text,
                             *[s.values[e] for e in label_set.emotions]])
